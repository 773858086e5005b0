use super::{MaskPair, EPS};

/// Number of binarisation thresholds, `t_i = (i + 1) / 256` for `i < 256`.
pub const E_THRESHOLDS: usize = 256;

// Enhanced alignment of one pixel class given demeaned prediction and label.
fn enhanced(a: f64, b: f64) -> f64 {
    let align = 2.0 * a * b / (a * a + b * b + EPS);
    (align + 1.0) * (align + 1.0) / 4.0
}

/// Enhanced-alignment score of the binary prediction with `pred_fg`
/// foreground pixels, `tp` of which are labelled foreground.
fn score_at(n: usize, gt_fg: usize, pred_fg: usize, tp: usize) -> f64 {
    if gt_fg == 0 {
        return (n - pred_fg) as f64 / n as f64;
    }
    if gt_fg == n {
        return pred_fg as f64 / n as f64;
    }
    let fp = pred_fg - tp;
    let fneg = gt_fg - tp;
    let tn = n - pred_fg - fneg;
    let mp = pred_fg as f64 / n as f64;
    let mg = gt_fg as f64 / n as f64;
    let sum = tp as f64 * enhanced(1.0 - mp, 1.0 - mg)
        + fp as f64 * enhanced(1.0 - mp, -mg)
        + fneg as f64 * enhanced(-mp, 1.0 - mg)
        + tn as f64 * enhanced(-mp, -mg);
    sum / n as f64
}

/// Enhanced-alignment measure over 256 thresholds: `(mean, max)`.
///
/// At each threshold the prediction is binarised with `pred >= t`. Degenerate
/// labels score the fraction of pixels the prediction gets right: an
/// all-background label gives `1 − mean(binary pred)`, an all-foreground label
/// `mean(binary pred)`.
pub fn e_measure(pair: &MaskPair) -> (f64, f64) {
    let n = pair.len();
    let gt_fg = pair.gt_count();
    // Bin j collects predictions with floor(256 · p) == j; p = 1 lands in bin 256.
    let mut hist_fg = [0usize; E_THRESHOLDS + 1];
    let mut hist_bg = [0usize; E_THRESHOLDS + 1];
    for (&p, &g) in pair.pred.iter().zip(&pair.gt) {
        let bin = ((p * E_THRESHOLDS as f64).floor() as usize).min(E_THRESHOLDS);
        if g {
            hist_fg[bin] += 1;
        } else {
            hist_bg[bin] += 1;
        }
    }
    // p >= (i + 1) / 256  <=>  floor(256 p) >= i + 1, since scaling by 256 is exact.
    let (mut tp, mut pred_fg) = (0usize, 0usize);
    let mut scores = [0.0; E_THRESHOLDS];
    for i in (0..E_THRESHOLDS).rev() {
        tp += hist_fg[i + 1];
        pred_fg += hist_fg[i + 1] + hist_bg[i + 1];
        scores[i] = score_at(n, gt_fg, pred_fg, tp);
    }
    let mean = scores.iter().sum::<f64>() / E_THRESHOLDS as f64;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, max)
}
