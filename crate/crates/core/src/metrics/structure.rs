use super::{MaskPair, EPS};

/// Weight of the object-aware term.
pub const S_ALPHA: f64 = 0.5;

// Mean and sample standard deviation (n - 1 denominator, 0 below two values).
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (sum, n) = values.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn object_similarity(mean: f64, std: f64) -> f64 {
    2.0 * mean / (mean * mean + 1.0 + std + EPS)
}

fn object_score(pair: &MaskPair) -> f64 {
    let u = pair.gt_count() as f64 / pair.len() as f64;
    let fg = pair.pred.iter().zip(&pair.gt).filter(|(_, &g)| g).map(|(&p, _)| p);
    let bg = pair.pred.iter().zip(&pair.gt).filter(|(_, &g)| !g).map(|(&p, _)| 1.0 - p);
    let (fm, fs) = mean_std(fg);
    let (bm, bs) = mean_std(bg);
    u * object_similarity(fm, fs) + (1.0 - u) * object_similarity(bm, bs)
}

/// Split point `(col, row)`: the ground-truth centroid rounded half-to-even,
/// plus one. An empty mask splits at the image centre.
pub(crate) fn centroid(pair: &MaskPair) -> (usize, usize) {
    let (rows, cols) = (pair.rows, pair.cols);
    let n = pair.gt_count();
    if n == 0 {
        return (
            (cols as f64 / 2.0).round_ties_even() as usize + 1,
            (rows as f64 / 2.0).round_ties_even() as usize + 1,
        );
    }
    let (mut sr, mut sc) = (0.0, 0.0);
    for (i, _) in pair.gt.iter().enumerate().filter(|(_, &g)| g) {
        sr += (i / cols) as f64;
        sc += (i % cols) as f64;
    }
    (
        (sc / n as f64).round_ties_even() as usize + 1,
        (sr / n as f64).round_ties_even() as usize + 1,
    )
}

// Structural similarity of one rectangular block, `None` when it is empty.
fn block_ssim(pair: &MaskPair, r0: usize, r1: usize, c0: usize, c1: usize) -> Option<f64> {
    let n = (r1 - r0) * (c1 - c0);
    if n == 0 {
        return None;
    }
    let idx = (r0..r1).flat_map(move |r| (c0..c1).map(move |c| r * pair.cols + c));
    let (mut sp, mut sg) = (0.0, 0.0);
    for i in idx.clone() {
        sp += pair.pred[i];
        sg += pair.gt[i] as u8 as f64;
    }
    let (x, y) = (sp / n as f64, sg / n as f64);
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for i in idx {
        let (dp, dg) = (pair.pred[i] - x, pair.gt[i] as u8 as f64 - y);
        vx += dp * dp;
        vy += dg * dg;
        cxy += dp * dg;
    }
    let denom = (n.max(2) - 1) as f64;
    let (vx, vy, cxy) = (vx / denom, vy / denom, cxy / denom);
    let alpha = 4.0 * x * y * cxy;
    let beta = (x * x + y * y) * (vx + vy);
    Some(if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    })
}

fn region_score(pair: &MaskPair) -> f64 {
    let (rows, cols) = (pair.rows, pair.cols);
    let (x, y) = centroid(pair);
    let (x, y) = (x.min(cols), y.min(rows));
    let area = (rows * cols) as f64;
    let blocks = [
        (0, y, 0, x),
        (0, y, x, cols),
        (y, rows, 0, x),
        (y, rows, x, cols),
    ];
    blocks
        .iter()
        .filter_map(|&(r0, r1, c0, c1)| {
            let w = ((r1 - r0) * (c1 - c0)) as f64 / area;
            block_ssim(pair, r0, r1, c0, c1).map(|s| w * s)
        })
        .sum()
}

/// Structure measure: `alpha · S_object + (1 − alpha) · S_region`, floored at 0.
///
/// An all-background ground truth scores `1 − mean(pred)`, an
/// all-foreground one `mean(pred)`.
pub fn s_measure(pair: &MaskPair, alpha: f64) -> f64 {
    let y = pair.gt_count() as f64 / pair.len() as f64;
    let mean_pred = pair.pred.iter().sum::<f64>() / pair.len() as f64;
    if y == 0.0 {
        return 1.0 - mean_pred;
    }
    if y == 1.0 {
        return mean_pred;
    }
    (alpha * object_score(pair) + (1.0 - alpha) * region_score(pair)).max(0.0)
}
