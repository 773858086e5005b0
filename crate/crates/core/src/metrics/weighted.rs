use super::{MaskPair, EPS};

const KERNEL: usize = 7;
const SIGMA: f64 = 5.0;

/// For every pixel, the squared distance to the nearest foreground pixel of
/// `mask` and that pixel's index. Ties go to the smallest `(row, col)`.
/// Returns `None` when the mask is empty.
///
/// Column pass then row scan: within one column the nearest foreground row
/// is also the lexicographically smallest among equally near candidates
/// (the upper one wins), so minimising `(d², row, col)` over columns yields
/// the global answer in `O(rows · cols²)`.
pub fn nearest_foreground(mask: &[bool], rows: usize, cols: usize) -> Option<Vec<(u64, usize)>> {
    if !mask.iter().any(|&m| m) {
        return None;
    }
    const NONE: usize = usize::MAX;
    // near[r * cols + c]: nearest foreground row in column c for row r.
    let mut near = vec![NONE; rows * cols];
    for c in 0..cols {
        let mut last = NONE;
        for r in 0..rows {
            if mask[r * cols + c] {
                last = r;
            }
            near[r * cols + c] = last;
        }
        let mut next = NONE;
        for r in (0..rows).rev() {
            if mask[r * cols + c] {
                next = r;
            }
            let up = near[r * cols + c];
            if next != NONE && (up == NONE || next - r < r - up) {
                near[r * cols + c] = next;
            }
        }
    }
    let mut out = vec![(0u64, 0usize); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut best = (u64::MAX, usize::MAX, usize::MAX);
            for (cc, &rr) in near[r * cols..(r + 1) * cols].iter().enumerate() {
                if rr == NONE {
                    continue;
                }
                let (dr, dc) = (rr.abs_diff(r) as u64, cc.abs_diff(c) as u64);
                let cand = (dr * dr + dc * dc, rr, cc);
                if cand < best {
                    best = cand;
                }
            }
            out[r * cols + c] = (best.0, best.1 * cols + best.2);
        }
    }
    Some(out)
}

/// Normalised 7×7 Gaussian with σ = 5, entries below `eps · max` zeroed.
pub(crate) fn gaussian_kernel() -> [[f64; KERNEL]; KERNEL] {
    let m = (KERNEL as f64 - 1.0) / 2.0;
    let mut h = [[0.0; KERNEL]; KERNEL];
    for (i, row) in h.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (y, x) = (i as f64 - m, j as f64 - m);
            *v = (-(x * x + y * y) / (2.0 * SIGMA * SIGMA)).exp();
        }
    }
    let max = h.iter().flatten().copied().fold(0.0, f64::max);
    h.iter_mut().flatten().for_each(|v| {
        if *v < f64::EPSILON * max {
            *v = 0.0;
        }
    });
    let sum: f64 = h.iter().flatten().sum();
    h.iter_mut().flatten().for_each(|v| *v /= sum);
    h
}

// Zero-padded correlation with the (symmetric) Gaussian kernel.
fn smooth(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let half = KERNEL / 2;
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, krow) in k.iter().enumerate() {
                let Some(rr) = (r + i).checked_sub(half).filter(|&v| v < rows) else {
                    continue;
                };
                for (j, &w) in krow.iter().enumerate() {
                    if let Some(cc) = (c + j).checked_sub(half).filter(|&v| v < cols) {
                        acc += w * src[rr * cols + cc];
                    }
                }
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

/// Weighted F-measure (`β² = 1`).
///
/// Errors `|pred − gt|` are spread from each background pixel's nearest
/// foreground pixel, smoothed by the Gaussian dependency kernel (keeping the
/// smaller of raw and smoothed error on the foreground), and background
/// errors are amplified by `2 − exp(ln(0.5) / 5 · d)` with `d` the distance
/// to the object. An all-background label scores 0.
pub fn weighted_fbeta(pair: &MaskPair) -> f64 {
    let (rows, cols) = (pair.rows, pair.cols);
    let Some(nearest) = nearest_foreground(&pair.gt, rows, cols) else {
        return 0.0;
    };
    let err: Vec<f64> = pair
        .pred
        .iter()
        .zip(&pair.gt)
        .map(|(&p, &g)| (p - g as u8 as f64).abs())
        .collect();
    let spread: Vec<f64> = (0..err.len())
        .map(|i| if pair.gt[i] { err[i] } else { err[nearest[i].1] })
        .collect();
    let ea = smooth(&spread, rows, cols);
    let decay = 0.5f64.ln() / 5.0;
    let (mut fg_err, mut bg_err, mut fg) = (0.0, 0.0, 0usize);
    for i in 0..err.len() {
        if pair.gt[i] {
            fg_err += if ea[i] < err[i] { ea[i] } else { err[i] };
            fg += 1;
        } else {
            let d = (nearest[i].0 as f64).sqrt();
            bg_err += err[i] * (2.0 - (decay * d).exp());
        }
    }
    let tpw = fg as f64 - fg_err;
    let recall = 1.0 - fg_err / fg as f64;
    let precision = tpw / (tpw + bg_err + EPS);
    2.0 * recall * precision / (recall + precision + EPS)
}
