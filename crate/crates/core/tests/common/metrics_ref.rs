#![allow(clippy::needless_range_loop)]

//! Slow, direct implementations of the metrics used as test oracles. They
//! deliberately avoid the histogram, nearest-column and streaming tricks of
//! the library versions.

use samttt::metrics::MaskPair;

const EPS: f64 = f64::EPSILON;

type Mat = Vec<Vec<f64>>;

fn to_mats(pair: &MaskPair) -> (Mat, Mat) {
    let (r, c) = (pair.rows(), pair.cols());
    let pred = (0..r).map(|i| pair.pred()[i * c..(i + 1) * c].to_vec()).collect();
    let gt = (0..r)
        .map(|i| pair.gt()[i * c..(i + 1) * c].iter().map(|&g| if g { 1.0 } else { 0.0 }).collect())
        .collect();
    (pred, gt)
}

fn flat(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_ddof1(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn sub(m: &Mat, r0: usize, r1: usize, c0: usize, c1: usize) -> Mat {
    m[r0..r1].iter().map(|row| row[c0..c1].to_vec()).collect()
}

pub fn mae(pair: &MaskPair) -> f64 {
    let (p, g) = to_mats(pair);
    let d: Vec<f64> = flat(&p).iter().zip(flat(&g)).map(|(a, b)| (a - b).abs()).collect();
    mean(&d)
}

pub fn f_mean(pair: &MaskPair) -> f64 {
    let (p, g) = to_mats(pair);
    let (p, g) = (flat(&p), flat(&g));
    let m = mean(&p);
    if m == 0.0 {
        return 0.0;
    }
    let thr = if 2.0 * m > 1.0 { 1.0 } else { 2.0 * m };
    let bin: Vec<bool> = p.iter().map(|&v| v >= thr).collect();
    let tp = bin.iter().zip(&g).filter(|(&b, &t)| b && t == 1.0).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / bin.iter().filter(|&&b| b).count() as f64;
    let recall = tp / g.iter().filter(|&&t| t == 1.0).count() as f64;
    1.3 * precision * recall / (0.3 * precision + recall)
}

fn s_object(values: &[f64]) -> f64 {
    let x = mean(values);
    2.0 * x / (x * x + 1.0 + std_ddof1(values) + EPS)
}

fn ssim(pred: &Mat, gt: &Mat) -> f64 {
    let (p, g) = (flat(pred), flat(gt));
    let n = p.len() as f64;
    let (x, y) = (mean(&p), mean(&g));
    let d = (n - 1.0).max(1.0);
    let sx = p.iter().map(|v| (v - x).powi(2)).sum::<f64>() / d;
    let sy = g.iter().map(|v| (v - y).powi(2)).sum::<f64>() / d;
    let sxy = p.iter().zip(&g).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / d;
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn s_measure(pair: &MaskPair) -> f64 {
    let (p, g) = to_mats(pair);
    let (h, w) = (p.len(), p[0].len());
    let (pf, gf) = (flat(&p), flat(&g));
    let y = mean(&gf);
    if y == 0.0 {
        return 1.0 - mean(&pf);
    }
    if y == 1.0 {
        return mean(&pf);
    }
    let fg: Vec<f64> = pf.iter().zip(&gf).filter(|(_, &t)| t == 1.0).map(|(&v, _)| v).collect();
    let bg: Vec<f64> = pf.iter().zip(&gf).filter(|(_, &t)| t == 0.0).map(|(&v, _)| 1.0 - v).collect();
    let object = y * s_object(&fg) + (1.0 - y) * s_object(&bg);

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if g[i][j] == 1.0 {
                rows.push(i as f64);
                cols.push(j as f64);
            }
        }
    }
    let cx = mean(&cols).round_ties_even() as usize + 1;
    let cy = mean(&rows).round_ties_even() as usize + 1;
    let area = (h * w) as f64;
    let quads = [(0, cy, 0, cx), (0, cy, cx, w), (cy, h, 0, cx), (cy, h, cx, w)];
    let mut region = 0.0;
    for (r0, r1, c0, c1) in quads {
        if r1 <= r0 || c1 <= c0 {
            continue;
        }
        let weight = ((r1 - r0) * (c1 - c0)) as f64 / area;
        region += weight * ssim(&sub(&p, r0, r1, c0, c1), &sub(&g, r0, r1, c0, c1));
    }
    let s = 0.5 * object + 0.5 * region;
    if s < 0.0 {
        0.0
    } else {
        s
    }
}

/// Per-threshold enhanced-alignment scores, computed pixel by pixel.
pub fn e_scores(pair: &MaskPair) -> Vec<f64> {
    let (p, g) = to_mats(pair);
    let (pf, gf) = (flat(&p), flat(&g));
    let n = pf.len() as f64;
    let gt_sum: f64 = gf.iter().sum();
    (1..=256)
        .map(|k| {
            let t = k as f64 / 256.0;
            let bin: Vec<f64> = pf.iter().map(|&v| if v >= t { 1.0 } else { 0.0 }).collect();
            let enhanced: Vec<f64> = if gt_sum == 0.0 {
                bin.iter().map(|b| 1.0 - b).collect()
            } else if gt_sum == n {
                bin.clone()
            } else {
                let (mb, mg) = (mean(&bin), mean(&gf));
                bin.iter()
                    .zip(&gf)
                    .map(|(b, t)| {
                        let (a, c) = (b - mb, t - mg);
                        let align = 2.0 * a * c / (a * a + c * c + EPS);
                        (align + 1.0).powi(2) / 4.0
                    })
                    .collect()
            };
            enhanced.iter().sum::<f64>() / n
        })
        .collect()
}

pub fn e_measure(pair: &MaskPair) -> (f64, f64) {
    let s = e_scores(pair);
    (mean(&s), s.iter().copied().fold(f64::MIN, f64::max))
}

/// Brute-force nearest foreground pixel: smallest `(d², row, col)`.
pub fn nearest(pair: &MaskPair) -> Vec<(f64, usize, usize)> {
    let (r, c) = (pair.rows(), pair.cols());
    let fg: Vec<(usize, usize)> = (0..r * c).filter(|&i| pair.gt()[i]).map(|i| (i / c, i % c)).collect();
    (0..r * c)
        .map(|i| {
            let (y, x) = (i / c, i % c);
            let mut best = (f64::INFINITY, 0, 0);
            for &(fy, fx) in &fg {
                let d2 = (fy as f64 - y as f64).powi(2) + (fx as f64 - x as f64).powi(2);
                if d2 < best.0 || (d2 == best.0 && (fy, fx) < (best.1, best.2)) {
                    best = (d2, fy, fx);
                }
            }
            best
        })
        .collect()
}

pub fn weighted_fbeta(pair: &MaskPair) -> f64 {
    let (p, g) = to_mats(pair);
    let (h, w) = (p.len(), p[0].len());
    if flat(&g).iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let near = nearest(pair);
    let e: Mat = (0..h).map(|i| (0..w).map(|j| (p[i][j] - g[i][j]).abs()).collect()).collect();
    let mut et = e.clone();
    for i in 0..h {
        for j in 0..w {
            if g[i][j] == 0.0 {
                let (_, fy, fx) = near[i * w + j];
                et[i][j] = e[fy][fx];
            }
        }
    }
    // 7×7 Gaussian, σ = 5, normalised.
    let mut k = [[0.0f64; 7]; 7];
    let mut total = 0.0;
    for (a, row) in k.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (a as f64 - 3.0, b as f64 - 3.0);
            *v = (-(dx * dx + dy * dy) / 50.0).exp();
            total += *v;
        }
    }
    // Zero-padded copy, then a plain window sum.
    let mut padded = vec![vec![0.0; w + 6]; h + 6];
    for i in 0..h {
        for j in 0..w {
            padded[i + 3][j + 3] = et[i][j];
        }
    }
    let mut ea = vec![vec![0.0; w]; h];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for a in 0..7 {
                for b in 0..7 {
                    acc += k[a][b] / total * padded[i + a][j + b];
                }
            }
            ea[i][j] = acc;
        }
    }
    let (mut tp_loss, mut fp, mut count) = (0.0, 0.0, 0.0);
    for i in 0..h {
        for j in 0..w {
            if g[i][j] == 1.0 {
                tp_loss += if ea[i][j] < e[i][j] { ea[i][j] } else { e[i][j] };
                count += 1.0;
            } else {
                let d = near[i * w + j].0.sqrt();
                let b = 2.0 - ((1.0f64 - 0.5).ln() / 5.0 * d).exp();
                fp += e[i][j] * b;
            }
        }
    }
    let tpw = count - tp_loss;
    let r = 1.0 - tp_loss / count;
    let pr = tpw / (tpw + fp + EPS);
    2.0 * r * pr / (r + pr + EPS)
}
