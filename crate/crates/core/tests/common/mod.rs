#![allow(dead_code)]

pub mod gradcheck;
pub mod metrics_ref;
pub mod reference_tables;

use samttt::metrics::MaskPair;
use samttt::rng::Prng;

/// Random `rows × cols` pair: a few rectangles (or noise) as ground truth,
/// predictions continuous, 8-bit quantised, or binary.
pub fn random_pair(rng: &mut Prng, rows: usize, cols: usize) -> MaskPair {
    let n = rows * cols;
    let mut gt = vec![false; n];
    match rng.below(6) {
        0 => {}
        1 => gt.iter_mut().for_each(|g| *g = true),
        2 => gt.iter_mut().for_each(|g| *g = rng.next_f64() < 0.3),
        _ => {
            for _ in 0..1 + rng.below(3) {
                let (r0, c0) = (rng.below(rows), rng.below(cols));
                let (r1, c1) = (r0 + 1 + rng.below(rows - r0), c0 + 1 + rng.below(cols - c0));
                for r in r0..r1 {
                    for c in c0..c1 {
                        gt[r * cols + c] = true;
                    }
                }
            }
        }
    }
    let pred: Vec<f64> = match rng.below(4) {
        0 => (0..n).map(|_| rng.next_f64()).collect(),
        1 => (0..n).map(|_| rng.below(256) as f64 / 255.0).collect(),
        2 => gt
            .iter()
            .map(|&g| if rng.next_f64() < 0.15 { (!g) as u8 as f64 } else { g as u8 as f64 })
            .collect(),
        _ => gt
            .iter()
            .map(|&g| (0.6 * g as u8 as f64 + 0.4 * rng.next_f64()).min(1.0))
            .collect(),
    };
    MaskPair::new(rows, cols, pred, gt).unwrap()
}
