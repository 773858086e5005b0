//! Camouflaged-object-detection metrics: MAE, S-measure, E-measure (mean and
//! max over thresholds), weighted F-measure and adaptive-threshold F-measure.
//!
//! Predictions are clamped to `[0, 1]`; ground truth is binary. Every metric
//! returns a value in `[0, 1]` and accumulates in `f64`.

mod alignment;
mod structure;
mod weighted;

pub use alignment::{e_measure, E_THRESHOLDS};
pub use structure::{s_measure, S_ALPHA};
pub use weighted::{nearest_foreground, weighted_fbeta};

use crate::error::{shape_err, Error, Result};
use crate::tensor::Real;

/// Machine epsilon of `f64`, the guard constant used by the metric formulas.
pub const EPS: f64 = f64::EPSILON;

/// `β²` of the adaptive F-measure.
pub const F_BETA2: f64 = 0.3;

/// A prediction in `[0, 1]` and a binary ground truth of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    rows: usize,
    cols: usize,
    pred: Vec<f64>,
    gt: Vec<bool>,
}

impl MaskPair {
    /// Predictions are clamped to `[0, 1]`; non-finite values are rejected.
    pub fn new(rows: usize, cols: usize, pred: Vec<f64>, gt: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || pred.len() != rows * cols || gt.len() != rows * cols {
            return Err(shape_err!(
                "mask pair {rows}x{cols} with {} predictions and {} labels",
                pred.len(),
                gt.len()
            ));
        }
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prediction mask".into()));
        }
        let pred = pred.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { rows, cols, pred, gt })
    }

    /// Planes of any float type; ground truth is `gt > 0.5`.
    pub fn from_planes<F: Real>(rows: usize, cols: usize, pred: &[F], gt: &[F]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            pred.iter().map(|v| v.as_f64()).collect(),
            gt.iter().map(|v| v.as_f64() > 0.5).collect(),
        )
    }

    /// 8-bit masks: prediction `v / 255`, ground truth `v >= 128`.
    pub fn from_u8(rows: usize, cols: usize, pred: &[u8], gt: &[u8]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            pred.iter().map(|&v| v as f64 / 255.0).collect(),
            gt.iter().map(|&v| v >= 128).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pred(&self) -> &[f64] {
        &self.pred
    }

    pub fn gt(&self) -> &[bool] {
        &self.gt
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }

    pub fn gt_count(&self) -> usize {
        self.gt.iter().filter(|&&g| g).count()
    }
}

/// Mean absolute error.
pub fn mae(pair: &MaskPair) -> f64 {
    let sum: f64 = pair
        .pred
        .iter()
        .zip(&pair.gt)
        .map(|(&p, &g)| (p - g as u8 as f64).abs())
        .sum();
    sum / pair.len() as f64
}

/// F-measure (`β² = 0.3`) after binarising at `min(2 · mean(pred), 1)`.
///
/// An all-zero prediction scores 0, as does an empty intersection.
pub fn f_mean(pair: &MaskPair) -> f64 {
    let mean = pair.pred.iter().sum::<f64>() / pair.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let thr = (2.0 * mean).min(1.0);
    let (mut inter, mut predicted) = (0usize, 0usize);
    for (&p, &g) in pair.pred.iter().zip(&pair.gt) {
        if p >= thr {
            predicted += 1;
            inter += g as usize;
        }
    }
    if inter == 0 {
        return 0.0;
    }
    let precision = inter as f64 / predicted as f64;
    let recall = inter as f64 / pair.gt_count() as f64;
    (1.0 + F_BETA2) * precision * recall / (F_BETA2 * precision + recall)
}

/// All six metrics for one image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub s_alpha: f64,
    pub f_beta_w: f64,
    pub e_phi_mean: f64,
    pub e_phi_max: f64,
    pub f_mean: f64,
    pub mae: f64,
}

impl MetricReport {
    pub const COLUMNS: [&'static str; 6] = ["s_alpha", "f_beta_w", "e_phi_mean", "e_phi_max", "f_mean", "mae"];

    pub fn values(&self) -> [f64; 6] {
        [self.s_alpha, self.f_beta_w, self.e_phi_mean, self.e_phi_max, self.f_mean, self.mae]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Self {
            s_alpha: v[0],
            f_beta_w: v[1],
            e_phi_mean: v[2],
            e_phi_max: v[3],
            f_mean: v[4],
            mae: v[5],
        }
    }
}

pub fn evaluate(pair: &MaskPair) -> MetricReport {
    let (e_phi_mean, e_phi_max) = e_measure(pair);
    MetricReport {
        s_alpha: s_measure(pair, S_ALPHA),
        f_beta_w: weighted_fbeta(pair),
        e_phi_mean,
        e_phi_max,
        f_mean: f_mean(pair),
        mae: mae(pair),
    }
}

/// Sum in ascending order, which makes the result independent of the
/// order the values arrived in.
pub fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// Arithmetic mean of every column over images, independent of input order.
pub fn aggregate(reports: &[MetricReport]) -> Option<MetricReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mut out = [0.0; 6];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut col: Vec<f64> = reports.iter().map(|r| r.values()[k]).collect();
        *slot = sorted_sum(&mut col) / n;
    }
    Some(MetricReport::from_values(out))
}
