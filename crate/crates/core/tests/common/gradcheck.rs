//! Central-difference check of train-step gradients on a tiny 64-bit model.

use samttt::model::{Batch, FrozenFeatures, Model, ModelConfig, Variant};
use samttt::rng::Prng;
use samttt::tensor::Tensor;
use samttt::Mode;

pub fn tiny_batch(size: usize, seed: u64) -> Batch<f64> {
    let mut rng = Prng::new(seed);
    let b = 2;
    let images: Vec<f64> = (0..b * 3 * size * size).map(|_| rng.next_f64()).collect();
    let mut masks = vec![0.0; b * size * size];
    for (i, m) in masks.iter_mut().enumerate() {
        let (r, c) = ((i / size) % size, i % size);
        let lo = size / 4 + i / (size * size);
        if (lo..size - size / 4).contains(&r) && (lo..size - 2).contains(&c) {
            *m = 1.0;
        }
    }
    Batch::new(
        Tensor::new([b, 3, size, size], images).unwrap(),
        Tensor::new([b, 1, size, size], masks).unwrap(),
    )
    .unwrap()
}

pub struct GradCheck {
    pub entries: usize,
    /// Worst relative error over every trainable entry.
    pub worst: f64,
    pub worst_at: String,
}

/// Relative error of each analytic gradient entry against a central
/// difference with step 1e-6. The denominator is floored at 1e-5, below
/// which the difference is dominated by rounding in the loss.
pub fn check_variant(variant: Variant, size: usize) -> GradCheck {
    let mut cfg = ModelConfig::new(variant, size, 4);
    cfg.ttt.inner_lr = 0.2;
    cfg.ttt.mini_batch = 2;
    cfg.seed = 11;
    let mut model = Model::<f64>::init(cfg).unwrap();
    // Nudge the zero-initialised box parameters so their paths are exercised.
    let mut rng = Prng::new(3);
    for (_, t) in model.trainable_mut() {
        for v in t.data_mut() {
            *v += 0.05 * rng.normal();
        }
    }
    let batch = tiny_batch(size, 5);
    let feats = FrozenFeatures::compute(&model, &batch.images, Mode::Train).unwrap();
    let (_, grads) = model.loss_and_grads(&feats, &batch.masks, &batch.boxes).unwrap();

    let names: Vec<String> = model.clone().trainable_mut().iter().map(|(n, _)| n.to_string()).collect();
    if variant == Variant::M3 {
        assert!(names.iter().any(|n| n.starts_with("tvm.")));
    }
    let h = 1e-6;
    let mut out = GradCheck { entries: 0, worst: 0.0, worst_at: String::new() };
    for name in &names {
        let an = &grads[name];
        for idx in 0..an.numel() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                for (n, t) in m.trainable_mut() {
                    if n == name {
                        t.data_mut()[idx] += delta;
                    }
                }
                m.loss_and_grads(&feats, &batch.masks, &batch.boxes).unwrap().0.loss
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let a = an.data()[idx];
            let err = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-5);
            out.entries += 1;
            if err > out.worst {
                out.worst = err;
                out.worst_at = format!("{name}[{idx}]: fd {fd:e} vs analytic {a:e}");
            }
        }
    }
    out
}
