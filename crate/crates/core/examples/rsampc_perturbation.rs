//! Frozen random conv stack: perturbs features in training, identity at inference.

use samttt::params::fingerprint;
use samttt::rsampc::{RsampcConfig, RsampcStack};
use samttt::tensor::{prng_fill, Init};
use samttt::{Mode, Tensor};

fn main() -> samttt::Result<()> {
    let x: Tensor<f32> = prng_fill(&[1, 16, 8, 8], 1, Init::Uniform(1.0));
    for depth in 1..=5 {
        for eps in [None, Some(0.1)] {
            let s = RsampcStack::<f32>::init(RsampcConfig { depth, channel_scale: eps, ..RsampcConfig::new(16, 42) })?;
            let before = fingerprint(&s.params());
            let y = s.apply(&x, Mode::Train)?;
            println!(
                "depth {depth} eps {:<4} widths {:?}: train change {:.4}, infer change {}, frozen {}",
                eps.map_or("none".into(), |e| e.to_string()),
                s.widths(),
                y.max_abs_diff(&x)?,
                s.apply(&x, Mode::Infer)?.max_abs_diff(&x)?,
                fingerprint(&s.params()) == before
            );
        }
    }
    Ok(())
}
