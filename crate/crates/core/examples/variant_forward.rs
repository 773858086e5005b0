//! Forward passes of the three variants and what each adds.

use samttt::model::{BoxPrompt, Model, ModelConfig, Variant};
use samttt::tensor::{prng_fill, Init};
use samttt::{Mode, Tensor};

fn main() -> samttt::Result<()> {
    let image: Tensor<f32> = prng_fill::<f32>(&[1, 3, 64, 64], 1, Init::Uniform(1.0)).map(|v| v.abs());
    let boxes = [BoxPrompt::new(0.25, 0.25, 0.75, 0.75)?];
    for v in Variant::ALL {
        let model = Model::<f32>::init(ModelConfig::new(v, 64, 16))?;
        let (trainable, frozen): (Vec<_>, Vec<_>) = model.params().into_iter().partition(|p| !p.frozen);
        let count = |ps: &[samttt::params::NamedParam<'_, f32>]| ps.iter().map(|p| p.tensor.numel()).sum::<usize>();
        let infer = model.forward(&image, &boxes, Mode::Infer)?;
        let train = model.forward(&image, &boxes, Mode::Train)?;
        println!(
            "{v}: {} trainable / {} frozen values, logits {:?}, train-vs-infer gap {:.4}",
            count(&trainable),
            count(&frozen),
            infer.shape(),
            train.max_abs_diff(&infer)?
        );
    }
    Ok(())
}
