//! Grouped dilated convolution, instance norm and seeded initialisation.

use samttt::tensor::{conv2d, instance_norm, prng_fill, ConvSpec, Init, DEFAULT_EPS};
use samttt::Tensor;

fn main() -> samttt::Result<()> {
    let ones = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
    let k = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
    let y = conv2d(&ones, &k, None, &ConvSpec::new(1, 1, 3))?;
    println!("box filter on ones: centre {} corner {}", y.at4(0, 0, 1, 1), y.at4(0, 0, 0, 0));

    let x: Tensor<f32> = prng_fill(&[2, 8, 16, 16], 7, Init::Uniform(1.0));
    let spec = ConvSpec::new(8, 8, 3).groups(4).dilation(2);
    let w: Tensor<f32> = prng_fill(&spec.weight_shape(), 8, Init::UniformKaiming);
    let y = conv2d(&x, &w, None, &spec)?;
    println!("grouped dilated conv {:?} -> {:?}", x.shape(), y.shape());

    let (gamma, beta) = (Tensor::full([8], 1.0f32), Tensor::zeros([8]));
    let n = instance_norm(&y, &gamma, &beta, DEFAULT_EPS as f32)?;
    let plane = n.plane(0, 0);
    let mean = plane.iter().sum::<f32>() / plane.len() as f32;
    let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / plane.len() as f32;
    println!("instance norm plane: mean {mean:.2e} var {var:.4}");
    Ok(())
}
