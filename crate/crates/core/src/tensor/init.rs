use super::{Real, Tensor};
use crate::rng::Prng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `(-k, k)` with `k = 1 / sqrt(fan_in)`, where `fan_in` is
    /// the product of all extents after the first.
    UniformKaiming,
    /// Uniform on `(-bound, bound)`.
    Uniform(f64),
    Zeros,
    Ones,
}

pub fn fan_in(shape: &[usize]) -> usize {
    shape.iter().skip(1).product::<usize>().max(1)
}

/// Deterministically initialised tensor: the same `(shape, seed, init)`
/// always produces bit-identical values.
pub fn prng_fill<F: Real>(shape: &[usize], seed: u64, init: Init) -> Tensor<F> {
    let n: usize = shape.iter().product();
    let bound = match init {
        Init::Zeros => return Tensor::zeros(shape.to_vec()),
        Init::Ones => return Tensor::full(shape.to_vec(), F::one()),
        Init::UniformKaiming => 1.0 / (fan_in(shape) as f64).sqrt(),
        Init::Uniform(b) => b,
    };
    let mut rng = Prng::new(seed);
    let data = (0..n)
        .map(|_| F::from_f64(rng.uniform(-bound, bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}
