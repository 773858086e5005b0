//! Orthonormal Haar DWT: subband energies and exact reconstruction.

use samttt::tensor::{prng_fill, Init};
use samttt::tvm::{haar_dwt2d, haar_idwt2d};
use samttt::Tensor;

fn main() -> samttt::Result<()> {
    let x: Tensor<f64> = prng_fill(&[1, 1, 32, 32], 3, Init::Uniform(1.0));
    let b = haar_dwt2d(&x)?;
    for (name, band) in [("ll", &b.ll), ("lh", &b.lh), ("hl", &b.hl), ("hh", &b.hh)] {
        println!("{name} {:?} energy {:.3}", band.shape(), band.sum_sq());
    }
    println!("input energy {:.3}, subband total {:.3}", x.sum_sq(), b.energy());
    println!("reconstruction error {:.2e}", haar_idwt2d(&b)?.max_abs_diff(&x)?);

    let flat = haar_dwt2d(&Tensor::<f64>::full([1, 1, 8, 8], 0.5))?;
    println!("constant input: max |hh| {}", flat.hh.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    Ok(())
}
