//! Detail-band tokens through TTT-Linear and back onto the embedding grid.

use samttt::tensor::{prng_fill, Init};
use samttt::ttt::TttConfig;
use samttt::tvm::{Subbands, TvmRoute};
use samttt::Tensor;

fn main() -> samttt::Result<()> {
    let c = 16;
    let em: Tensor<f32> = prng_fill(&[2, c, 16, 16], 5, Init::Uniform(1.0));
    for subbands in [Subbands::Diagonal, Subbands::AllDetail] {
        let mut route = TvmRoute::<f32>::init(TttConfig { inner_lr: 0.01, ..TttConfig::new(c) }, 9)?;
        route.subbands = subbands;
        let tokens = route.tokens(&em)?;
        let out = route.apply(&em)?;
        println!("{subbands}: tokens {:?}, output {:?}, rms {:.4}", tokens.shape(), out.shape(), (out.sum_sq() / out.numel() as f32).sqrt());
    }
    let frozen = TvmRoute::<f32>::init(TttConfig { inner_lr: 0.0, ..TttConfig::new(c) }, 9)?;
    println!("eta 0 with zero initial state: max |out| {}", frozen.apply(&em)?.data().iter().fold(0.0f32, |m, v| m.max(v.abs())));
    Ok(())
}
