//! TTT-Linear over a token sequence: the hidden state is a linear map
//! trained online on each mini-batch.

use samttt::rng::Prng;
use samttt::ttt::{inner_loss, ttt_forward, TttConfig, ViewProjections};
use samttt::Tensor;

fn main() -> samttt::Result<()> {
    let (t, c) = (32, 8);
    let mut rng = Prng::new(1);
    let seq = Tensor::new([t, c], (0..t * c).map(|_| rng.normal()).collect())?;
    let proj = ViewProjections::<f64>::init(c, 2);
    let w0 = Tensor::zeros([c, c]);

    for (eta, b) in [(0.0, 4), (0.02, 1), (0.02, 4), (0.02, 32)] {
        let cfg = TttConfig { inner_lr: eta, mini_batch: b, ..TttConfig::new(c) };
        let out = ttt_forward(&seq, &proj, &cfg, &w0)?;
        let x = &seq.data()[..c];
        println!(
            "eta {eta:<5} b {b:>2}: {:>2} updates, |W| {:.4}, inner loss on token 0 {:.4}",
            out.updates,
            out.state.weight.sum_sq().sqrt(),
            inner_loss(&out.state.weight, x, x)
        );
    }
    Ok(())
}
