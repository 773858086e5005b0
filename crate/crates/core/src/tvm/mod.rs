//! T-visioner route: diagonal high-frequency content of the embedding is
//! scanned into a token sequence, processed by a TTT-Linear layer and
//! mapped back onto the embedding grid.
//!
//! ```text
//! em [B,C,R,W] -> Haar hh [B,C,R/2,W/2] -> tokens [B,T,C] + ramp
//!              -> TTT-Linear -> [B,C,R/2,W/2] -> bilinear -> [B,C,R,W]
//! ```

mod haar;

pub use haar::{haar_dwt2d, haar_idwt2d, DwtSubbands};

use crate::error::{config_err, shape_err, Result};
use crate::params::NamedParam;
use crate::rng::Prng;
use crate::tensor::{resize_bilinear, resize_bilinear_backward, Real, Tensor};
use crate::ttt::{ttt_backward, ttt_forward, TttConfig, ViewProjections};

/// `[B, C, R, W]` to `[B, R*W, C]` with a row-major spatial scan.
pub fn seq_flatten<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let (b, c, rows, cols) = x.dims4()?;
    let t = rows * cols;
    let mut out = vec![F::zero(); x.numel()];
    for bi in 0..b {
        for ci in 0..c {
            for (p, &v) in x.plane(bi, ci).iter().enumerate() {
                out[(bi * t + p) * c + ci] = v;
            }
        }
    }
    Tensor::new([b, t, c], out)
}

/// Inverse of [`seq_flatten`].
pub fn seq_unflatten<F: Real>(s: &Tensor<F>, rows: usize, cols: usize) -> Result<Tensor<F>> {
    let [b, t, c] = s.shape() else {
        return Err(shape_err!("expected a [B, T, C] sequence, got {:?}", s.shape()));
    };
    let (b, t, c) = (*b, *t, *c);
    if t != rows * cols {
        return Err(shape_err!("sequence length {t} cannot fill a {rows}x{cols} grid"));
    }
    let mut out = Tensor::zeros([b, c, rows, cols]);
    for bi in 0..b {
        for ci in 0..c {
            let plane = out.plane_mut(bi, ci);
            for (p, v) in plane.iter_mut().enumerate() {
                *v = s.data()[(bi * t + p) * c + ci];
            }
        }
    }
    Ok(out)
}

/// Token positions `0, 1, ..., T-1` scaled to `[0, 1]`. A single token gets 0.
pub fn pos_encoding<F: Real>(t: usize) -> Vec<F> {
    if t <= 1 {
        return vec![F::zero(); t];
    }
    let denom = (t - 1) as f64;
    (0..t).map(|i| F::from_f64(i as f64 / denom)).collect()
}

/// Which detail subbands feed the sequence stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Subbands {
    #[default]
    Diagonal,
    /// `lh + hl + hh`.
    AllDetail,
}

impl std::str::FromStr for Subbands {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hh" | "diagonal" => Ok(Self::Diagonal),
            "all" | "detail" => Ok(Self::AllDetail),
            _ => Err(config_err!("unknown subband selection {s:?}")),
        }
    }
}

impl std::fmt::Display for Subbands {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Diagonal => "hh",
            Self::AllDetail => "all",
        })
    }
}

/// Parameters of the route: view projections, the initial hidden state and
/// the layer configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TvmRoute<F: Real> {
    pub proj: ViewProjections<F>,
    pub w0: Tensor<F>,
    pub ttt: TttConfig,
    pub subbands: Subbands,
}

#[derive(Debug, Clone)]
pub struct TvmGrads<F: Real> {
    pub theta_k: Tensor<F>,
    pub theta_v: Tensor<F>,
    pub theta_q: Tensor<F>,
}

pub const THETA_K: &str = "tvm.theta_k";
pub const THETA_V: &str = "tvm.theta_v";
pub const THETA_Q: &str = "tvm.theta_q";
pub const W0: &str = "tvm.w0";

impl<F: Real> TvmRoute<F> {
    /// Kaiming-initialised projections and a zero initial state.
    pub fn init(ttt: TttConfig, seed: u64) -> Result<Self> {
        ttt.validate()?;
        Ok(Self {
            proj: ViewProjections::init(ttt.dim, Prng::derive_seed(seed, "tvm")),
            w0: Tensor::zeros([ttt.dim, ttt.dim]),
            ttt,
            subbands: Subbands::Diagonal,
        })
    }

    pub fn params(&self) -> Vec<NamedParam<'_, F>> {
        vec![
            NamedParam { name: THETA_K, tensor: &self.proj.theta_k, frozen: false },
            NamedParam { name: THETA_V, tensor: &self.proj.theta_v, frozen: false },
            NamedParam { name: THETA_Q, tensor: &self.proj.theta_q, frozen: false },
            NamedParam { name: W0, tensor: &self.w0, frozen: true },
        ]
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        match name {
            THETA_K => Some(&mut self.proj.theta_k),
            THETA_V => Some(&mut self.proj.theta_v),
            THETA_Q => Some(&mut self.proj.theta_q),
            W0 => Some(&mut self.w0),
            _ => None,
        }
    }

    /// Detail subband(s) as `[B, T, C]` tokens with the position ramp added.
    pub fn tokens(&self, em: &Tensor<F>) -> Result<Tensor<F>> {
        let (_, c, _, _) = em.dims4()?;
        if c != self.ttt.dim {
            return Err(shape_err!("TVM built for {} channels, got {c}", self.ttt.dim));
        }
        let bands = haar_dwt2d(em)?;
        let detail = match self.subbands {
            Subbands::Diagonal => bands.hh,
            Subbands::AllDetail => bands.lh.add(&bands.hl)?.add(&bands.hh)?,
        };
        let mut seq = seq_flatten(&detail)?;
        let t = seq.shape()[1];
        let ramp = pos_encoding::<F>(t);
        for (i, token) in seq.data_mut().chunks_exact_mut(c).enumerate() {
            let p = ramp[i % t];
            token.iter_mut().for_each(|v| *v += p);
        }
        Ok(seq)
    }

    fn sequences(&self, seq: &Tensor<F>) -> Result<Vec<Tensor<F>>> {
        let (t, c) = (seq.shape()[1], seq.shape()[2]);
        seq.data()
            .chunks_exact(t * c)
            .map(|chunk| Tensor::new([t, c], chunk.to_vec()))
            .collect()
    }

    /// Forward pass; the output has the shape of `em`.
    pub fn apply(&self, em: &Tensor<F>) -> Result<Tensor<F>> {
        let (_, _, rows, cols) = em.dims4()?;
        let seq = self.tokens(em)?;
        let mut out = Vec::with_capacity(seq.numel());
        for s in self.sequences(&seq)? {
            out.extend(ttt_forward(&s, &self.proj, &self.ttt, &self.w0)?.output.into_data());
        }
        let out = Tensor::new(seq.shape().to_vec(), out)?;
        let grid = seq_unflatten(&out, rows / 2, cols / 2)?;
        resize_bilinear(&grid, (rows, cols))
    }

    /// Gradients of the projections given `grad_out = dL/d apply(em)`.
    pub fn backward(&self, em: &Tensor<F>, grad_out: &Tensor<F>) -> Result<TvmGrads<F>> {
        em.expect_same_shape(grad_out)?;
        let (_, _, rows, cols) = em.dims4()?;
        let seq = self.tokens(em)?;
        let g_grid = resize_bilinear_backward(grad_out, (rows / 2, cols / 2))?;
        let g_seq = seq_flatten(&g_grid)?;
        let c = self.ttt.dim;
        let mut grads = TvmGrads {
            theta_k: Tensor::zeros([c, c]),
            theta_v: Tensor::zeros([c, c]),
            theta_q: Tensor::zeros([c, c]),
        };
        for (s, g) in self.sequences(&seq)?.iter().zip(self.sequences(&g_seq)?) {
            let gr = ttt_backward(s, &self.proj, &self.ttt, &self.w0, &g)?;
            grads.theta_k.add_assign(&gr.theta_k)?;
            grads.theta_v.add_assign(&gr.theta_v)?;
            grads.theta_q.add_assign(&gr.theta_q)?;
        }
        Ok(grads)
    }
}
