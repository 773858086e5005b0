//! TTT-Linear: a sequence layer whose hidden state is the weight matrix of a
//! linear model.
//!
//! For every token `x` the layer forms three views, `k = Θ_K x` (training
//! input), `v = Θ_V x` (reconstruction target) and `q = Θ_Q x` (test input).
//! The hidden state `W` takes gradient steps on the self-supervised loss
//! `ℓ(W) = ‖W k − v‖²`, whose gradient is `2 (W k − v) kᵀ`, and the token's
//! output is `W q` evaluated with the updated state.
//!
//! Tokens are processed in mini-batches of `b`: all gradients in a batch are
//! taken at the batch-start state, token `t` sees the state updated with the
//! gradients of tokens up to and including `t`, and the state is committed
//! once per batch. A sequence of `T` tokens therefore performs exactly
//! `ceil(T / b)` committed updates.

use crate::error::{config_err, shape_err, Error, Result};
use crate::rng::Prng;
use crate::tensor::{layer_norm, layer_norm_backward, prng_fill, Init, Real, Tensor, DEFAULT_EPS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TttConfig {
    pub dim: usize,
    /// Inner-loop learning rate η.
    pub inner_lr: f64,
    /// Tokens per committed hidden-state update.
    pub mini_batch: usize,
    /// Emit `q + layer_norm(W q)` instead of `W q`.
    pub residual: bool,
}

impl TttConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            inner_lr: 1e-3,
            mini_batch: 16,
            residual: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(config_err!("TTT dim must be positive"));
        }
        if !(self.inner_lr.is_finite() && self.inner_lr >= 0.0) {
            return Err(config_err!("inner_lr must be finite and >= 0, got {}", self.inner_lr));
        }
        if self.mini_batch == 0 {
            return Err(config_err!("mini_batch must be >= 1"));
        }
        Ok(())
    }
}

/// The three square projections producing the train, label and test views.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewProjections<F: Real> {
    pub theta_k: Tensor<F>,
    pub theta_v: Tensor<F>,
    pub theta_q: Tensor<F>,
}

impl<F: Real> ViewProjections<F> {
    pub fn init(dim: usize, seed: u64) -> Self {
        let fill = |tag| prng_fill(&[dim, dim], Prng::derive_seed(seed, tag), Init::UniformKaiming);
        Self {
            theta_k: fill("theta_k"),
            theta_v: fill("theta_v"),
            theta_q: fill("theta_q"),
        }
    }

    pub fn dim(&self) -> usize {
        self.theta_k.shape()[0]
    }

    fn validate(&self, dim: usize) -> Result<()> {
        for (name, t) in [("theta_k", &self.theta_k), ("theta_v", &self.theta_v), ("theta_q", &self.theta_q)] {
            if t.shape() != [dim, dim] {
                return Err(shape_err!("{name} is {:?}, expected [{dim}, {dim}]", t.shape()));
            }
            t.ensure_finite(name)?;
        }
        Ok(())
    }
}

/// Row-major `w · x` for a square `[n, n]` matrix, accumulated left to right.
pub fn matvec<F: Real>(w: &[F], x: &[F]) -> Vec<F> {
    let n = x.len();
    w.chunks_exact(n)
        .map(|row| row.iter().zip(x).fold(F::zero(), |acc, (&a, &b)| acc + a * b))
        .collect()
}

/// `wᵀ · x` for a square matrix.
pub fn matvec_t<F: Real>(w: &[F], x: &[F]) -> Vec<F> {
    let n = x.len();
    let mut out = vec![F::zero(); n];
    for (row, &xi) in w.chunks_exact(n).zip(x) {
        for (o, &a) in out.iter_mut().zip(row) {
            *o += a * xi;
        }
    }
    out
}

// m += scale * a bᵀ
fn add_outer<F: Real>(m: &mut [F], scale: F, a: &[F], b: &[F]) {
    let n = b.len();
    for (row, &ai) in m.chunks_exact_mut(n).zip(a) {
        let s = scale * ai;
        for (v, &bj) in row.iter_mut().zip(b) {
            *v += s * bj;
        }
    }
}

/// Inner reconstruction loss `‖W x − v‖²`.
pub fn inner_loss<F: Real>(w: &Tensor<F>, x: &[F], v: &[F]) -> F {
    matvec(w.data(), x)
        .iter()
        .zip(v)
        .map(|(&p, &t)| (p - t) * (p - t))
        .fold(F::zero(), |a, b| a + b)
}

/// Analytic gradient `2 (W x − v) xᵀ` of [`inner_loss`].
pub fn inner_grad<F: Real>(w: &Tensor<F>, x: &[F], v: &[F]) -> Tensor<F> {
    let n = x.len();
    let err: Vec<F> = matvec(w.data(), x).iter().zip(v).map(|(&p, &t)| p - t).collect();
    let mut g = Tensor::zeros([n, n]);
    add_outer(g.data_mut(), F::from_f64(2.0), &err, x);
    g
}

/// Hidden state: the inner model's weight and the number of tokens seen.
#[derive(Debug, Clone, PartialEq)]
pub struct TttState<F: Real> {
    pub weight: Tensor<F>,
    pub step_count: usize,
}

impl<F: Real> TttState<F> {
    pub fn new(weight: Tensor<F>) -> Self {
        Self {
            weight,
            step_count: 0,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(Tensor::zeros([dim, dim]))
    }

    /// One inner gradient step `W ← W − η · 2 (W x − v) xᵀ` on a single token.
    pub fn step(&mut self, x_train: &[F], v_label: &[F], eta: F) -> Result<()> {
        let n = x_train.len();
        if v_label.len() != n || self.weight.shape() != [n, n] {
            return Err(shape_err!(
                "step with x[{n}], v[{}] on state {:?}",
                v_label.len(),
                self.weight.shape()
            ));
        }
        if !x_train.iter().chain(v_label).all(|v| v.is_finite()) || !eta.is_finite() {
            return Err(Error::NonFinite("TTT step input".into()));
        }
        let err: Vec<F> = matvec(self.weight.data(), x_train)
            .iter()
            .zip(v_label)
            .map(|(&p, &t)| p - t)
            .collect();
        add_outer(self.weight.data_mut(), -(eta * F::from_f64(2.0)), &err, x_train);
        self.step_count += 1;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TttOutput<F: Real> {
    /// `[T, C]` outputs.
    pub output: Tensor<F>,
    pub state: TttState<F>,
    /// Committed hidden-state updates, `ceil(T / mini_batch)`.
    pub updates: usize,
}

struct Views<F> {
    keys: Vec<Vec<F>>,
    values: Vec<Vec<F>>,
    queries: Vec<Vec<F>>,
}

fn check_inputs<F: Real>(
    seq: &Tensor<F>,
    proj: &ViewProjections<F>,
    cfg: &TttConfig,
    w0: &Tensor<F>,
) -> Result<(usize, usize)> {
    cfg.validate()?;
    let (t, c) = seq.dims2()?;
    if t == 0 {
        return Err(shape_err!("TTT sequence must contain at least one token"));
    }
    if c != cfg.dim {
        return Err(shape_err!("sequence has {c} channels, layer dim is {}", cfg.dim));
    }
    proj.validate(c)?;
    if w0.shape() != [c, c] {
        return Err(shape_err!("initial state {:?}, expected [{c}, {c}]", w0.shape()));
    }
    seq.ensure_finite("TTT input sequence")?;
    Ok((t, c))
}

fn views<F: Real>(seq: &Tensor<F>, proj: &ViewProjections<F>, c: usize) -> Views<F> {
    let tokens = seq.data().chunks_exact(c);
    Views {
        keys: tokens.clone().map(|x| matvec(proj.theta_k.data(), x)).collect(),
        values: tokens.clone().map(|x| matvec(proj.theta_v.data(), x)).collect(),
        queries: tokens.map(|x| matvec(proj.theta_q.data(), x)).collect(),
    }
}

fn residual_eps<F: Real>() -> F {
    F::from_f64(DEFAULT_EPS)
}

/// Run the layer over a `[T, C]` sequence starting from hidden state `w0`.
pub fn ttt_forward<F: Real>(
    seq: &Tensor<F>,
    proj: &ViewProjections<F>,
    cfg: &TttConfig,
    w0: &Tensor<F>,
) -> Result<TttOutput<F>> {
    let (t_len, c) = check_inputs(seq, proj, cfg, w0)?;
    let eta = F::from_f64(cfg.inner_lr);
    let two = F::from_f64(2.0);
    let v = views(seq, proj, c);
    let mut w = w0.clone();
    let mut out = Vec::with_capacity(t_len * c);
    let mut updates = 0;
    let mut acc = vec![F::zero(); c * c];

    for start in (0..t_len).step_by(cfg.mini_batch) {
        let end = (start + cfg.mini_batch).min(t_len);
        acc.iter_mut().for_each(|a| *a = F::zero());
        for t in start..end {
            let err: Vec<F> = matvec(w.data(), &v.keys[t])
                .iter()
                .zip(&v.values[t])
                .map(|(&p, &y)| p - y)
                .collect();
            add_outer(&mut acc, two, &err, &v.keys[t]);
            // (W - η A) q, without materialising the per-token state.
            let wq = matvec(w.data(), &v.queries[t]);
            let aq = matvec(&acc, &v.queries[t]);
            let z: Vec<F> = wq.iter().zip(&aq).map(|(&a, &b)| a - eta * b).collect();
            if cfg.residual {
                let normed = layer_norm(&z, residual_eps());
                out.extend(v.queries[t].iter().zip(&normed).map(|(&q, &n)| q + n));
            } else {
                out.extend(z);
            }
        }
        for (wi, &ai) in w.data_mut().iter_mut().zip(&acc) {
            *wi -= eta * ai;
        }
        updates += 1;
    }

    let output = Tensor::new([t_len, c], out)?;
    output.ensure_finite("TTT output")?;
    Ok(TttOutput {
        output,
        state: TttState {
            weight: w,
            step_count: t_len,
        },
        updates,
    })
}

#[derive(Debug, Clone)]
pub struct TttGrads<F: Real> {
    pub theta_k: Tensor<F>,
    pub theta_v: Tensor<F>,
    pub theta_q: Tensor<F>,
    /// Gradient with respect to the input sequence.
    pub input: Tensor<F>,
    /// Gradient with respect to the initial hidden state.
    pub w0: Tensor<F>,
}

/// Reverse-mode gradients of [`ttt_forward`] given `grad_out = dL/d output`.
///
/// The forward pass is recomputed internally; gradients flow through every
/// inner-loop update back to the projections, the inputs and `w0`.
pub fn ttt_backward<F: Real>(
    seq: &Tensor<F>,
    proj: &ViewProjections<F>,
    cfg: &TttConfig,
    w0: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<TttGrads<F>> {
    let (t_len, c) = check_inputs(seq, proj, cfg, w0)?;
    if grad_out.shape() != seq.shape() {
        return Err(shape_err!("TTT output gradient {:?} for input {:?}", grad_out.shape(), seq.shape()));
    }
    let eta = F::from_f64(cfg.inner_lr);
    let two = F::from_f64(2.0);
    let v = views(seq, proj, c);

    // Replay the forward pass, keeping each group's starting state.
    let groups: Vec<(usize, usize)> = (0..t_len)
        .step_by(cfg.mini_batch)
        .map(|s| (s, (s + cfg.mini_batch).min(t_len)))
        .collect();
    let mut starts = Vec::with_capacity(groups.len());
    let mut w = w0.data().to_vec();
    for &(s, e) in &groups {
        starts.push(w.clone());
        let mut acc = vec![F::zero(); c * c];
        for t in s..e {
            let err: Vec<F> = matvec(&w, &v.keys[t]).iter().zip(&v.values[t]).map(|(&p, &y)| p - y).collect();
            add_outer(&mut acc, two, &err, &v.keys[t]);
        }
        for (wi, &ai) in w.iter_mut().zip(&acc) {
            *wi -= eta * ai;
        }
    }

    let mut dk = vec![vec![F::zero(); c]; t_len];
    let mut dv = vec![vec![F::zero(); c]; t_len];
    let mut dq = vec![vec![F::zero(); c]; t_len];
    let mut d_next = vec![F::zero(); c * c];

    for (gi, &(s, e)) in groups.iter().enumerate().rev() {
        let wg = &starts[gi];
        // Per-token errors and states inside the group.
        let mut errs = Vec::with_capacity(e - s);
        let mut states = Vec::with_capacity(e - s);
        let mut acc = vec![F::zero(); c * c];
        for t in s..e {
            let err: Vec<F> = matvec(wg, &v.keys[t]).iter().zip(&v.values[t]).map(|(&p, &y)| p - y).collect();
            add_outer(&mut acc, two, &err, &v.keys[t]);
            states.push(wg.iter().zip(&acc).map(|(&a, &b)| a - eta * b).collect::<Vec<F>>());
            errs.push(err);
        }
        // dL/dy_t and the direct contributions through each W_t.
        let mut dy = Vec::with_capacity(e - s);
        for (i, t) in (s..e).enumerate() {
            let go = &grad_out.data()[t * c..(t + 1) * c];
            let d = if cfg.residual {
                for (a, &g) in dq[t].iter_mut().zip(go) {
                    *a += g;
                }
                let z = matvec(&states[i], &v.queries[t]);
                layer_norm_backward(&z, go, residual_eps())
            } else {
                go.to_vec()
            };
            for (a, b) in dq[t].iter_mut().zip(matvec_t(&states[i], &d)) {
                *a += b;
            }
            dy.push(d);
        }
        let mut d_start = d_next.clone();
        let mut m = d_next.clone();
        for (i, t) in (s..e).enumerate().rev() {
            // M_s = D_next + Σ_{t ≥ s} dy_t q_tᵀ
            add_outer(&mut m, F::one(), &dy[i], &v.queries[t]);
            add_outer(&mut d_start, F::one(), &dy[i], &v.queries[t]);
            // dG_s = -η M_s;  G_s = 2 e_s k_sᵀ
            let de: Vec<F> = matvec(&m, &v.keys[t]).iter().map(|&x| -two * eta * x).collect();
            for (a, b) in dk[t].iter_mut().zip(matvec_t(&m, &errs[i])) {
                *a += -two * eta * b;
            }
            // e_s = W_g k_s - v_s
            add_outer(&mut d_start, F::one(), &de, &v.keys[t]);
            for (a, b) in dk[t].iter_mut().zip(matvec_t(wg, &de)) {
                *a += b;
            }
            for (a, &b) in dv[t].iter_mut().zip(&de) {
                *a -= b;
            }
        }
        d_next = d_start;
    }

    let mut g_k = Tensor::zeros([c, c]);
    let mut g_v = Tensor::zeros([c, c]);
    let mut g_q = Tensor::zeros([c, c]);
    let mut g_in = Vec::with_capacity(t_len * c);
    for t in 0..t_len {
        let x = &seq.data()[t * c..(t + 1) * c];
        add_outer(g_k.data_mut(), F::one(), &dk[t], x);
        add_outer(g_v.data_mut(), F::one(), &dv[t], x);
        add_outer(g_q.data_mut(), F::one(), &dq[t], x);
        let a = matvec_t(proj.theta_k.data(), &dk[t]);
        let b = matvec_t(proj.theta_v.data(), &dv[t]);
        let q = matvec_t(proj.theta_q.data(), &dq[t]);
        g_in.extend((0..c).map(|i| a[i] + b[i] + q[i]));
    }
    Ok(TttGrads {
        theta_k: g_k,
        theta_v: g_v,
        theta_q: g_q,
        input: Tensor::new([t_len, c], g_in)?,
        w0: Tensor::new([c, c], d_next)?,
    })
}

/// `true` iff perturbing token `t_perturb` leaves every earlier output
/// bit-identical.
pub fn ttt_causality_probe<F: Real>(
    seq: &Tensor<F>,
    proj: &ViewProjections<F>,
    cfg: &TttConfig,
    w0: &Tensor<F>,
    t_perturb: usize,
) -> Result<bool> {
    let (t_len, c) = seq.dims2()?;
    if t_perturb >= t_len {
        return Err(Error::Index {
            index: t_perturb,
            len: t_len,
        });
    }
    let base = ttt_forward(seq, proj, cfg, w0)?.output;
    let mut bumped = seq.clone();
    for v in &mut bumped.data_mut()[t_perturb * c..(t_perturb + 1) * c] {
        *v += F::one();
    }
    let moved = ttt_forward(&bumped, proj, cfg, w0)?.output;
    let prefix = t_perturb * c;
    Ok(base.data()[..prefix]
        .iter()
        .zip(&moved.data()[..prefix])
        .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits()))
}
