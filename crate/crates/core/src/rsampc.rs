//! R-SAMPC: a frozen, randomly initialised convolution stack used as a
//! parameter-level random mask on the image embedding.
//!
//! In training mode the embedding passes through
//! `CI_R(SI(CI_D(x)))`: a 1×1 channel-doubling convolution, `depth` 3×3
//! spatial-interaction layers, and a 1×1 convolution back to the input
//! width. Every convolution is followed by normalisation, and all but the
//! last by ReLU. In inference mode the stack is skipped entirely.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{config_err, shape_err, Result};
use crate::params::NamedParam;
use crate::rng::Prng;
use crate::tensor::{conv2d, instance_norm, prng_fill, ConvSpec, Init, Real, Tensor, DEFAULT_EPS};

pub const MAX_DEPTH: usize = 5;
pub const DEFAULT_DEPTH: usize = 4;
pub const DEFAULT_SCALE_SPREAD: f64 = 0.1;

/// Whether the forward pass is a training pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsampcConfig {
    pub channels: usize,
    pub depth: usize,
    /// Spread `s` of the frozen per-channel scale drawn from
    /// `uniform(1 - s, 1 + s)`; `None` disables scaling.
    pub channel_scale: Option<f64>,
    pub seed: u64,
}

impl RsampcConfig {
    pub fn new(channels: usize, seed: u64) -> Self {
        Self {
            channels,
            depth: DEFAULT_DEPTH,
            channel_scale: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(config_err!("R-SAMPC channels must be positive"));
        }
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return Err(config_err!("R-SAMPC depth {} outside 1..={MAX_DEPTH}", self.depth));
        }
        if let Some(s) = self.channel_scale {
            if !(s.is_finite() && (0.0..1.0).contains(&s)) {
                return Err(config_err!("channel scale spread must lie in [0, 1), got {s}"));
            }
        }
        Ok(())
    }
}

struct Layer<F: Real> {
    name: String,
    weight: Tensor<F>,
    spec: ConvSpec,
    relu: bool,
}

pub struct RsampcStack<F: Real> {
    cfg: RsampcConfig,
    layers: Vec<Layer<F>>,
    scale: Option<(String, Tensor<F>)>,
    gamma: Tensor<F>,
    beta: Tensor<F>,
    applications: AtomicUsize,
}

impl<F: Real> Clone for RsampcStack<F> {
    fn clone(&self) -> Self {
        Self {
            cfg: self.cfg,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    name: l.name.clone(),
                    weight: l.weight.clone(),
                    spec: l.spec,
                    relu: l.relu,
                })
                .collect(),
            scale: self.scale.clone(),
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
            applications: AtomicUsize::new(0),
        }
    }
}

impl<F: Real> std::fmt::Debug for RsampcStack<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RsampcStack")
            .field("cfg", &self.cfg)
            .field("layers", &self.layers.iter().map(|l| &l.name).collect::<Vec<_>>())
            .finish()
    }
}

impl<F: Real> RsampcStack<F> {
    pub fn init(cfg: RsampcConfig) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let mut layers = Vec::with_capacity(cfg.depth + 2);
        let mut push = |name: String, spec: ConvSpec, relu: bool| {
            let weight = prng_fill(
                &spec.weight_shape(),
                Prng::derive_seed(cfg.seed, &name),
                Init::UniformKaiming,
            );
            layers.push(Layer { name, weight, spec, relu });
        };
        push("rsampc.ci_d.weight".into(), ConvSpec::new(c, 2 * c, 1), true);
        for i in 0..cfg.depth {
            push(format!("rsampc.si{i}.weight"), ConvSpec::new(2 * c, 2 * c, 3), true);
        }
        push("rsampc.ci_r.weight".into(), ConvSpec::new(2 * c, c, 1), false);

        let scale = cfg.channel_scale.map(|s| {
            let mut rng = Prng::derive(cfg.seed, "rsampc.scale");
            let values: Vec<F> = (0..c).map(|_| F::from_f64(rng.uniform(1.0 - s, 1.0 + s))).collect();
            ("rsampc.scale".to_string(), Tensor::new([c], values).expect("scale length"))
        });
        Ok(Self {
            cfg,
            layers,
            scale,
            gamma: Tensor::full([2 * c], F::one()),
            beta: Tensor::zeros([2 * c]),
            applications: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &RsampcConfig {
        &self.cfg
    }

    /// Number of 3×3 spatial-interaction layers.
    pub fn depth(&self) -> usize {
        self.layers.len() - 2
    }

    /// Output widths of every convolution, in order.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.spec.out_channels).collect()
    }

    /// How many times the convolution pipeline has actually run.
    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }

    pub fn params(&self) -> Vec<NamedParam<'_, F>> {
        let mut out: Vec<_> = self
            .layers
            .iter()
            .map(|l| NamedParam { name: &l.name, tensor: &l.weight, frozen: true })
            .collect();
        if let Some((name, t)) = &self.scale {
            out.push(NamedParam { name, tensor: t, frozen: true });
        }
        out
    }

    /// Replace a weight by name, used when restoring a checkpoint.
    pub fn set_param(&mut self, name: &str, value: Tensor<F>) -> Result<bool> {
        let slot = if let Some(l) = self.layers.iter_mut().find(|l| l.name == name) {
            &mut l.weight
        } else if let Some((_, t)) = self.scale.as_mut().filter(|(n, _)| n == name) {
            t
        } else {
            return Ok(false);
        };
        if slot.shape() != value.shape() {
            return Err(shape_err!("{name}: stored {:?}, model expects {:?}", value.shape(), slot.shape()));
        }
        *slot = value;
        Ok(true)
    }

    /// Apply the stack. `Mode::Infer` returns the input untouched.
    pub fn apply(&self, em: &Tensor<F>, mode: Mode) -> Result<Tensor<F>> {
        let (_, c, _, _) = em.dims4()?;
        if c != self.cfg.channels {
            return Err(shape_err!("R-SAMPC built for {} channels, got {c}", self.cfg.channels));
        }
        if mode == Mode::Infer {
            return Ok(em.clone());
        }
        self.applications.fetch_add(1, Ordering::Relaxed);
        let eps = F::from_f64(DEFAULT_EPS);
        let mut x = em.clone();
        for layer in &self.layers {
            x = conv2d(&x, &layer.weight, None, &layer.spec)?;
            let w = layer.spec.out_channels;
            let gamma = Tensor::new([w], self.gamma.data()[..w].to_vec())?;
            let beta = Tensor::new([w], self.beta.data()[..w].to_vec())?;
            x = instance_norm(&x, &gamma, &beta, eps)?;
            if layer.relu {
                x = x.relu();
            }
        }
        if let Some((_, s)) = &self.scale {
            let (b, _, _, _) = x.dims4()?;
            for bi in 0..b {
                for (ci, &k) in s.data().iter().enumerate() {
                    x.plane_mut(bi, ci).iter_mut().for_each(|v| *v *= k);
                }
            }
        }
        Ok(x)
    }
}
