use std::collections::BTreeMap;

use crate::error::{config_err, Error, Result};
use crate::params::Gradients;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            _ => Err(config_err!("unknown optimizer {s:?}")),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        })
    }
}

/// Plain gradient descent or Adam over named parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Update every `(name, tensor)` that has a gradient in `grads`.
    pub fn step<'a, F: Real>(
        &mut self,
        params: impl IntoIterator<Item = (&'a str, &'a mut Tensor<F>)>,
        grads: &Gradients<F>,
    ) -> Result<()> {
        self.t += 1;
        let lr = self.lr;
        for (name, w) in params {
            let Some(g) = grads.get(name) else { continue };
            w.expect_same_shape(g)?;
            match self.kind {
                OptimizerKind::Sgd => {
                    for (wi, &gi) in w.data_mut().iter_mut().zip(g.data()) {
                        *wi -= F::from_f64(lr * gi.as_f64());
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = self
                        .moments
                        .entry(name.to_string())
                        .or_insert_with(|| (vec![0.0; g.numel()], vec![0.0; g.numel()]));
                    let c1 = 1.0 - self.beta1.powi(self.t as i32);
                    let c2 = 1.0 - self.beta2.powi(self.t as i32);
                    for (i, (wi, &gi)) in w.data_mut().iter_mut().zip(g.data()).enumerate() {
                        let gi = gi.as_f64();
                        m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                        v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                        let update = (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                        *wi -= F::from_f64(lr * update);
                    }
                }
            }
        }
        Ok(())
    }
}
