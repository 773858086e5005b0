use crate::error::{shape_err, Result};
use crate::params::NamedParam;
use crate::tensor::{Real, Tensor};

/// Ordered table of named tensors sharing one partition flag.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable<F: Real> {
    frozen: bool,
    entries: Vec<(String, Tensor<F>)>,
}

impl<F: Real> ParamTable<F> {
    pub fn new(frozen: bool) -> Self {
        Self { frozen, entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor<F>) {
        self.entries.push((name.into(), t));
    }

    /// Look up a tensor that the owning component registered itself.
    pub fn get(&self, name: &str) -> &Tensor<F> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .unwrap_or_else(|| panic!("parameter {name} not registered"))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn set(&mut self, name: &str, value: Tensor<F>) -> Result<bool> {
        let Some(slot) = self.get_mut(name) else {
            return Ok(false);
        };
        if slot.shape() != value.shape() {
            return Err(shape_err!("{name}: stored {:?}, model expects {:?}", value.shape(), slot.shape()));
        }
        *slot = value;
        Ok(true)
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<F>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn params(&self) -> impl Iterator<Item = NamedParam<'_, F>> {
        self.entries.iter().map(|(name, tensor)| NamedParam {
            name,
            tensor,
            frozen: self.frozen,
        })
    }
}
