//! Named parameter tensors shared by every model component.

use std::collections::BTreeMap;

use crate::tensor::{Real, Tensor};

/// A borrowed view of one parameter tensor with its partition flag.
#[derive(Debug, Clone, Copy)]
pub struct NamedParam<'a, F: Real> {
    pub name: &'a str,
    pub tensor: &'a Tensor<F>,
    pub frozen: bool,
}

/// Gradients keyed by parameter name.
pub type Gradients<F> = BTreeMap<String, Tensor<F>>;

/// Concatenated little-endian bytes of a parameter list, in list order.
/// Useful for asserting that frozen weights never move.
pub fn fingerprint<F: Real>(params: &[NamedParam<'_, F>]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in params {
        out.extend_from_slice(p.name.as_bytes());
        out.push(p.frozen as u8);
        for &v in p.tensor.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}
