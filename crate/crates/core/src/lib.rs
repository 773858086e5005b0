pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod params;
pub mod probe;
pub mod rng;
pub mod rsampc;
pub mod tensor;
pub mod ttt;
pub mod tvm;

pub use error::{Error, Result};
pub use rsampc::Mode;
pub use tensor::{Real, Tensor};
