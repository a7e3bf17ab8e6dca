//! Dense tensors, a reverse-mode tape over them, and Adam.

mod adam;
pub mod kernels;
pub mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
