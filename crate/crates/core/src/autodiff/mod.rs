//! Minimal reverse-mode differentiation engine: tensors, a recording tape,
//! named parameter storage, Adam, and the plateau/early-stop rules that
//! drive training.

mod gemm;
pub mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{AdamState, EarlyStopper, PlateauScheduler};
pub use params::{ParamId, ParamStore};
pub use tape::{gelu, sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;
