//! Deterministic `f64` tensor engine with reverse-mode differentiation.

mod kernels;
mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{Optimizer, OptimizerKind};
pub use params::{he_uniform, ParamSet, CHECKPOINT_MAGIC};
pub use tape::{Gradients, Primitive, Tape, Var};
pub use tensor::Tensor;
