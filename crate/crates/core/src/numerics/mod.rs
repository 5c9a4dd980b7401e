//! Dense arrays, layer primitives, the optimizer and the learning-rate schedule.

mod gradcheck;
pub mod layers;
pub mod ops;
mod optim;
pub mod params;
mod real;
mod tensor;

pub use gradcheck::{finite_diff_grad, grad_rel_error};
pub use ops::{gelu, layer_norm, linear_forward, softmax, LayerParams, LAYER_NORM_EPS};
pub use optim::{adam_step, onecycle_lr, AdamConfig, AdamState, LrSchedule};
pub use params::{ParamLayout, ParamSpec, Slot};
pub use real::Real;
pub use tensor::Tensor;
