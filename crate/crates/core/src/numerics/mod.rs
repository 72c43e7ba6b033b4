//! Reverse-mode autodiff on a flat-tensor tape, plus the Adam optimizer with
//! token-based warmup/cosine scheduling. All tensors are row-major `Vec<Real>`
//! with explicit shapes; no views or strides.

mod optim;
mod tape;
mod tensor;

pub mod gradcheck;

pub use optim::{adam_step, lr_at, AdamConfig, AdamState, ParamRef, StepStats};
pub use tape::{Tape, TensorId};
pub use tensor::Tensor;

/// Scalar element type. `f32` by default; the `real64` feature switches the
/// whole crate to `f64` so oracle tests can run at tighter tolerances.
#[cfg(not(feature = "real64"))]
pub type Real = f32;
#[cfg(feature = "real64")]
pub type Real = f64;

/// Number of elements implied by a shape.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}
