//! Reverse-mode differentiation over dense `f64` tensors, plus Adam.

mod fastmath;
mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, BlockReport, GradCheckReport, REL_ERROR_FLOOR};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tape::{Gradients, Tape, Unary, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
