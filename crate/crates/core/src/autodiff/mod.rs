//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    compare_with_fd, finite_diff_check, finite_diff_report, relative_error, GradCheckReport,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
