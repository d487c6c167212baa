//! Dense matrices, a reverse-mode tape over them, trainable parameters and a
//! finite-difference gradient checker.

mod gradcheck;
mod matrix;
mod params;
mod tape;

pub use gradcheck::{generic_point, grad_check, relative_error, GradCheckReport, DEFAULT_EPS};
pub use matrix::Matrix;
pub use params::{Gradients, Init, ParamSpec, ParamStore};
pub use tape::{sigmoid, Backward, Tape, Tensor, COSINE_EPS};
