//! Dense linear algebra, nonlinearities, sampling, SGD and a gradient oracle.

mod gradcheck;
mod matrix;
mod ops;
mod rng;
mod sgd;

pub use gradcheck::{finite_difference_check, GradCheck};
pub use matrix::{axpy, dot, Matrix};
pub use ops::{log_sigmoid, log_softmax, sample_categorical, sigmoid, sigmoid_matrix, softmax};
pub(crate) use ops::sample_unchecked;
pub use rng::RngState;
pub use sgd::{sgd_ascent_step, sgd_step, AdamAscent};
