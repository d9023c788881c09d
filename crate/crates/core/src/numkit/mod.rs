//! Dense tensors, a reverse-mode tape, gradient checking and a counter-based
//! random stream.

pub mod gradcheck;
pub mod ops;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheck};
pub use ops::{apply, softplus, softplus_inv, OpKind};
pub use rng::RngStream;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
