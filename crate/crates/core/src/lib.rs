//! Residual networks read as transport equations, with learned diffusion
//! blocks that smooth the solution around the training data.
//!
//! * [`numkit`]: tensors, reverse-mode tape, gradient check, random streams.
//! * [`pde`]: transport/diffusion solvers used as a reference lab.
//! * [`net`]: the residual + diffusion network and its checkpoints.
//! * [`train`]: losses, optimizers and the two-step training loop.
//! * [`data`]: synthetic datasets, augmentations and corruption ladders.
//! * [`metrics`]: corruption error tables, coverage ratios and sweeps.

pub mod error;
pub mod numkit;
pub mod pde;
pub mod net;
pub mod data;
pub mod train;
pub mod metrics;

pub use error::{Error, Result};

/// Guide chapters, compiled so their snippets run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/transport.md")]
    pub mod transport {}
    #[doc = include_str!("../../../book/src/network.md")]
    pub mod network {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/robustness.md")]
    pub mod robustness {}
    #[doc = include_str!("../../../book/src/determinism.md")]
    pub mod determinism {}
}
