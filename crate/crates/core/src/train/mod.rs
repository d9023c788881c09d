//! Two-objective training and ensembled inference.
//!
//! Each step first fits the diffusion blocks so that `N(h_l, σ_l²)` covers
//! the clean representation of an augmented partner (coverage NLL), then
//! updates the whole network on cross-entropy through the diffused path.

pub mod config;
pub mod coverage;
pub mod fit;
pub mod infer;
pub mod loss;
pub mod optim;
pub mod step;

pub use config::{cosine_lr, InferenceConfig, TrainConfig, Variant};
pub use coverage::{fit_sigma_heads, sigma_gap};
pub use fit::{fit, write_epoch_csv, EpochLog, EpochObserver, FitResult};
pub use infer::{argmax, evaluate, predict_ensemble, ClassCount, EvalReport, Prediction};
pub use loss::{coverage_nll, coverage_nll_traced, primary_ce, primary_ce_traced};
pub use optim::OptimState;
pub use step::{init_params, StepRecord, Streams, Trainer};
