//! Residual network with adaptive diffusion blocks.

pub mod checkpoint;
pub mod forward;
pub mod params;
pub mod spec;

pub use checkpoint::Checkpoint;
pub use forward::{
    add_block_forward, forward_clean, forward_diffused, logits, residual_forward, sigma_forward, traced, DiffusionMode,
    ForwardTrace, ParamVars,
};
pub use params::{AddBlockParams, NetworkParams, OutputHead, ParamGroup, ResidualBlockParams, INITIAL_SIGMA};
pub use spec::{Activation, NetworkSpec};
