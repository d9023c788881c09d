//! Transport equation with diffusion: characteristics, finite differences,
//! Feynman–Kac Monte Carlo and a smoothness probe.

pub mod fd;
pub mod field;
pub mod grid;
pub mod modulus;
pub mod sde;

pub use fd::{solve_te_fd, stability_limit, FdSolution};
pub use field::{Diffusion, NetworkVelocity, TerminalCondition, VelocityField};
pub use grid::{GridField, GridSpec};
pub use modulus::{modulus_probe, probe_pair, ModulusStats};
pub use sde::{
    estimate_u_fk, integrate_characteristics, replay_path, simulate_path, steps_for, FkEstimate,
    SdePath,
};
