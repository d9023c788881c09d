//! Corruption error tables, normalized corruption errors, the distance-σ
//! coverage diagnostic and the fixed-versus-adaptive sweep.

pub mod coverage;
pub mod sweep;
pub mod table;

pub use coverage::{
    coverage_ratio, coverage_ratio_scaled, median, CoverageProbe, CoverageReport, CoverageRow, LayerRatios,
};
pub use sweep::{
    dilemma_summary, evaluate_suite, sweep_fixed_sigma, DilemmaSummary, SweepConfig, SweepResult, SweepVariant, VariantResult,
};
pub use table::{mce, rmce, ErrorTable, MetricsReport, Normalized};
