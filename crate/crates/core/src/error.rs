use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },

    #[error("{op}: input outside domain ({detail})")]
    Domain { op: &'static str, detail: String },

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("time step {dt} exceeds the stability limit {limit}")]
    Stability { dt: f64, limit: f64 },

    #[error("diffusion coefficient must be non-negative, found {0}")]
    NegativeDiffusion(f64),

    #[error("probe at {point:?} leaves the grid extent")]
    ProbeOutOfDomain { point: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {what} `{name}`")]
    UnknownKind { what: &'static str, name: String },

    #[error("trace is missing the augmented path for layer {0}")]
    MissingAugmentedPath(usize),

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("split leaves class {0} empty on one side")]
    DegenerateSplit(usize),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("network spec mismatch: {0}")]
    SpecMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
