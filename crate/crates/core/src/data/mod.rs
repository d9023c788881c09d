//! Synthetic two-dimensional datasets, training augmentations and a
//! severity-graded corruption suite.

pub mod augment;
pub mod corrupt;
pub mod dataset;

pub use augment::{apply_augment, AugmentChoice, AugmentKind, AugmentOp, Augmentor};
pub use corrupt::{
    corruption_op, corruption_suite, default_ladder, write_manifest, CorruptedSet, CorruptionKind,
    CorruptionLadder, CorruptionSpec, SEVERITIES,
};
pub use dataset::{make_dataset, split, Dataset, DatasetKind, Sample};
