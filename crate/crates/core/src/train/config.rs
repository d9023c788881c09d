use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::net::DiffusionMode;

/// What is trained and how the diffusion blocks behave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    /// Learned diffusion guided by augmented partners. With `concat` the
    /// classifier also trains on the augmented samples; without it they
    /// only guide the diffusion scale.
    Adaptive { concat: bool },
    /// The same diffusion scale at every block, no augmentation.
    Fixed(f64),
    /// Plain residual network, no diffusion and no augmentation.
    Erm,
}

impl Variant {
    pub fn train_mode(self) -> DiffusionMode {
        match self {
            Variant::Adaptive { .. } => DiffusionMode::Adaptive,
            Variant::Fixed(s) => DiffusionMode::fixed(s),
            Variant::Erm => DiffusionMode::Off,
        }
    }

    /// Inference uses the diffusion the model was trained with.
    pub fn inference_mode(self) -> DiffusionMode {
        self.train_mode()
    }

    pub fn uses_augmentation(self) -> bool {
        matches!(self, Variant::Adaptive { .. })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Adaptive { concat: true } => f.write_str("pde+"),
            Variant::Adaptive { concat: false } => f.write_str("pde+_no_aug"),
            Variant::Fixed(s) => write!(f, "fixed_{s}"),
            Variant::Erm => f.write_str("erm"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pde+" => Ok(Variant::Adaptive { concat: true }),
            "pde+_no_aug" => Ok(Variant::Adaptive { concat: false }),
            "erm" => Ok(Variant::Erm),
            _ => s
                .strip_prefix("fixed_")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(Variant::Fixed)
                .ok_or_else(|| Error::UnknownKind {
                    what: "variant",
                    name: s.to_string(),
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Momentum-SGD rate for the whole network.
    pub lr: f64,
    pub momentum: f64,
    /// Cosine decay of `lr` over epochs.
    pub cosine: bool,
    /// Adam rate for the coverage update of the diffusion blocks.
    pub diffuser_lr: f64,
    /// Augmented partners per sample.
    pub k: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 0.05,
            momentum: 0.9,
            cosine: true,
            diffuser_lr: 0.01,
            k: 1,
            seed: 0,
            variant: Variant::Adaptive { concat: true },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.diffuser_lr >= 0.0 && self.diffuser_lr.is_finite()) {
            return bad(format!("learning rates must be non-negative, got {} and {}", self.lr, self.diffuser_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if let Variant::Fixed(s) = self.variant {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("fixed diffusion scale {s} must be ≥ 0"));
            }
        }
        Ok(())
    }

    /// `key = value` lines, stored in checkpoints.
    pub fn to_text(&self) -> String {
        format!(
            "epochs = {}\nbatch_size = {}\nlr = {}\nmomentum = {}\ncosine = {}\ndiffuser_lr = {}\nk = {}\nseed = {}\nvariant = {}\n",
            self.epochs,
            self.batch_size,
            self.lr,
            self.momentum,
            self.cosine,
            self.diffuser_lr,
            self.k,
            self.seed,
            self.variant
        )
    }

    /// Classifier rate during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.cosine && self.epochs > 0 {
            cosine_lr(self.lr, epoch, self.epochs)
        } else {
            self.lr
        }
    }
}

/// `base · ½ (1 + cos(π e / E))`.
pub fn cosine_lr(base: f64, epoch: usize, epochs: usize) -> f64 {
    base * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / epochs as f64).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    /// Number of diffused forwards averaged per prediction.
    pub ensemble: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { ensemble: 10, seed: 0 }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble < 1 {
            return Err(Error::InvalidArgument("ensemble size must be at least 1".into()));
        }
        Ok(())
    }
}
