//! Label-preserving feature transforms. Rotations act on the first two
//! coordinates about the origin.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numkit::{RngStream, Tensor};

use super::dataset::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AugmentKind {
    Rotate,
    Gaussian,
    Brightness,
    Scale,
    Translate,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 5] = [
        AugmentKind::Rotate,
        AugmentKind::Gaussian,
        AugmentKind::Brightness,
        AugmentKind::Scale,
        AugmentKind::Translate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentKind::Rotate => "rotate",
            AugmentKind::Gaussian => "gaussian",
            AugmentKind::Brightness => "brightness",
            AugmentKind::Scale => "scale",
            AugmentKind::Translate => "translate",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AugmentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind {
                what: "augmentation",
                name: s.to_string(),
            })
    }
}

/// A concrete transform.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentOp {
    /// Counter-clockwise rotation by an angle in `[-π, π]`.
    Rotate(f64),
    /// Adds `N(0, s²)` noise to every coordinate.
    Gaussian(f64),
    /// Adds the same offset to every coordinate.
    Brightness(f64),
    /// Multiplies by a positive factor.
    Scale(f64),
    Translate(Vec<f64>),
}

impl AugmentOp {
    pub fn kind(&self) -> AugmentKind {
        match self {
            AugmentOp::Rotate(_) => AugmentKind::Rotate,
            AugmentOp::Gaussian(_) => AugmentKind::Gaussian,
            AugmentOp::Brightness(_) => AugmentKind::Brightness,
            AugmentOp::Scale(_) => AugmentKind::Scale,
            AugmentOp::Translate(_) => AugmentKind::Translate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match self {
            AugmentOp::Rotate(a) if !(a.abs() <= std::f64::consts::PI) => bad(format!("angle {a} outside [-π, π]")),
            AugmentOp::Gaussian(s) if !(*s >= 0.0 && s.is_finite()) => bad(format!("noise scale {s} must be ≥ 0")),
            AugmentOp::Brightness(b) if !b.is_finite() => bad(format!("offset {b} must be finite")),
            AugmentOp::Scale(f) if !(*f > 0.0 && f.is_finite()) => bad(format!("scale factor {f} must be > 0")),
            AugmentOp::Translate(v) if !v.iter().all(|t| t.is_finite()) => bad("translation must be finite".into()),
            _ => Ok(()),
        }
    }

    /// Transforms one feature vector in place. Only `Gaussian` draws from
    /// `rng`, one normal per coordinate.
    pub fn apply_in_place(&self, x: &mut [f64], rng: &mut RngStream) {
        match self {
            AugmentOp::Rotate(a) => {
                if x.len() >= 2 {
                    let (s, c) = a.sin_cos();
                    let (u, v) = (x[0], x[1]);
                    x[0] = c * u - s * v;
                    x[1] = s * u + c * v;
                }
            }
            AugmentOp::Gaussian(s) => {
                for v in x.iter_mut() {
                    *v += s * rng.standard_normal();
                }
            }
            AugmentOp::Brightness(b) => x.iter_mut().for_each(|v| *v += b),
            AugmentOp::Scale(f) => x.iter_mut().for_each(|v| *v *= f),
            AugmentOp::Translate(t) => {
                for (v, d) in x.iter_mut().zip(t) {
                    *v += d;
                }
            }
        }
    }
}

pub fn apply_augment(op: &AugmentOp, s: &Sample, rng: &mut RngStream) -> Result<Sample> {
    op.validate()?;
    if let AugmentOp::Translate(t) = op {
        if t.len() != s.features.len() {
            return Err(Error::ShapeMismatch {
                op: "translate",
                lhs: vec![s.features.len()],
                rhs: vec![t.len()],
            });
        }
    }
    let mut features = s.features.clone();
    op.apply_in_place(&mut features, rng);
    Ok(Sample {
        features,
        label: s.label,
    })
}

/// One menu entry of the training-time augmenter: a kind and its maximum
/// strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentChoice {
    pub kind: AugmentKind,
    pub magnitude: f64,
}

impl AugmentChoice {
    pub fn default_magnitude(kind: AugmentKind) -> f64 {
        match kind {
            AugmentKind::Rotate => 0.3,
            AugmentKind::Gaussian => 0.1,
            AugmentKind::Brightness => 0.2,
            AugmentKind::Scale => 1.3,
            AugmentKind::Translate => 0.2,
        }
    }

    pub fn new(kind: AugmentKind) -> Self {
        Self {
            kind,
            magnitude: Self::default_magnitude(kind),
        }
    }
}

/// Produces the augmented partner `x^a` of each row: picks a menu entry
/// uniformly, then a random strength up to its magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmentor {
    pub menu: Vec<AugmentChoice>,
}

impl Augmentor {
    pub fn new(menu: Vec<AugmentChoice>) -> Result<Self> {
        if menu.is_empty() {
            return Err(Error::InvalidArgument("augmentation menu is empty".into()));
        }
        for c in &menu {
            let ok = match c.kind {
                AugmentKind::Scale => c.magnitude >= 1.0 && c.magnitude.is_finite(),
                AugmentKind::Rotate => (0.0..=std::f64::consts::PI).contains(&c.magnitude),
                _ => c.magnitude >= 0.0 && c.magnitude.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "magnitude {} invalid for {}",
                    c.magnitude, c.kind
                )));
            }
        }
        Ok(Self { menu })
    }

    pub fn from_kinds(kinds: &[AugmentKind]) -> Result<Self> {
        Self::new(kinds.iter().map(|&k| AugmentChoice::new(k)).collect())
    }

    pub fn kinds(&self) -> Vec<AugmentKind> {
        self.menu.iter().map(|c| c.kind).collect()
    }

    /// Draws one concrete op for a `dim`-dimensional sample.
    pub fn draw(&self, dim: usize, rng: &mut RngStream) -> AugmentOp {
        let pick = ((rng.uniform() * self.menu.len() as f64) as usize).min(self.menu.len() - 1);
        let c = self.menu[pick];
        let u = rng.uniform_in(-1.0, 1.0);
        match c.kind {
            AugmentKind::Rotate => AugmentOp::Rotate(u * c.magnitude),
            AugmentKind::Gaussian => AugmentOp::Gaussian(c.magnitude),
            AugmentKind::Brightness => AugmentOp::Brightness(u * c.magnitude),
            AugmentKind::Scale => AugmentOp::Scale(c.magnitude.powf(u)),
            AugmentKind::Translate => {
                let dir: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                let len = u.abs() * c.magnitude;
                AugmentOp::Translate(dir.iter().map(|v| v * len / norm).collect())
            }
        }
    }

    /// Augmented copy of every row of `x`.
    pub fn augment(&self, x: &Tensor, rng: &mut RngStream) -> Tensor {
        let d = x.cols();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(d) {
            let op = self.draw(d, rng);
            op.apply_in_place(row, rng);
        }
        out
    }
}
