use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::net::{Activation, ResidualBlockParams};

use super::grid::GridField;

/// Drift `F(x, t)` of the transport equation.
#[derive(Debug, Clone)]
pub enum VelocityField {
    Constant(Vec<f64>),
    /// Rigid rotation `F = rate · (-(y - cy), x - cx)`.
    Rotation { center: [f64; 2], rate: f64 },
    Network(NetworkVelocity),
}

/// Velocity read off the residual blocks of a trained network: block `l`
/// owns the time slab `[l/L, (l+1)/L)` and moves points by `f_l(x)` per
/// slab, i.e. `F(x, t) = L · f_l(x)`.
#[derive(Debug, Clone)]
pub struct NetworkVelocity {
    blocks: Vec<ResidualBlockParams>,
    activation: Activation,
}

impl NetworkVelocity {
    pub fn new(blocks: Vec<ResidualBlockParams>, activation: Activation) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::InvalidArgument("network velocity needs at least one block".into()));
        };
        let width = first.width();
        if blocks.iter().any(|b| b.width() != width) {
            return Err(Error::InvalidArgument("residual blocks differ in width".into()));
        }
        Ok(Self { blocks, activation })
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].width()
    }
}

impl VelocityField {
    pub fn dim(&self) -> Option<usize> {
        match self {
            VelocityField::Constant(c) => Some(c.len()),
            VelocityField::Rotation { .. } => Some(2),
            VelocityField::Network(n) => Some(n.dim()),
        }
    }

    pub fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match self {
            VelocityField::Constant(c) => out.copy_from_slice(c),
            VelocityField::Rotation { center, rate } => {
                out[0] = -rate * (x[1] - center[1]);
                out[1] = rate * (x[0] - center[0]);
            }
            VelocityField::Network(n) => {
                let layers = n.blocks.len();
                let l = ((t * layers as f64).floor().max(0.0) as usize).min(layers - 1);
                let inc = n.blocks[l].increment(x, n.activation);
                for (o, v) in out.iter_mut().zip(inc) {
                    *o = layers as f64 * v;
                }
            }
        }
    }

    /// Times at which the field must be sampled to bound it over `[0, 1]`.
    pub(crate) fn time_samples(&self) -> Vec<f64> {
        match self {
            VelocityField::Network(n) => {
                let layers = n.blocks.len() as f64;
                (0..n.blocks.len()).map(|l| (l as f64 + 0.5) / layers).collect()
            }
            _ => vec![0.0],
        }
    }

    pub(crate) fn is_time_dependent(&self) -> bool {
        matches!(self, VelocityField::Network(_))
    }
}

/// Terminal data `o(x)` imposed at `t = 1`.
#[derive(Debug, Clone)]
pub enum TerminalCondition {
    Linear { weights: Vec<f64>, bias: f64 },
    SquaredNorm,
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    /// Two-class label surface: 1 above the curve `y = amplitude · sin(frequency · x)`, 0 below.
    TwoClass { amplitude: f64, frequency: f64 },
    Sampled(GridField),
}

impl TerminalCondition {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TerminalCondition::Linear { weights, bias } => {
                weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias
            }
            TerminalCondition::SquaredNorm => x.iter().map(|v| v * v).sum(),
            TerminalCondition::GaussianBump {
                center,
                width,
                amplitude,
            } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            TerminalCondition::TwoClass {
                amplitude,
                frequency,
            } => {
                if x[1] > amplitude * (frequency * x[0]).sin() {
                    1.0
                } else {
                    0.0
                }
            }
            TerminalCondition::Sampled(g) => {
                let s = &g.spec;
                let p = [x[0].clamp(s.x_min, s.x_max), x[1].clamp(s.y_min, s.y_max)];
                g.interpolate(p).expect("clamped into extent")
            }
        }
    }
}

/// Diffusion coefficient `G(x)` (the standard deviation multiplying `dB`).
#[derive(Clone)]
pub enum Diffusion {
    Constant(f64),
    Function(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
    Grid(GridField),
}

impl fmt::Debug for Diffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diffusion::Constant(s) => write!(f, "Constant({s})"),
            Diffusion::Function(_) => write!(f, "Function(..)"),
            Diffusion::Grid(g) => write!(f, "Grid({}x{})", g.spec.nx, g.spec.ny),
        }
    }
}

impl Diffusion {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Diffusion::Constant(s) => *s,
            Diffusion::Function(f) => f(x),
            Diffusion::Grid(g) => {
                let s = &g.spec;
                let p = [x[0].clamp(s.x_min, s.x_max), x[1].clamp(s.y_min, s.y_max)];
                g.interpolate(p).expect("clamped into extent")
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Diffusion::Constant(s) if *s == 0.0)
    }

    /// Spatially varying coefficient that is small near the class boundary
    /// of a [`TerminalCondition::TwoClass`] surface and large away from it:
    /// `G = lo + (hi - lo) · (1 - exp(-d² / (2 w²)))` with `d` the vertical
    /// distance to the boundary curve.
    pub fn boundary_aware(amplitude: f64, frequency: f64, lo: f64, hi: f64, width: f64) -> Self {
        Diffusion::Function(Arc::new(move |x: &[f64]| {
            let d = x[1] - amplitude * (frequency * x[0]).sin();
            lo + (hi - lo) * (1.0 - (-d * d / (2.0 * width * width)).exp())
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_tangent() {
        let f = VelocityField::Rotation {
            center: [0.0, 0.0],
            rate: 2.0,
        };
        let mut out = [0.0; 2];
        f.eval(&[1.0, 0.0], 0.3, &mut out);
        assert_eq!(out, [0.0, 2.0]);
    }

    #[test]
    fn boundary_aware_is_bounded() {
        let g = Diffusion::boundary_aware(0.5, 2.0, 0.05, 0.6, 0.3);
        assert!((g.eval(&[0.0, 0.0]) - 0.05).abs() < 1e-12);
        let far = g.eval(&[0.0, 5.0]);
        assert!(far > 0.59 && far <= 0.6);
    }

    #[test]
    fn two_class_labels() {
        let o = TerminalCondition::TwoClass {
            amplitude: 0.5,
            frequency: 2.0,
        };
        assert_eq!(o.eval(&[0.0, 0.1]), 1.0);
        assert_eq!(o.eval(&[0.0, -0.1]), 0.0);
    }
}
