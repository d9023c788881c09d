//! Empirical modulus of continuity `|u(x + δe) - u(x)|` of a grid field.

use crate::error::{Error, Result};
use crate::numkit::RngStream;

use super::grid::GridField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulusStats {
    pub sup: f64,
    pub mean: f64,
    pub n_pairs: usize,
}

/// `|u(x + δ·e) - u(x)|` for one base point and unit direction.
pub fn probe_pair(field: &GridField, x: [f64; 2], e: [f64; 2], delta: f64) -> Result<f64> {
    let y = [x[0] + delta * e[0], x[1] + delta * e[1]];
    let a = field
        .interpolate(x)
        .ok_or_else(|| Error::ProbeOutOfDomain { point: x.to_vec() })?;
    let b = field
        .interpolate(y)
        .ok_or_else(|| Error::ProbeOutOfDomain { point: y.to_vec() })?;
    Ok((b - a).abs())
}

/// Base points are uniform on the extent shrunk by `δ` on every side and
/// directions uniform on the circle, so every probe stays inside.
pub fn modulus_probe(field: &GridField, delta: f64, n_pairs: usize, rng: &mut RngStream) -> Result<ModulusStats> {
    let s = &field.spec;
    if !(delta > 0.0) || 2.0 * delta >= (s.x_max - s.x_min) || 2.0 * delta >= (s.y_max - s.y_min) {
        return Err(Error::InvalidArgument(format!(
            "radius {delta} must be positive and below half the extent"
        )));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be positive".into()));
    }
    let mut sup: f64 = 0.0;
    let mut total = 0.0;
    for _ in 0..n_pairs {
        let x = [
            rng.uniform_in(s.x_min + delta, s.x_max - delta),
            rng.uniform_in(s.y_min + delta, s.y_max - delta),
        ];
        let theta = rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
        let d = probe_pair(field, x, [theta.cos(), theta.sin()], delta)?;
        sup = sup.max(d);
        total += d;
    }
    Ok(ModulusStats {
        sup,
        mean: total / n_pairs as f64,
        n_pairs,
    })
}
