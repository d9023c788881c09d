//! Euler–Maruyama integration of `dx = F(x, t) dt + G(x) dB` on `[0, 1]`,
//! the deterministic characteristic flow (`G = 0`), and the Feynman–Kac
//! Monte Carlo estimate `u(x, 0) = E[o(x(1)) | x(0) = x]`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numkit::RngStream;

use super::field::{Diffusion, TerminalCondition, VelocityField};

/// One sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Brownian increments `ΔB_k = √dt · z_k`, one per step.
    pub noise_increments: Vec<Vec<f64>>,
}

impl SdePath {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("path has at least the initial state")
    }

    /// CSV with columns `t, x1, ..., xd`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.states[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        out.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut rec = vec![t.to_string()];
            rec.extend(s.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Number of steps covering `[0, 1]` with step at most `dt`.
pub fn steps_for(dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(Error::InvalidArgument(format!("dt {dt} outside (0, 1]")));
    }
    let n = 1.0 / dt;
    let rounded = n.round();
    Ok(if (n - rounded).abs() < 1e-9 { rounded as usize } else { n.ceil() as usize }.max(1))
}

fn check_dim(field: &VelocityField, x0: &[f64]) -> Result<()> {
    match field.dim() {
        Some(d) if d != x0.len() => Err(Error::ShapeMismatch {
            op: "velocity_field",
            lhs: vec![d],
            rhs: vec![x0.len()],
        }),
        _ => Ok(()),
    }
}

/// `x ← x + F(x, t)·dt + G(x)·ΔB`.
fn em_step(
    field: &VelocityField,
    diffusion: &Diffusion,
    x: &mut [f64],
    t: f64,
    dt: f64,
    db: &[f64],
    drift: &mut [f64],
) {
    field.eval(x, t, drift);
    let g = diffusion.eval(x);
    for ((xi, fi), bi) in x.iter_mut().zip(drift.iter()).zip(db) {
        *xi = *xi + fi * dt + g * bi;
    }
}

/// Forward-Euler characteristic curve of `dx = F dt` from `x0`.
pub fn integrate_characteristics(field: &VelocityField, x0: &[f64], n_steps: usize) -> Result<SdePath> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    check_dim(field, x0)?;
    let zero = vec![0.0; x0.len()];
    let increments = vec![zero; n_steps];
    replay_path(field, &Diffusion::Constant(0.0), x0, n_steps, &increments)
}

/// Samples an Euler–Maruyama path with `n_steps` uniform steps.
pub fn simulate_path(
    field: &VelocityField,
    diffusion: &Diffusion,
    x0: &[f64],
    n_steps: usize,
    rng: &mut RngStream,
) -> Result<SdePath> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    check_dim(field, x0)?;
    let sqrt_dt = (1.0 / n_steps as f64).sqrt();
    let increments: Vec<Vec<f64>> = (0..n_steps)
        .map(|_| {
            (0..x0.len())
                .map(|_| sqrt_dt * rng.standard_normal())
                .collect()
        })
        .collect();
    replay_path(field, diffusion, x0, n_steps, &increments)
}

/// Rebuilds a path from recorded Brownian increments.
pub fn replay_path(
    field: &VelocityField,
    diffusion: &Diffusion,
    x0: &[f64],
    n_steps: usize,
    increments: &[Vec<f64>],
) -> Result<SdePath> {
    if increments.len() != n_steps {
        return Err(Error::InvalidArgument(format!(
            "{} increments for {n_steps} steps",
            increments.len()
        )));
    }
    let dt = 1.0 / n_steps as f64;
    let mut x = x0.to_vec();
    let mut drift = vec![0.0; x0.len()];
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(0.0);
    states.push(x.clone());
    for (k, db) in increments.iter().enumerate() {
        em_step(field, diffusion, &mut x, k as f64 * dt, dt, db, &mut drift);
        times.push((k + 1) as f64 * dt);
        states.push(x.clone());
    }
    Ok(SdePath {
        times,
        states,
        noise_increments: increments.to_vec(),
    })
}

fn terminal_state(
    field: &VelocityField,
    diffusion: &Diffusion,
    x0: &[f64],
    n_steps: usize,
    rng: &mut RngStream,
) -> Vec<f64> {
    let dt = 1.0 / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut x = x0.to_vec();
    let mut drift = vec![0.0; x0.len()];
    let mut db = vec![0.0; x0.len()];
    let zero = diffusion.is_zero();
    for k in 0..n_steps {
        for b in db.iter_mut() {
            *b = if zero { 0.0 } else { sqrt_dt * rng.standard_normal() };
        }
        em_step(field, diffusion, &mut x, k as f64 * dt, dt, &db, &mut drift);
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FkEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

/// Monte Carlo estimate of `u(x, 0)`. Path `i` draws from `rng.split(i)`,
/// so the result does not depend on how paths are scheduled across threads.
pub fn estimate_u_fk(
    field: &VelocityField,
    diffusion: &Diffusion,
    terminal: &TerminalCondition,
    x: &[f64],
    n_paths: usize,
    dt: f64,
    rng: &RngStream,
) -> Result<FkEstimate> {
    if n_paths < 2 {
        return Err(Error::InvalidArgument("n_paths must be at least 2".into()));
    }
    check_dim(field, x)?;
    let n_steps = steps_for(dt)?;
    let values: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.split(i as u64);
            terminal.eval(&terminal_state(field, diffusion, x, n_steps, &mut r))
        })
        .collect();
    // Welford keeps a constant sample exactly constant
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (n_paths - 1) as f64;
    Ok(FkEstimate {
        mean,
        std_error: (var / n_paths as f64).sqrt(),
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn constant_field_is_exact() {
        let f = VelocityField::Constant(vec![0.5, -1.25]);
        let p = integrate_characteristics(&f, &[1.0, 2.0], 8).unwrap();
        assert_eq!(p.terminal(), &[1.5, 0.75]);
        let zero = VelocityField::Constant(vec![0.0, 0.0]);
        let p = integrate_characteristics(&zero, &[1.0, 2.0], 3).unwrap();
        assert_eq!(p.terminal(), &[1.0, 2.0]);
    }

    #[test]
    fn quarter_rotation() {
        let f = VelocityField::Rotation {
            center: [0.0, 0.0],
            rate: FRAC_PI_2,
        };
        let p = integrate_characteristics(&f, &[1.0, 0.0], 10_000).unwrap();
        let end = p.terminal();
        assert!(end[0].abs() < 1e-3 && (end[1] - 1.0).abs() < 1e-3, "{end:?}");
    }

    #[test]
    fn zero_steps_rejected() {
        let f = VelocityField::Constant(vec![0.0]);
        assert!(integrate_characteristics(&f, &[0.0], 0).is_err());
    }

    #[test]
    fn replay_reproduces_states() {
        let f = VelocityField::Rotation {
            center: [0.2, -0.1],
            rate: 1.3,
        };
        let g = Diffusion::Function(std::sync::Arc::new(|x: &[f64]| 0.1 + 0.05 * x[0].abs()));
        let mut rng = RngStream::new(5);
        let path = simulate_path(&f, &g, &[0.3, 0.4], 50, &mut rng).unwrap();
        let again = replay_path(&f, &g, &[0.3, 0.4], 50, &path.noise_increments).unwrap();
        assert_eq!(again, path);
    }

    #[test]
    fn deterministic_sde_matches_characteristics() {
        let f = VelocityField::Rotation {
            center: [0.0, 0.0],
            rate: 0.7,
        };
        let o = TerminalCondition::GaussianBump {
            center: vec![0.1, 0.2],
            width: 0.5,
            amplitude: 1.0,
        };
        let x = [0.4, -0.3];
        let est = estimate_u_fk(&f, &Diffusion::Constant(0.0), &o, &x, 16, 0.01, &RngStream::new(3)).unwrap();
        let ch = integrate_characteristics(&f, &x, 100).unwrap();
        assert_eq!(est.mean, o.eval(ch.terminal()));
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn linear_terminal_is_unbiased() {
        let o = TerminalCondition::Linear {
            weights: vec![1.5, -0.5],
            bias: 0.25,
        };
        let x = [0.3, 0.8];
        let est = estimate_u_fk(
            &VelocityField::Constant(vec![0.0, 0.0]),
            &Diffusion::Constant(0.7),
            &o,
            &x,
            20_000,
            0.1,
            &RngStream::new(11),
        )
        .unwrap();
        let exact = o.eval(&x);
        assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn csv_columns() {
        let f = VelocityField::Constant(vec![1.0, 0.0]);
        let p = integrate_characteristics(&f, &[0.0, 0.0], 2).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,x1,x2\n0,0,0\n0.5,0.5,0\n1,1,0\n");
    }
}
