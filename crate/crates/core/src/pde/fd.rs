//! Explicit finite differences for
//! `∂u/∂t + F·∇u + ½ G² Δu = 0` with `u(·, 1) = o`.
//!
//! With `τ = 1 - t` the problem becomes the forward march
//! `∂u/∂τ = F·∇u + ½ G² Δu` from `τ = 0` to `τ = 1`. Advection is
//! differenced upwind (information arrives from the side `F` points to)
//! with van Leer limited second-order face values, the Laplacian with the
//! 5-point stencil, and the boundary is homogeneous Neumann (ghost node =
//! edge node).
//!
//! The limited upwind difference equals `c·(u_up − u)` with `c ∈ [0, 2]`,
//! so the step bound `dt ≤ min(h / (4 max(|F₁| + |F₂|)), h² / (4 max G²))`,
//! `h = min(hx, hy)`, keeps every Euler update a convex combination of
//! neighbouring values. Time steps use Heun's method written as the average
//! of `u` and two chained Euler updates, so the discrete maximum principle
//! carries over while the Euler scheme's `O(dt)` anti-diffusion cancels.

use crate::error::{Error, Result};
use crate::numkit::Tensor;

use super::field::{Diffusion, TerminalCondition, VelocityField};
use super::grid::{GridField, GridSpec};

#[derive(Debug, Clone)]
pub struct FdSolution {
    /// `u(·, 0)`.
    pub field: GridField,
    pub dt: f64,
    pub n_steps: usize,
    /// Stability limit the step was checked against.
    pub dt_limit: f64,
}

/// Harmonic mean of two one-sided differences, zero at extrema.
fn van_leer(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Limited upwind difference at index `i` of a line `u(0..n)` (Neumann
/// ends). `forward` selects `u_{i+1}` as the upwind side.
fn upwind_diff(u: impl Fn(usize) -> f64, i: usize, n: usize, forward: bool) -> f64 {
    let at = |k: isize| u(k.clamp(0, n as isize - 1) as usize);
    let slope = |k: isize| van_leer(at(k + 1) - at(k), at(k) - at(k - 1));
    let i = i as isize;
    if forward {
        (at(i + 1) - 0.5 * slope(i + 1)) - (at(i) - 0.5 * slope(i))
    } else {
        (at(i) + 0.5 * slope(i)) - (at(i - 1) + 0.5 * slope(i - 1))
    }
}

fn velocity_on_grid(field: &VelocityField, grid: &GridSpec, t: f64) -> (Vec<f64>, Vec<f64>) {
    let n = grid.nx * grid.ny;
    let mut fx = Vec::with_capacity(n);
    let mut fy = Vec::with_capacity(n);
    let mut out = [0.0; 2];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            field.eval(&[grid.x(i), grid.y(j)], t, &mut out);
            fx.push(out[0]);
            fy.push(out[1]);
        }
    }
    (fx, fy)
}

/// `out = u + dt · (F·∇u + ½ G² Δu)`; `g2 = None` skips the Laplacian.
fn euler(grid: &GridSpec, (fx, fy): &(Vec<f64>, Vec<f64>), g2: Option<&[f64]>, dt: f64, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    for j in 0..ny {
        let jn = (j + 1).min(ny - 1);
        let js = j.saturating_sub(1);
        let row = &u[j * nx..(j + 1) * nx];
        for i in 0..nx {
            let k = j * nx + i;
            let ax = fx[k] * upwind_diff(|q| row[q], i, nx, fx[k] > 0.0) / hx;
            let ay = fy[k] * upwind_diff(|q| u[q * nx + i], j, ny, fy[k] > 0.0) / hy;
            let rate = match g2 {
                None => ax + ay,
                Some(g2) => {
                    let uc = u[k];
                    let (ue, uw) = (row[(i + 1).min(nx - 1)], row[i.saturating_sub(1)]);
                    let (un, us) = (u[jn * nx + i], u[js * nx + i]);
                    let lap = (ue - 2.0 * uc + uw) / (hx * hx) + (un - 2.0 * uc + us) / (hy * hy);
                    ax + ay + 0.5 * g2[k] * lap
                }
            };
            out[k] = u[k] + dt * rate;
        }
    }
}

/// Largest stable step for this problem.
pub fn stability_limit(field: &VelocityField, g2_max: f64, grid: &GridSpec) -> f64 {
    let h = grid.hx().min(grid.hy());
    let mut f_max: f64 = 0.0;
    for t in field.time_samples() {
        let (fx, fy) = velocity_on_grid(field, grid, t);
        for (a, b) in fx.iter().zip(&fy) {
            f_max = f_max.max(a.abs() + b.abs());
        }
    }
    let adv = if f_max > 0.0 { h / (4.0 * f_max) } else { f64::INFINITY };
    let dif = if g2_max > 0.0 { h * h / (4.0 * g2_max) } else { f64::INFINITY };
    adv.min(dif)
}

/// Solves back from `t = 1` to `t = 0`. `dt = None` uses the stability
/// limit; an explicit `dt` above the limit is rejected.
pub fn solve_te_fd(
    field: &VelocityField,
    diffusion: &Diffusion,
    terminal: &TerminalCondition,
    grid: &GridSpec,
    dt: Option<f64>,
) -> Result<FdSolution> {
    if let Some(d) = field.dim() {
        if d != 2 {
            return Err(Error::InvalidArgument(format!(
                "finite-difference solver is two-dimensional, velocity field has dimension {d}"
            )));
        }
    }
    let g2: Vec<f64> = {
        let g = grid.sample(|p| diffusion.eval(&p));
        if let Some(&neg) = g.data().iter().find(|&&v| v < 0.0 || v.is_nan()) {
            return Err(Error::NegativeDiffusion(neg));
        }
        g.data().iter().map(|v| v * v).collect()
    };
    let g2_max = g2.iter().copied().fold(0.0, f64::max);
    let limit = stability_limit(field, g2_max, grid);
    let target = match dt {
        Some(d) if !(d > 0.0) => {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {d}")))
        }
        Some(d) if d > limit * (1.0 + 1e-12) => return Err(Error::Stability { dt: d, limit }),
        Some(d) => d,
        None => limit,
    };
    let n_steps = if target >= 1.0 {
        1
    } else {
        (1.0 / target - 1e-9).ceil() as usize
    };
    let dt = 1.0 / n_steps as f64;

    let mut u = grid.sample(|p| terminal.eval(&p)).into_data();
    let mut stage = vec![0.0; u.len()];
    let mut next = vec![0.0; u.len()];
    let mut vel = velocity_on_grid(field, grid, 1.0);
    let g2 = (g2_max > 0.0).then_some(g2.as_slice());

    for step in 0..n_steps {
        let t = 1.0 - step as f64 * dt;
        if field.is_time_dependent() {
            vel = velocity_on_grid(field, grid, t);
        }
        euler(grid, &vel, g2, dt, &u, &mut stage);
        if field.is_time_dependent() {
            vel = velocity_on_grid(field, grid, t - dt);
        }
        euler(grid, &vel, g2, dt, &stage, &mut next);
        for (n, &v) in next.iter_mut().zip(&u) {
            *n = 0.5 * (v + *n);
        }
        std::mem::swap(&mut u, &mut next);
    }

    let (nx, ny) = (grid.nx, grid.ny);
    let values = Tensor::new(&[ny, nx], u)?;
    Ok(FdSolution {
        field: GridField::new(*grid, values, 0.0)?,
        dt,
        n_steps,
        dt_limit: limit,
    })
}
