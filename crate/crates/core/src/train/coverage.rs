//! Fitting the diffusion heads alone on frozen representations.

use crate::error::{Error, Result};
use crate::net::forward::{traced, AddVars};
use crate::net::AddBlockParams;
use crate::numkit::{Tape, Tensor};

use super::loss::coverage_nll_traced;
use super::config::cosine_lr;
use super::optim::{adam_apply, ADAM_BETA1, ADAM_BETA2};

fn check(adds: &[AddBlockParams], h: &[Tensor], h_aug: &[Tensor]) -> Result<()> {
    if adds.is_empty() || h.len() != adds.len() || h_aug.len() != adds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} heads for {} / {} feature layers",
            adds.len(),
            h.len(),
            h_aug.len()
        )));
    }
    Ok(())
}

/// `mean |σ² − (h^a − h)²| / mean (h^a − h)²`, pooled over every layer and
/// element. Zero exactly at the pointwise optimum of the coverage loss.
pub fn sigma_gap(adds: &[AddBlockParams], h: &[Tensor], h_aug: &[Tensor]) -> Result<f64> {
    check(adds, h, h_aug)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((a, hl), hal) in adds.iter().zip(h).zip(h_aug) {
        let mut tape = Tape::new();
        let av = AddVars {
            w_sigma: tape.leaf(a.w_sigma.clone()),
            b_sigma: tape.leaf(a.b_sigma.clone()),
            eps: a.eps,
        };
        let hv = tape.leaf(hl.clone());
        let s = traced::sigma(&mut tape, &av, hv)?;
        for ((sv, x), y) in tape.value(s).data().iter().zip(hl.data()).zip(hal.data()) {
            let d2 = (y - x) * (y - x);
            num += (sv * sv - d2).abs();
            den += d2;
        }
    }
    Ok(num / den)
}

/// Length of one cosine cycle in [`fit_sigma_heads`].
pub const RESTART_PERIOD: usize = 500;

/// Full-batch Adam on the heads only; returns the loss before each step.
/// Every [`RESTART_PERIOD`] steps the moments are cleared and the step size
/// restarts a cosine decay from `lr`. This settles well below the
/// oscillation floor of a constant rate.
pub fn fit_sigma_heads(
    adds: &mut [AddBlockParams],
    h: &[Tensor],
    h_aug: &[Tensor],
    steps: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    check(adds, h, h_aug)?;
    let zeros: Vec<Tensor> = adds
        .iter()
        .flat_map(|a| [Tensor::zeros(a.w_sigma.shape()), Tensor::zeros(a.b_sigma.shape())])
        .collect();
    let (mut m, mut v) = (zeros.clone(), zeros.clone());
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let t = step % RESTART_PERIOD + 1;
        if t == 1 {
            m.clone_from(&zeros);
            v.clone_from(&zeros);
        }
        let mut tape = Tape::new();
        let vars: Vec<AddVars> = adds
            .iter()
            .map(|a| AddVars {
                w_sigma: tape.leaf(a.w_sigma.clone()),
                b_sigma: tape.leaf(a.b_sigma.clone()),
                eps: a.eps,
            })
            .collect();
        let hv: Vec<_> = h.iter().map(|x| tape.leaf(x.clone())).collect();
        let hav: Vec<_> = h_aug.iter().map(|x| tape.leaf(x.clone())).collect();
        let loss = coverage_nll_traced(&mut tape, &vars, &hv, &hav)?;
        losses.push(tape.value(loss).item());
        let mut g = tape.backward(loss)?;
        let c1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(t as i32);
        let lr = cosine_lr(lr, t - 1, RESTART_PERIOD);
        for (i, (a, av)) in adds.iter_mut().zip(&vars).enumerate() {
            adam_apply(&mut a.w_sigma, &mut m[2 * i], &mut v[2 * i], &g.take(av.w_sigma), lr, c1, c2);
            adam_apply(&mut a.b_sigma, &mut m[2 * i + 1], &mut v[2 * i + 1], &g.take(av.b_sigma), lr, c1, c2);
        }
    }
    Ok(losses)
}
