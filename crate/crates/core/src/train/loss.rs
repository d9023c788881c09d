//! Coverage negative log-likelihood and cross-entropy.

use crate::error::{Error, Result};
use crate::net::forward::{traced, AddVars};
use crate::net::ForwardTrace;
use crate::numkit::{OpKind, Tape, Tensor, Var};

/// `(1/2N) Σ_l Σ [log σ_l² + (h^a_l − h_l)² / σ_l²]` from a recorded trace.
pub fn coverage_nll(trace: &ForwardTrace) -> Result<f64> {
    let n = trace.h0.rows() as f64;
    let mut total = 0.0;
    for l in 0..trace.h.len() {
        let ha = trace.augmented(l)?;
        let h = &trace.h[l];
        if ha.shape() != h.shape() {
            return Err(Error::ShapeMismatch {
                op: "coverage_nll",
                lhs: h.shape().to_vec(),
                rhs: ha.shape().to_vec(),
            });
        }
        for ((a, b), s) in ha.data().iter().zip(h.data()).zip(trace.sigma[l].data()) {
            let v = s * s;
            total += v.ln() + (a - b) * (a - b) / v;
        }
    }
    Ok(total / (2.0 * n))
}

/// Tape version. `h` and `h_aug` are cut from the graph and `σ_l` is
/// recomputed from the cut `h_l`, so only the diffusion-block parameters
/// receive gradient.
pub fn coverage_nll_traced(tape: &mut Tape, adds: &[AddVars], h: &[Var], h_aug: &[Var]) -> Result<Var> {
    if h_aug.len() != h.len() {
        return Err(Error::MissingAugmentedPath(h_aug.len().min(h.len())));
    }
    let n = tape.value(h[0]).rows() as f64;
    let mut total: Option<Var> = None;
    for ((a, &hl), &hal) in adds.iter().zip(h).zip(h_aug) {
        let hs = tape.stop_gradient(hl)?;
        let has = tape.stop_gradient(hal)?;
        let sigma = traced::sigma(tape, a, hs)?;
        let var = tape.unary(OpKind::Square, sigma)?;
        let log_var = tape.unary(OpKind::Log, var)?;
        let diff = tape.sub(has, hs)?;
        let d2 = tape.unary(OpKind::Square, diff)?;
        let ratio = tape.div(d2, var)?;
        let term = tape.add(log_var, ratio)?;
        let s = tape.sum(term)?;
        total = Some(match total {
            None => s,
            Some(t) => tape.add(t, s)?,
        });
    }
    let total = total.ok_or_else(|| Error::InvalidArgument("no layers".into()))?;
    tape.scale(total, 1.0 / (2.0 * n))
}

fn one_hot(labels: &[usize], n_classes: usize) -> Result<Tensor> {
    let mut m = vec![0.0; labels.len() * n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::LabelOutOfRange { label: l, n_classes });
        }
        m[i * n_classes + l] = 1.0;
    }
    Tensor::new(&[labels.len(), n_classes], m)
}

/// Mean negative log-softmax at the true class.
pub fn primary_ce(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone());
    let loss = primary_ce_traced(&mut tape, z, labels)?;
    Ok(tape.value(loss).item())
}

pub fn primary_ce_traced(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.value(logits).shape().to_vec();
    if shape.len() != 2 || shape[0] != labels.len() || labels.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "primary_ce",
            lhs: shape,
            rhs: vec![labels.len()],
        });
    }
    let mask = tape.leaf(one_hot(labels, shape[1])?);
    let ls = tape.unary(OpKind::LogSoftmax, logits)?;
    let picked = tape.mul(ls, mask)?;
    let s = tape.sum(picked)?;
    tape.scale(s, -1.0 / labels.len() as f64)
}
