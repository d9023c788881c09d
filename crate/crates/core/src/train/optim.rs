//! Momentum SGD for the whole network and Adam for the diffusion blocks.

use crate::error::{Error, Result};
use crate::net::{NetworkParams, ParamGroup};
use crate::numkit::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Buffers of both optimizers, aligned with [`NetworkParams::named`].
/// Adam buffers are kept only for diffusion-block parameters; their
/// entries for other parameters stay empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub velocity: Vec<Tensor>,
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
    /// Adam updates applied so far.
    pub adam_t: u64,
    /// Training steps taken.
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &NetworkParams) -> Self {
        let named = params.named();
        let zeros_like = |t: &Tensor| Tensor::zeros(t.shape());
        let adam: Vec<Tensor> = named
            .iter()
            .map(|(_, g, t)| if *g == ParamGroup::Diffusion { zeros_like(t) } else { Tensor::zeros(&[0]) })
            .collect();
        Self {
            velocity: named.iter().map(|(_, _, t)| zeros_like(t)).collect(),
            adam_m: adam.clone(),
            adam_v: adam,
            adam_t: 0,
            step: 0,
        }
    }

    /// `v ← μ v + g`, `p ← p − lr v` for every parameter.
    pub fn sgd_update(&mut self, params: &mut NetworkParams, grads: &[Tensor], lr: f64, momentum: f64) {
        for ((p, v), g) in params.tensors_mut().into_iter().zip(&mut self.velocity).zip(grads) {
            for ((pi, vi), gi) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vi = momentum * *vi + gi;
                *pi -= lr * *vi;
            }
        }
    }

    /// Bias-corrected Adam on the diffusion-block parameters only.
    pub fn adam_update(&mut self, params: &mut NetworkParams, grads: &[Tensor], lr: f64) {
        self.adam_t += 1;
        let t = self.adam_t as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let groups = params.groups();
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            if groups[i] != ParamGroup::Diffusion {
                continue;
            }
            adam_apply(p, &mut self.adam_m[i], &mut self.adam_v[i], &grads[i], lr, c1, c2);
        }
    }

    /// Named arrays for a checkpoint.
    pub fn to_arrays(&self, params: &NetworkParams) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, (name, g, _)) in params.named().into_iter().enumerate() {
            out.push((format!("opt.velocity.{name}"), self.velocity[i].clone()));
            if g == ParamGroup::Diffusion {
                out.push((format!("opt.adam_m.{name}"), self.adam_m[i].clone()));
                out.push((format!("opt.adam_v.{name}"), self.adam_v[i].clone()));
            }
        }
        out.push(("opt.adam_t".into(), Tensor::scalar(self.adam_t as f64)));
        out.push(("opt.step".into(), Tensor::scalar(self.step as f64)));
        out
    }

    pub fn from_arrays(params: &NetworkParams, arrays: &[(String, Tensor)]) -> Result<Self> {
        let find = |n: &str| {
            arrays
                .iter()
                .find(|(k, _)| k == n)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Format(format!("missing optimizer array `{n}`")))
        };
        let mut s = Self::new(params);
        for (i, (name, g, t)) in params.named().into_iter().enumerate() {
            let check = |a: Tensor| {
                if a.shape() == t.shape() {
                    Ok(a)
                } else {
                    Err(Error::Format(format!("optimizer buffer for `{name}` has shape {:?}", a.shape())))
                }
            };
            s.velocity[i] = check(find(&format!("opt.velocity.{name}"))?)?;
            if g == ParamGroup::Diffusion {
                s.adam_m[i] = check(find(&format!("opt.adam_m.{name}"))?)?;
                s.adam_v[i] = check(find(&format!("opt.adam_v.{name}"))?)?;
            }
        }
        s.adam_t = find("opt.adam_t")?.item() as u64;
        s.step = find("opt.step")?.item() as u64;
        Ok(s)
    }
}

/// One bias-corrected Adam update of `p`; `c1`, `c2` are `1 − β^t`.
pub fn adam_apply(p: &mut Tensor, m: &mut Tensor, v: &mut Tensor, g: &Tensor, lr: f64, c1: f64, c2: f64) {
    for (((pi, mi), vi), gi) in p
        .data_mut()
        .iter_mut()
        .zip(m.data_mut())
        .zip(v.data_mut())
        .zip(g.data())
    {
        *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
        *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
        *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetworkSpec;
    use crate::numkit::RngStream;

    fn setup() -> (NetworkParams, Vec<Tensor>) {
        let spec = NetworkSpec::new(2, 2, 3, 2).unwrap();
        let p = NetworkParams::init(&spec, &mut RngStream::new(0));
        let g: Vec<Tensor> = p.named().iter().map(|(_, _, t)| Tensor::ones(t.shape())).collect();
        (p, g)
    }

    #[test]
    fn zero_rates_leave_params_unchanged() {
        let (mut p, g) = setup();
        let before = p.clone();
        let mut s = OptimState::new(&p);
        s.sgd_update(&mut p, &g, 0.0, 0.9);
        s.adam_update(&mut p, &g, 0.0);
        assert_eq!(p, before);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let (mut p, g) = setup();
        let before = p.clone();
        let mut s = OptimState::new(&p);
        s.adam_update(&mut p, &g, 0.01);
        let d = before.adds[0].b_sigma.data()[0] - p.adds[0].b_sigma.data()[0];
        assert!((d - 0.01).abs() < 1e-9);
        assert_eq!(before.blocks, p.blocks);
    }

    #[test]
    fn arrays_round_trip() {
        let (mut p, g) = setup();
        let mut s = OptimState::new(&p);
        s.sgd_update(&mut p, &g, 0.1, 0.9);
        s.adam_update(&mut p, &g, 0.1);
        s.step = 3;
        let back = OptimState::from_arrays(&p, &s.to_arrays(&p)).unwrap();
        assert_eq!(back, s);
    }
}
