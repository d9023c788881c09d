use crate::error::{Error, Result};
use crate::numkit::{softplus_inv, RngStream, Tensor};

use super::spec::{Activation, NetworkSpec};

/// Initial diffusion scale emitted by a fresh diffusion block.
pub const INITIAL_SIGMA: f64 = 0.1;

/// `f(h) = act(h·W1 + b1)·W2 + b2`; the block outputs `f(h) + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlockParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl ResidualBlockParams {
    pub fn zeros(width: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[width, width]),
            b1: Tensor::zeros(&[width]),
            w2: Tensor::zeros(&[width, width]),
            b2: Tensor::zeros(&[width]),
        }
    }

    pub fn width(&self) -> usize {
        self.b2.len()
    }

    /// `f(x)` for a single point, without the skip connection.
    pub fn increment(&self, x: &[f64], act: Activation) -> Vec<f64> {
        let w = self.width();
        let mut hidden = vec![0.0; w];
        for (k, &xk) in x.iter().enumerate() {
            for (j, hj) in hidden.iter_mut().enumerate() {
                *hj += xk * self.w1.data()[k * w + j];
            }
        }
        for (hj, bj) in hidden.iter_mut().zip(self.b1.data()) {
            *hj = act.apply(*hj + bj);
        }
        let mut out = vec![0.0; w];
        for (k, &hk) in hidden.iter().enumerate() {
            for (j, oj) in out.iter_mut().enumerate() {
                *oj += hk * self.w2.data()[k * w + j];
            }
        }
        for (oj, bj) in out.iter_mut().zip(self.b2.data()) {
            *oj += bj;
        }
        out
    }
}

/// `σ = softplus(h·Wσ + bσ) + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct AddBlockParams {
    pub w_sigma: Tensor,
    pub b_sigma: Tensor,
    pub eps: f64,
}

impl AddBlockParams {
    /// Zero weights and a bias that makes every scale `sigma` (before the floor).
    pub fn constant(width: usize, sigma: f64, eps: f64) -> Self {
        Self {
            w_sigma: Tensor::zeros(&[width, width]),
            b_sigma: Tensor::full(&[width], softplus_inv(sigma)),
            eps,
        }
    }
}

/// Logit map `h·Wψ + bψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputHead {
    pub w: Tensor,
    pub b: Tensor,
}

impl OutputHead {
    pub fn n_classes(&self) -> usize {
        self.b.len()
    }
}

/// Which optimizer group a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Input lift and residual blocks.
    Residual,
    /// Diffusion blocks.
    Diffusion,
    /// Output head.
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub lift_w: Tensor,
    pub lift_b: Tensor,
    pub blocks: Vec<ResidualBlockParams>,
    pub adds: Vec<AddBlockParams>,
    pub head: OutputHead,
}

fn gaussian(rng: &mut RngStream, shape: &[usize], std: f64) -> Tensor {
    rng.sample_standard_normal(shape).map(|v| v * std)
}

impl NetworkParams {
    /// Seeded initialization. Residual second layers are scaled by
    /// `1/√L` so the stack starts close to the identity map.
    pub fn init(spec: &NetworkSpec, rng: &mut RngStream) -> Self {
        let w = spec.width;
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let lift_w = gaussian(rng, &[spec.input_dim, w], fan(spec.input_dim));
        let blocks = (0..spec.n_blocks)
            .map(|_| ResidualBlockParams {
                w1: gaussian(rng, &[w, w], fan(w)),
                b1: Tensor::zeros(&[w]),
                w2: gaussian(rng, &[w, w], fan(w) / (spec.n_blocks as f64).sqrt()),
                b2: Tensor::zeros(&[w]),
            })
            .collect();
        let adds = (0..spec.n_blocks)
            .map(|_| AddBlockParams::constant(w, INITIAL_SIGMA, spec.eps))
            .collect();
        let head = OutputHead {
            w: gaussian(rng, &[w, spec.n_classes], fan(w)),
            b: Tensor::zeros(&[spec.n_classes]),
        };
        Self {
            lift_w,
            lift_b: Tensor::zeros(&[w]),
            blocks,
            adds,
            head,
        }
    }

    /// Every parameter tensor with a stable name and its group, in a fixed
    /// order.
    pub fn named(&self) -> Vec<(String, ParamGroup, &Tensor)> {
        let mut out = vec![
            ("lift.w".to_string(), ParamGroup::Residual, &self.lift_w),
            ("lift.b".to_string(), ParamGroup::Residual, &self.lift_b),
        ];
        for (l, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{l}.w1"), ParamGroup::Residual, &b.w1));
            out.push((format!("block{l}.b1"), ParamGroup::Residual, &b.b1));
            out.push((format!("block{l}.w2"), ParamGroup::Residual, &b.w2));
            out.push((format!("block{l}.b2"), ParamGroup::Residual, &b.b2));
        }
        for (l, a) in self.adds.iter().enumerate() {
            out.push((format!("add{l}.w_sigma"), ParamGroup::Diffusion, &a.w_sigma));
            out.push((format!("add{l}.b_sigma"), ParamGroup::Diffusion, &a.b_sigma));
        }
        out.push(("head.w".to_string(), ParamGroup::Head, &self.head.w));
        out.push(("head.b".to_string(), ParamGroup::Head, &self.head.b));
        out
    }

    /// Mutable views in the same order as [`NetworkParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.lift_w, &mut self.lift_b];
        for b in &mut self.blocks {
            out.extend([&mut b.w1, &mut b.b1, &mut b.w2, &mut b.b2]);
        }
        for a in &mut self.adds {
            out.extend([&mut a.w_sigma, &mut a.b_sigma]);
        }
        out.extend([&mut self.head.w, &mut self.head.b]);
        out
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        self.named().into_iter().map(|(_, g, _)| g).collect()
    }

    /// Rebuilds parameters from named arrays, checking every shape against
    /// `spec`.
    pub fn from_named(spec: &NetworkSpec, arrays: &[(String, Tensor)]) -> Result<Self> {
        let mut template = Self::init(spec, &mut RngStream::new(0));
        let names: Vec<String> = template.named().into_iter().map(|(n, _, _)| n).collect();
        for (name, slot) in names.iter().zip(template.tensors_mut()) {
            let (_, t) = arrays
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Format(format!(
                    "parameter `{name}` has shape {:?}, spec expects {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        for a in &mut template.adds {
            a.eps = spec.eps;
        }
        Ok(template)
    }

    pub fn n_params(&self) -> usize {
        self.named().iter().map(|(_, _, t)| t.len()).sum()
    }
}
