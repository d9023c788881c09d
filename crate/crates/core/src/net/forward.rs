//! Forward passes, both on a [`Tape`] (for training) and as plain tensor
//! functions.
//!
//! Layer `l` maps `h̃_{l-1}` to `h_l = f_l(h̃_{l-1}) + h̃_{l-1}`, then the
//! diffusion block perturbs it: `h̃_l = h_l + σ_l ⊙ z_l` with
//! `z_l ~ N(0, I)`. The clean path skips every perturbation.

use crate::error::{Error, Result};
use crate::numkit::{OpKind, RngStream, Tape, Tensor, Var};

use super::params::{AddBlockParams, NetworkParams, OutputHead, ResidualBlockParams};
use super::spec::{Activation, NetworkSpec};

/// How the diffusion blocks behave during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionMode {
    /// Learned scale `σ_l = g_φ(h_l)`.
    Adaptive,
    /// The same scale everywhere.
    Fixed(f64),
    /// No perturbation and no random draws.
    Off,
}

impl DiffusionMode {
    /// `Fixed(σ)`, collapsing `σ = 0` to [`DiffusionMode::Off`] so a zero
    /// scale never consumes random numbers.
    pub fn fixed(sigma: f64) -> Self {
        if sigma == 0.0 {
            DiffusionMode::Off
        } else {
            DiffusionMode::Fixed(sigma)
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct AddVars {
    pub w_sigma: Var,
    pub b_sigma: Var,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w: Var,
    pub b: Var,
}

/// Tape handles for every parameter.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub lift_w: Var,
    pub lift_b: Var,
    pub blocks: Vec<BlockVars>,
    pub adds: Vec<AddVars>,
    pub head: HeadVars,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &NetworkParams) -> Self {
        let lift_w = tape.leaf(params.lift_w.clone());
        let lift_b = tape.leaf(params.lift_b.clone());
        let blocks = params
            .blocks
            .iter()
            .map(|b| BlockVars {
                w1: tape.leaf(b.w1.clone()),
                b1: tape.leaf(b.b1.clone()),
                w2: tape.leaf(b.w2.clone()),
                b2: tape.leaf(b.b2.clone()),
            })
            .collect();
        let adds = params
            .adds
            .iter()
            .map(|a| AddVars {
                w_sigma: tape.leaf(a.w_sigma.clone()),
                b_sigma: tape.leaf(a.b_sigma.clone()),
                eps: a.eps,
            })
            .collect();
        let head = HeadVars {
            w: tape.leaf(params.head.w.clone()),
            b: tape.leaf(params.head.b.clone()),
        };
        Self {
            lift_w,
            lift_b,
            blocks,
            adds,
            head,
        }
    }

    /// Handles in the order of [`NetworkParams::named`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.lift_w, self.lift_b];
        for b in &self.blocks {
            out.extend([b.w1, b.b1, b.w2, b.b2]);
        }
        for a in &self.adds {
            out.extend([a.w_sigma, a.b_sigma]);
        }
        out.extend([self.head.w, self.head.b]);
        out
    }
}

/// Tape-level building blocks.
pub mod traced {
    use super::*;

    pub fn lift(tape: &mut Tape, p: &ParamVars, x: Var) -> Result<Var> {
        tape.affine(x, p.lift_w, p.lift_b)
    }

    /// `f(h) + h`.
    pub fn residual_step(tape: &mut Tape, b: &BlockVars, act: Activation, h: Var) -> Result<Var> {
        let pre = tape.affine(h, b.w1, b.b1)?;
        let a = tape.unary(act.op(), pre)?;
        let f = tape.affine(a, b.w2, b.b2)?;
        tape.add(f, h)
    }

    /// `softplus(h·Wσ + bσ) + eps`.
    pub fn sigma(tape: &mut Tape, a: &AddVars, h: Var) -> Result<Var> {
        let pre = tape.affine(h, a.w_sigma, a.b_sigma)?;
        let sp = tape.unary(OpKind::Softplus, pre)?;
        tape.shift(sp, a.eps)
    }

    pub struct Diffused {
        pub h_tilde: Var,
        pub sigma: Var,
        pub z: Tensor,
    }

    pub fn diffuse(
        tape: &mut Tape,
        a: &AddVars,
        h: Var,
        mode: DiffusionMode,
        rng: &mut RngStream,
    ) -> Result<Diffused> {
        let shape = tape.value(h).shape().to_vec();
        let sigma = match mode {
            DiffusionMode::Off => {
                let sigma = tape.leaf(Tensor::zeros(&shape));
                return Ok(Diffused {
                    h_tilde: h,
                    sigma,
                    z: Tensor::zeros(&shape),
                });
            }
            DiffusionMode::Fixed(s) => tape.leaf(Tensor::full(&shape, s)),
            DiffusionMode::Adaptive => sigma(tape, a, h)?,
        };
        let z = rng.sample_standard_normal(&shape);
        let zv = tape.leaf(z.clone());
        let noise = tape.mul(sigma, zv)?;
        let h_tilde = tape.add(h, noise)?;
        Ok(Diffused { h_tilde, sigma, z })
    }

    /// Handles produced by one diffused pass.
    pub struct Pass {
        pub h0: Var,
        pub h: Vec<Var>,
        pub sigma: Vec<Var>,
        pub h_tilde: Vec<Var>,
        pub z: Vec<Tensor>,
    }

    impl Pass {
        pub fn output(&self) -> Var {
            *self.h_tilde.last().expect("at least one block")
        }
    }

    pub fn diffused_pass(
        tape: &mut Tape,
        spec: &NetworkSpec,
        p: &ParamVars,
        x: Var,
        mode: DiffusionMode,
        rng: &mut RngStream,
    ) -> Result<Pass> {
        let h0 = lift(tape, p, x)?;
        let mut cur = h0;
        let mut out = Pass {
            h0,
            h: Vec::with_capacity(spec.n_blocks),
            sigma: Vec::with_capacity(spec.n_blocks),
            h_tilde: Vec::with_capacity(spec.n_blocks),
            z: Vec::with_capacity(spec.n_blocks),
        };
        for (b, a) in p.blocks.iter().zip(&p.adds) {
            let h = residual_step(tape, b, spec.activation, cur)?;
            let d = diffuse(tape, a, h, mode, rng)?;
            out.h.push(h);
            out.sigma.push(d.sigma);
            out.h_tilde.push(d.h_tilde);
            out.z.push(d.z);
            cur = d.h_tilde;
        }
        Ok(out)
    }

    /// Clean path `h^a_l`, `l = 1..L`.
    pub fn clean_pass(tape: &mut Tape, spec: &NetworkSpec, p: &ParamVars, x: Var) -> Result<Vec<Var>> {
        let mut cur = lift(tape, p, x)?;
        let mut out = Vec::with_capacity(spec.n_blocks);
        for b in &p.blocks {
            cur = residual_step(tape, b, spec.activation, cur)?;
            out.push(cur);
        }
        Ok(out)
    }

    pub fn logits(tape: &mut Tape, head: &HeadVars, h: Var) -> Result<Var> {
        tape.affine(h, head.w, head.b)
    }
}

/// Everything one diffused forward pass produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Lifted input.
    pub h0: Tensor,
    pub h: Vec<Tensor>,
    pub sigma: Vec<Tensor>,
    pub z: Vec<Tensor>,
    pub h_tilde: Vec<Tensor>,
    /// Clean path of the augmented input, when one was run.
    pub h_aug: Option<Vec<Tensor>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.h_tilde.last().expect("at least one block")
    }

    pub fn augmented(&self, layer: usize) -> Result<&Tensor> {
        self.h_aug
            .as_ref()
            .and_then(|a| a.get(layer))
            .ok_or(Error::MissingAugmentedPath(layer))
    }

    /// Runs the clean path on `x_aug` and stores it.
    pub fn with_augmented(mut self, spec: &NetworkSpec, params: &NetworkParams, x_aug: &Tensor) -> Result<Self> {
        self.h_aug = Some(forward_clean(spec, params, x_aug)?);
        Ok(self)
    }
}

fn check_input(spec: &NetworkSpec, x: &Tensor) -> Result<()> {
    if x.rank() != 2 || x.cols() != spec.input_dim {
        return Err(Error::ShapeMismatch {
            op: "network input",
            lhs: x.shape().to_vec(),
            rhs: vec![x.rows(), spec.input_dim],
        });
    }
    Ok(())
}

/// `f(h) + h` for one block.
pub fn residual_forward(params: &ResidualBlockParams, act: Activation, h: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let p = BlockVars {
        w1: tape.leaf(params.w1.clone()),
        b1: tape.leaf(params.b1.clone()),
        w2: tape.leaf(params.w2.clone()),
        b2: tape.leaf(params.b2.clone()),
    };
    let hv = tape.leaf(h.clone());
    let out = traced::residual_step(&mut tape, &p, act, hv)?;
    Ok(tape.value(out).clone())
}

/// `(h̃, σ)` for one adaptive diffusion block.
pub fn add_block_forward(params: &AddBlockParams, h: &Tensor, rng: &mut RngStream) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let a = AddVars {
        w_sigma: tape.leaf(params.w_sigma.clone()),
        b_sigma: tape.leaf(params.b_sigma.clone()),
        eps: params.eps,
    };
    let hv = tape.leaf(h.clone());
    let d = traced::diffuse(&mut tape, &a, hv, DiffusionMode::Adaptive, rng)?;
    Ok((tape.value(d.h_tilde).clone(), tape.value(d.sigma).clone()))
}

/// `σ = softplus(h·Wσ + bσ) + eps` without drawing noise.
pub fn sigma_forward(params: &AddBlockParams, h: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = AddVars {
        w_sigma: tape.leaf(params.w_sigma.clone()),
        b_sigma: tape.leaf(params.b_sigma.clone()),
        eps: params.eps,
    };
    let hv = tape.leaf(h.clone());
    let s = traced::sigma(&mut tape, &a, hv)?;
    Ok(tape.value(s).clone())
}

pub fn forward_diffused(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &Tensor,
    mode: DiffusionMode,
    rng: &mut RngStream,
) -> Result<ForwardTrace> {
    check_input(spec, x)?;
    let mut tape = Tape::new();
    let p = ParamVars::register(&mut tape, params);
    let xv = tape.leaf(x.clone());
    let pass = traced::diffused_pass(&mut tape, spec, &p, xv, mode, rng)?;
    let grab = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>();
    Ok(ForwardTrace {
        h0: tape.value(pass.h0).clone(),
        h: grab(&pass.h),
        sigma: grab(&pass.sigma),
        h_tilde: grab(&pass.h_tilde),
        z: pass.z,
        h_aug: None,
    })
}

/// Clean path `h^a_1, ..., h^a_L`.
pub fn forward_clean(spec: &NetworkSpec, params: &NetworkParams, x: &Tensor) -> Result<Vec<Tensor>> {
    check_input(spec, x)?;
    let mut tape = Tape::new();
    let p = ParamVars::register(&mut tape, params);
    let xv = tape.leaf(x.clone());
    let hs = traced::clean_pass(&mut tape, spec, &p, xv)?;
    Ok(hs.into_iter().map(|v| tape.value(v).clone()).collect())
}

pub fn logits(head: &OutputHead, h: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let hv = HeadVars {
        w: tape.leaf(head.w.clone()),
        b: tape.leaf(head.b.clone()),
    };
    let x = tape.leaf(h.clone());
    let out = traced::logits(&mut tape, &hv, x)?;
    Ok(tape.value(out).clone())
}
