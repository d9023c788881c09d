//! One training step: a coverage update of the diffusion blocks, then a
//! cross-entropy update of the whole network.

use crate::data::{Augmentor, Dataset};
use crate::error::{Error, Result};
use crate::net::{traced, DiffusionMode, NetworkParams, NetworkSpec, ParamVars};
use crate::numkit::{RngStream, Tape, Tensor};

use super::config::{TrainConfig, Variant};
use super::infer::argmax;
use super::loss::{coverage_nll_traced, primary_ce_traced};
use super::optim::OptimState;

/// Independent random streams, one per purpose, so that e.g. a variant
/// without augmentation sees the same noise and batch order as one with.
#[derive(Debug, Clone, PartialEq)]
pub struct Streams {
    pub augment: RngStream,
    pub noise: RngStream,
    pub shuffle: RngStream,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let root = RngStream::new(seed);
        Self {
            augment: root.derive("augment"),
            noise: root.derive("noise"),
            shuffle: root.derive("shuffle"),
        }
    }
}

/// Initial parameters for a seed.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> NetworkParams {
    NetworkParams::init(spec, &mut RngStream::new(seed).derive("init"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// `None` for variants without a coverage update.
    pub cov_loss: Option<f64>,
    pub ce_loss: f64,
    /// Rows seen by the cross-entropy forward.
    pub primary_rows: usize,
    /// Correct predictions among the original (non-augmented) rows.
    pub correct: usize,
    pub seen: usize,
    /// Mean diffusion scale per block in this step.
    pub mean_sigma: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub spec: NetworkSpec,
    pub config: TrainConfig,
    pub params: NetworkParams,
    pub opt: OptimState,
    pub augmentor: Option<Augmentor>,
    pub streams: Streams,
}

fn tile(x: &Tensor, k: usize) -> Result<Tensor> {
    let mut out = x.clone();
    for _ in 1..k {
        out = out.concat_rows(x)?;
    }
    Ok(out)
}

impl Trainer {
    pub fn new(spec: NetworkSpec, config: TrainConfig, augmentor: Option<Augmentor>) -> Result<Self> {
        spec.validate()?;
        config.validate()?;
        if config.variant.uses_augmentation() && augmentor.is_none() {
            return Err(Error::InvalidArgument(format!(
                "variant {} needs an augmentation menu",
                config.variant
            )));
        }
        let params = init_params(&spec, config.seed);
        Ok(Self {
            opt: OptimState::new(&params),
            streams: Streams::new(config.seed),
            spec,
            config,
            params,
            augmentor,
        })
    }

    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.spec.input_dim || data.n_classes != self.spec.n_classes {
            return Err(Error::ShapeMismatch {
                op: "dataset vs network",
                lhs: vec![data.dim(), data.n_classes],
                rhs: vec![self.spec.input_dim, self.spec.n_classes],
            });
        }
        Ok(())
    }

    /// Coverage NLL of one batch, with gradients for every parameter (zero
    /// outside the diffusion blocks).
    pub fn coverage_grads(&mut self, x: &Tensor, x_aug: &Tensor) -> Result<(f64, Vec<Tensor>, Vec<f64>)> {
        let mut tape = Tape::new();
        let pv = ParamVars::register(&mut tape, &self.params);
        let xv = tape.leaf(x.clone());
        let pass = traced::diffused_pass(&mut tape, &self.spec, &pv, xv, DiffusionMode::Adaptive, &mut self.streams.noise)?;
        let xav = tape.leaf(x_aug.clone());
        let clean = traced::clean_pass(&mut tape, &self.spec, &pv, xav)?;
        let loss = coverage_nll_traced(&mut tape, &pv.adds, &pass.h, &clean)?;
        let mut grads = tape.backward(loss)?;
        let sigma = pass.sigma.iter().map(|&s| tape.value(s).mean()).collect();
        Ok((tape.value(loss).item(), pv.all().into_iter().map(|v| grads.take(v)).collect(), sigma))
    }

    /// One step on a batch at classifier rate `lr`.
    pub fn train_step(&mut self, x: &Tensor, y: &[usize], lr: f64) -> Result<StepRecord> {
        if y.is_empty() || x.rows() != y.len() {
            return Err(Error::InvalidArgument(format!("batch of {} rows and {} labels", x.rows(), y.len())));
        }
        let variant = self.config.variant;
        let mut cov_loss = None;
        let mut mean_sigma = None;
        let mut primary: (Tensor, Vec<usize>) = (x.clone(), y.to_vec());

        if let Variant::Adaptive { concat } = variant {
            let aug = self.augmentor.as_ref().expect("checked at construction");
            let x_rep = tile(x, self.config.k)?;
            let x_aug = aug.augment(&x_rep, &mut self.streams.augment);
            let (loss, grads, sigma) = self.coverage_grads(&x_rep, &x_aug)?;
            self.opt.adam_update(&mut self.params, &grads, self.config.diffuser_lr);
            cov_loss = Some(loss);
            mean_sigma = Some(sigma);
            if concat {
                let labels: Vec<usize> = y.iter().copied().cycle().take(y.len() * (self.config.k + 1)).collect();
                primary = (x.concat_rows(&x_aug)?, labels);
            }
        }

        let mut tape = Tape::new();
        let pv = ParamVars::register(&mut tape, &self.params);
        let xv = tape.leaf(primary.0);
        let pass = traced::diffused_pass(
            &mut tape,
            &self.spec,
            &pv,
            xv,
            variant.train_mode(),
            &mut self.streams.noise,
        )?;
        let z = traced::logits(&mut tape, &pv.head, pass.output())?;
        let loss = primary_ce_traced(&mut tape, z, &primary.1)?;
        let mut grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = pv.all().into_iter().map(|v| grads.take(v)).collect();
        self.opt.sgd_update(&mut self.params, &grads, lr, self.config.momentum);
        self.opt.step += 1;

        let logits = tape.value(z);
        let correct = (0..y.len()).filter(|&i| argmax(logits.row(i)) == y[i]).count();
        let mean_sigma =
            mean_sigma.unwrap_or_else(|| pass.sigma.iter().map(|&s| tape.value(s).mean()).collect());
        Ok(StepRecord {
            cov_loss,
            ce_loss: tape.value(loss).item(),
            primary_rows: primary.1.len(),
            correct,
            seen: y.len(),
            mean_sigma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_dataset, AugmentKind, DatasetKind};

    fn trainer(variant: Variant, lr: f64) -> (Trainer, Dataset) {
        let spec = NetworkSpec::new(2, 3, 8, 2).unwrap();
        let config = TrainConfig {
            lr,
            diffuser_lr: lr,
            variant,
            seed: 4,
            ..TrainConfig::default()
        };
        let aug = Augmentor::from_kinds(&[AugmentKind::Rotate, AugmentKind::Gaussian]).unwrap();
        let data = make_dataset(DatasetKind::TwoMoons, 16, 0.1, 1).unwrap();
        (Trainer::new(spec, config, Some(aug)).unwrap(), data)
    }

    #[test]
    fn concat_doubles_rows() {
        let (mut t, d) = trainer(Variant::Adaptive { concat: true }, 0.05);
        let r = t.train_step(&d.x, &d.y, 0.05).unwrap();
        assert_eq!(r.primary_rows, 32);
        assert!(r.cov_loss.is_some());
        let (mut t, d) = trainer(Variant::Adaptive { concat: false }, 0.05);
        assert_eq!(t.train_step(&d.x, &d.y, 0.05).unwrap().primary_rows, 16);
    }

    #[test]
    fn step_is_deterministic() {
        let (mut a, d) = trainer(Variant::Adaptive { concat: true }, 0.05);
        let (mut b, _) = trainer(Variant::Adaptive { concat: true }, 0.05);
        let ra = a.train_step(&d.x, &d.y, 0.05).unwrap();
        let rb = b.train_step(&d.x, &d.y, 0.05).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn zero_rates_keep_params() {
        let (mut t, d) = trainer(Variant::Adaptive { concat: true }, 0.0);
        let before = t.params.clone();
        let r = t.train_step(&d.x, &d.y, 0.0).unwrap();
        assert_eq!(t.params, before);
        assert!(r.ce_loss.is_finite() && r.cov_loss.unwrap().is_finite());
    }

    #[test]
    fn coverage_gradient_reaches_only_diffusion_blocks() {
        let (mut t, d) = trainer(Variant::Adaptive { concat: true }, 0.05);
        let aug = t.augmentor.clone().unwrap();
        let xa = aug.augment(&d.x, &mut RngStream::new(3));
        let (_, grads, _) = t.coverage_grads(&d.x, &xa).unwrap();
        for ((name, group, _), g) in t.params.named().into_iter().zip(&grads) {
            let nonzero = g.data().iter().any(|&v| v != 0.0);
            assert_eq!(nonzero, group == crate::net::ParamGroup::Diffusion, "{name}");
        }
    }

    #[test]
    fn adaptive_needs_augmentor() {
        let spec = NetworkSpec::new(2, 1, 4, 2).unwrap();
        assert!(Trainer::new(spec, TrainConfig::default(), None).is_err());
    }
}
