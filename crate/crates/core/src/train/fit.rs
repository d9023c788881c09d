use std::io::Write;

use rand::seq::SliceRandom;

use crate::data::{Augmentor, Dataset};
use crate::error::Result;
use crate::net::{Checkpoint, NetworkParams, NetworkSpec};

use super::config::{InferenceConfig, TrainConfig};
use super::infer::evaluate;
use super::optim::OptimState;
use super::step::Trainer;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch-mean coverage loss; `None` without coverage updates.
    pub cov_loss: Option<f64>,
    pub ce_loss: f64,
    pub train_acc: f64,
    pub eval_acc: Option<f64>,
    pub mean_sigma: Vec<f64>,
}

/// CSV `epoch, cov_loss, ce_loss, train_acc, eval_acc, mean_sigma_layer_1..L`;
/// missing values are left empty.
pub fn write_epoch_csv<W: Write>(log: &[EpochLog], n_blocks: usize, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["epoch", "cov_loss", "ce_loss", "train_acc", "eval_acc"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n_blocks).map(|l| format!("mean_sigma_layer_{l}")));
    out.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in log {
        let mut rec = vec![
            e.epoch.to_string(),
            opt(e.cov_loss),
            e.ce_loss.to_string(),
            e.train_acc.to_string(),
            opt(e.eval_acc),
        ];
        rec.extend(e.mean_sigma.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: NetworkSpec,
    pub config: TrainConfig,
    pub params: NetworkParams,
    pub opt: OptimState,
    pub log: Vec<EpochLog>,
}

impl FitResult {
    /// Parameters, optimizer buffers and the configuration echo.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(
            self.spec,
            &self.params,
            self.config.seed,
            self.opt.step,
            self.config.to_text(),
            self.opt.to_arrays(&self.params),
        )
    }
}

impl Trainer {
    /// Snapshot of the current parameters and optimizer state.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(
            self.spec,
            &self.params,
            self.config.seed,
            self.opt.step,
            self.config.to_text(),
            self.opt.to_arrays(&self.params),
        )
    }

    /// One pass over `data` in shuffled mini-batches.
    pub fn run_epoch(&mut self, data: &Dataset, epoch: usize) -> Result<EpochLog> {
        self.check_data(data)?;
        let lr = self.config.lr_at(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.streams.shuffle);
        let mut cov = 0.0;
        let mut ce = 0.0;
        let mut correct = 0;
        let mut seen = 0;
        let mut sigma = vec![0.0; self.spec.n_blocks];
        let mut batches = 0usize;
        let mut has_cov = false;
        for chunk in order.chunks(self.config.batch_size) {
            let b = data.select(chunk);
            let r = self.train_step(&b.x, &b.y, lr)?;
            if let Some(c) = r.cov_loss {
                cov += c;
                has_cov = true;
            }
            ce += r.ce_loss;
            correct += r.correct;
            seen += r.seen;
            for (s, v) in sigma.iter_mut().zip(&r.mean_sigma) {
                *s += v;
            }
            batches += 1;
        }
        let nb = batches.max(1) as f64;
        Ok(EpochLog {
            epoch,
            cov_loss: has_cov.then_some(cov / nb),
            ce_loss: ce / nb,
            train_acc: if seen > 0 { correct as f64 / seen as f64 } else { 0.0 },
            eval_acc: None,
            mean_sigma: sigma.into_iter().map(|s| s / nb).collect(),
        })
    }
}

/// Hook called after every epoch with the epoch index and the trainer.
pub type EpochObserver<'a> = &'a mut dyn FnMut(usize, &Trainer) -> Result<()>;

/// Trains for `config.epochs` epochs. With `eval`, every epoch also
/// reports ensembled accuracy on the held-out set.
pub fn fit(
    spec: NetworkSpec,
    config: TrainConfig,
    data: &Dataset,
    augmentor: Option<Augmentor>,
    eval: Option<(&Dataset, InferenceConfig)>,
    mut observer: Option<EpochObserver<'_>>,
) -> Result<FitResult> {
    let mut t = Trainer::new(spec, config, augmentor)?;
    t.check_data(data)?;
    let mut log = Vec::with_capacity(t.config.epochs);
    for epoch in 0..t.config.epochs {
        let mut entry = t.run_epoch(data, epoch)?;
        if let Some((d, inf)) = &eval {
            entry.eval_acc = Some(evaluate(&t.spec, &t.params, d, inf, t.config.variant.inference_mode())?.accuracy);
        }
        log::debug!(
            "epoch {epoch}: ce {:.4} acc {:.3} sigma {:?}",
            entry.ce_loss,
            entry.train_acc,
            entry.mean_sigma
        );
        log.push(entry);
        if let Some(obs) = observer.as_mut() {
            obs(epoch, &t)?;
        }
    }
    Ok(FitResult {
        spec: t.spec,
        config: t.config,
        params: t.params,
        opt: t.opt,
        log,
    })
}
