//! Train several variants on shared seeds and score each on the clean test
//! set and every corruption.

use std::io::Write;

use rayon::prelude::*;

use crate::data::{corruption_suite, AugmentChoice, Augmentor, CorruptedSet, CorruptionLadder, Dataset, SEVERITIES};
use crate::error::{Error, Result};
use crate::net::{DiffusionMode, NetworkParams, NetworkSpec};
use crate::train::{evaluate, fit, InferenceConfig, TrainConfig, Variant};

use super::table::ErrorTable;

/// Clean accuracy plus the corruption error table of one model.
pub fn evaluate_suite(
    spec: &NetworkSpec,
    params: &NetworkParams,
    mode: DiffusionMode,
    inf: &InferenceConfig,
    clean: &Dataset,
    suite: &[CorruptedSet],
) -> Result<(f64, ErrorTable)> {
    let clean_acc = evaluate(spec, params, clean, inf, mode)?.accuracy;
    let mut kinds: Vec<String> = Vec::new();
    for c in suite {
        let k = c.kind.to_string();
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    let mut table = ErrorTable::new(kinds.clone(), SEVERITIES);
    for c in suite {
        let idx = kinds.iter().position(|k| *k == c.kind.to_string()).expect("collected above");
        let acc = evaluate(spec, params, &c.data, inf, mode)?.accuracy;
        table.set(idx, c.severity, 1.0 - acc)?;
    }
    Ok((clean_acc, table))
}

/// One column of the sweep: a variant and, for adaptive variants, the
/// augmentation menu guiding its diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepVariant {
    pub label: String,
    pub variant: Variant,
    pub augment: Option<Vec<AugmentChoice>>,
}

impl SweepVariant {
    pub fn fixed(sigma: f64) -> Self {
        Self {
            label: format!("fixed_{sigma}"),
            variant: Variant::Fixed(sigma),
            augment: None,
        }
    }

    pub fn erm() -> Self {
        Self {
            label: "erm".into(),
            variant: Variant::Erm,
            augment: None,
        }
    }

    pub fn adaptive(concat: bool, augment: Vec<AugmentChoice>) -> Self {
        let variant = Variant::Adaptive { concat };
        Self {
            label: variant.to_string(),
            variant,
            augment: Some(augment),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub spec: NetworkSpec,
    /// Shared recipe; its `variant` is replaced per column.
    pub train: TrainConfig,
    pub variants: Vec<SweepVariant>,
    pub corruptions: Vec<CorruptionLadder>,
    pub inference: InferenceConfig,
    pub corruption_seed: u64,
}

impl SweepConfig {
    /// Fixed-scale columns for every ladder entry, then an adaptive column
    /// trained in the fair mode (augmented samples only guide σ).
    pub fn fixed_ladder(
        spec: NetworkSpec,
        train: TrainConfig,
        sigmas: &[f64],
        augment: Vec<AugmentChoice>,
        corruptions: Vec<CorruptionLadder>,
        inference: InferenceConfig,
    ) -> Self {
        let mut variants: Vec<SweepVariant> = sigmas.iter().map(|&s| SweepVariant::fixed(s)).collect();
        variants.push(SweepVariant::adaptive(false, augment));
        Self {
            corruption_seed: train.seed,
            spec,
            train,
            variants,
            corruptions,
            inference,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub label: String,
    pub variant: Variant,
    pub clean_acc: f64,
    pub table: ErrorTable,
    pub params: NetworkParams,
}

impl VariantResult {
    /// Mean accuracy over the severities of corruption kind `c`.
    pub fn kind_accuracy(&self, c: usize) -> Result<f64> {
        Ok(1.0 - self.table.kind_sum(c)? / self.table.severities as f64)
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub kinds: Vec<String>,
    pub variants: Vec<VariantResult>,
}

impl SweepResult {
    /// Test-distribution names: `clean` then every corruption kind.
    pub fn columns(&self) -> Vec<String> {
        std::iter::once("clean".to_string()).chain(self.kinds.iter().cloned()).collect()
    }

    /// Accuracy per variant (rows) and test distribution (columns).
    pub fn heatmap(&self) -> Result<Vec<Vec<f64>>> {
        self.variants
            .iter()
            .map(|v| {
                let mut row = vec![v.clean_acc];
                for c in 0..self.kinds.len() {
                    row.push(v.kind_accuracy(c)?);
                }
                Ok(row)
            })
            .collect()
    }

    /// CSV with one row per variant: `variant, clean, <kind>...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["variant".to_string()];
        header.extend(self.columns());
        out.write_record(&header)?;
        for (v, row) in self.variants.iter().zip(self.heatmap()?) {
            let mut rec = vec![v.label.clone()];
            rec.extend(row.iter().map(|a| a.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.label == label)
    }
}

/// Seed-averaged view of one or more sweeps over the same variants and
/// corruption kinds: which fixed scale wins each kind, and how the adaptive
/// column compares.
#[derive(Debug, Clone, PartialEq)]
pub struct DilemmaSummary {
    pub kinds: Vec<String>,
    pub fixed: Vec<String>,
    /// Index into `fixed` of the best column per kind (lowest index on ties).
    pub best_fixed: Vec<usize>,
    pub best_fixed_acc: Vec<f64>,
    pub adaptive: String,
    pub adaptive_acc: Vec<f64>,
}

impl DilemmaSummary {
    /// Number of different fixed scales that win at least one kind.
    pub fn distinct_winners(&self) -> usize {
        let mut w = self.best_fixed.clone();
        w.sort_unstable();
        w.dedup();
        w.len()
    }

    /// Mean adaptive accuracy minus the mean per-kind best fixed accuracy.
    pub fn adaptive_margin(&self) -> f64 {
        let n = self.kinds.len() as f64;
        (self.adaptive_acc.iter().sum::<f64>() - self.best_fixed_acc.iter().sum::<f64>()) / n
    }

    /// At least two kinds prefer different fixed scales and the adaptive
    /// column trails the per-kind best by no more than `tolerance`.
    pub fn holds(&self, tolerance: f64) -> bool {
        self.distinct_winners() >= 2 && self.adaptive_margin() >= -tolerance
    }

    /// CSV `kind, best_fixed, best_fixed_acc, adaptive_acc`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["kind", "best_fixed", "best_fixed_acc", "adaptive_acc"])?;
        for (c, k) in self.kinds.iter().enumerate() {
            out.write_record([
                k.clone(),
                self.fixed[self.best_fixed[c]].clone(),
                self.best_fixed_acc[c].to_string(),
                self.adaptive_acc[c].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean per-kind accuracy over `runs` (e.g. one sweep per seed). Every run
/// must have the same variants and kinds, with at least one fixed and one
/// adaptive column.
pub fn dilemma_summary(runs: &[SweepResult]) -> Result<DilemmaSummary> {
    let first = runs
        .first()
        .ok_or_else(|| Error::InvalidArgument("no sweep results to summarize".into()))?;
    let labels: Vec<&str> = first.variants.iter().map(|v| v.label.as_str()).collect();
    for r in runs {
        if r.kinds != first.kinds || r.variants.iter().map(|v| v.label.as_str()).ne(labels.iter().copied()) {
            return Err(Error::InvalidArgument("sweeps cover different variants or kinds".into()));
        }
    }
    let fixed_idx: Vec<usize> = (0..labels.len())
        .filter(|&i| matches!(first.variants[i].variant, Variant::Fixed(_)))
        .collect();
    let adaptive_idx = (0..labels.len())
        .find(|&i| matches!(first.variants[i].variant, Variant::Adaptive { .. }))
        .ok_or_else(|| Error::InvalidArgument("sweep has no adaptive column".into()))?;
    if fixed_idx.is_empty() || first.kinds.is_empty() {
        return Err(Error::InvalidArgument("sweep has no fixed column or no corruption kind".into()));
    }
    let mut mean = vec![vec![0.0; first.kinds.len()]; labels.len()];
    for r in runs {
        for (i, v) in r.variants.iter().enumerate() {
            for (c, m) in mean[i].iter_mut().enumerate() {
                *m += v.kind_accuracy(c)? / runs.len() as f64;
            }
        }
    }
    let mut best_fixed = Vec::new();
    let mut best_fixed_acc = Vec::new();
    for c in 0..first.kinds.len() {
        let mut best = 0;
        for (j, &i) in fixed_idx.iter().enumerate() {
            if mean[i][c] > mean[fixed_idx[best]][c] {
                best = j;
            }
        }
        best_fixed.push(best);
        best_fixed_acc.push(mean[fixed_idx[best]][c]);
    }
    Ok(DilemmaSummary {
        kinds: first.kinds.clone(),
        fixed: fixed_idx.iter().map(|&i| labels[i].to_string()).collect(),
        best_fixed,
        best_fixed_acc,
        adaptive: labels[adaptive_idx].to_string(),
        adaptive_acc: mean[adaptive_idx].clone(),
    })
}

/// Trains every variant (in parallel, each with its own state and the
/// shared seed) and evaluates it on `test` and its corruptions.
pub fn sweep_fixed_sigma(cfg: &SweepConfig, train: &Dataset, test: &Dataset) -> Result<SweepResult> {
    if cfg.variants.is_empty() {
        return Err(Error::InvalidArgument("sweep has no variants".into()));
    }
    let suite = corruption_suite(&cfg.corruptions, test, cfg.corruption_seed)?;
    let variants = cfg
        .variants
        .par_iter()
        .map(|sv| {
            let config = TrainConfig {
                variant: sv.variant,
                ..cfg.train.clone()
            };
            let augmentor = sv.augment.clone().map(Augmentor::new).transpose()?;
            let fitted = fit(cfg.spec, config, train, augmentor, None, None)?;
            let (clean_acc, table) = evaluate_suite(
                &cfg.spec,
                &fitted.params,
                sv.variant.inference_mode(),
                &cfg.inference,
                test,
                &suite,
            )?;
            log::info!("{}: clean accuracy {clean_acc:.4}", sv.label);
            Ok(VariantResult {
                label: sv.label.clone(),
                variant: sv.variant,
                clean_acc,
                table,
                params: fitted.params,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        kinds: cfg.corruptions.iter().map(|l| l.kind.to_string()).collect(),
        variants,
    })
}
