//! Ensembled prediction: average the last representation over several
//! diffused forwards, then apply the head once.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{forward_diffused, logits, DiffusionMode, NetworkParams, NetworkSpec};
use crate::numkit::{RngStream, Tensor};

use super::config::InferenceConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// Mean of `h̃_L` over the ensemble.
    pub mean_h: Tensor,
    pub logits: Tensor,
}

/// Lowest index among the maxima.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Member `e` draws its noise from `seed → "ensemble" → split(e)`; members
/// run in parallel and are summed in index order.
pub fn predict_ensemble(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &Tensor,
    inf: &InferenceConfig,
    mode: DiffusionMode,
) -> Result<Prediction> {
    inf.validate()?;
    let root = RngStream::new(inf.seed).derive("ensemble");
    let members = if mode == DiffusionMode::Off { 1 } else { inf.ensemble };
    let outs: Vec<Tensor> = (0..members)
        .into_par_iter()
        .map(|e| {
            let mut rng = root.split(e as u64);
            forward_diffused(spec, params, x, mode, &mut rng).map(|t| t.output().clone())
        })
        .collect::<Result<_>>()?;
    let mut sum = outs[0].clone();
    for o in &outs[1..] {
        for (s, v) in sum.data_mut().iter_mut().zip(o.data()) {
            *s += v;
        }
    }
    let mean_h = if members == 1 { sum } else { sum.map(|v| v / members as f64) };
    let z = logits(&params.head, &mean_h)?;
    let labels = (0..z.rows()).map(|i| argmax(z.row(i))).collect();
    Ok(Prediction {
        labels,
        mean_h,
        logits: z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCount {
    pub total: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Zero for an empty dataset.
    pub accuracy: f64,
    pub per_class: Vec<ClassCount>,
}

impl EvalReport {
    pub fn error(&self) -> f64 {
        1.0 - self.accuracy
    }
}

pub fn evaluate(
    spec: &NetworkSpec,
    params: &NetworkParams,
    data: &Dataset,
    inf: &InferenceConfig,
    mode: DiffusionMode,
) -> Result<EvalReport> {
    if data.n_classes != spec.n_classes {
        return Err(Error::InvalidArgument(format!(
            "dataset has {} classes, network {}",
            data.n_classes, spec.n_classes
        )));
    }
    let mut per_class = vec![ClassCount::default(); data.n_classes];
    if data.is_empty() {
        return Ok(EvalReport {
            accuracy: 0.0,
            per_class,
        });
    }
    let pred = predict_ensemble(spec, params, &data.x, inf, mode)?;
    let mut correct = 0;
    for (&p, &y) in pred.labels.iter().zip(&data.y) {
        per_class[y].total += 1;
        if p == y {
            per_class[y].correct += 1;
            correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / data.len() as f64,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::forward_clean;

    fn setup() -> (NetworkSpec, NetworkParams, Tensor) {
        let spec = NetworkSpec::new(2, 3, 8, 3).unwrap();
        let mut rng = RngStream::new(1);
        let p = NetworkParams::init(&spec, &mut rng);
        (spec, p, rng.sample_standard_normal(&[20, 2]))
    }

    #[test]
    fn no_diffusion_equals_clean_forward_for_any_ensemble() {
        let (spec, p, x) = setup();
        let clean = forward_clean(&spec, &p, &x).unwrap();
        let want = logits(&p.head, clean.last().unwrap()).unwrap();
        for e in [1, 4] {
            let pred = predict_ensemble(&spec, &p, &x, &InferenceConfig { ensemble: e, seed: 3 }, DiffusionMode::Off).unwrap();
            assert_eq!(pred.logits, want);
        }
    }

    #[test]
    fn same_seed_same_labels() {
        let (spec, p, x) = setup();
        let inf = InferenceConfig { ensemble: 1, seed: 7 };
        let a = predict_ensemble(&spec, &p, &x, &inf, DiffusionMode::Adaptive).unwrap();
        let b = predict_ensemble(&spec, &p, &x, &inf, DiffusionMode::Adaptive).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn empty_class_reports_zero() {
        let (spec, p, x) = setup();
        let data = Dataset::new(x, vec![0; 20], 3).unwrap();
        let r = evaluate(&spec, &p, &data, &InferenceConfig::default(), DiffusionMode::Off).unwrap();
        assert_eq!(r.per_class[2], ClassCount { total: 0, correct: 0 });
        assert_eq!(r.per_class[0].total, 20);
    }
}
