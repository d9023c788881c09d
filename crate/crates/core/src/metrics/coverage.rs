//! Distance-σ ratio `|h_l − μ_l| / σ_l`: how plausible a shifted sample's
//! representation is under the diffusion distribution of its clean
//! counterpart. Values up to 2 count as covered.

use std::io::Write;

use crate::data::{CorruptionLadder, Dataset};
use crate::error::Result;
use crate::net::{forward_clean, sigma_forward, NetworkParams, NetworkSpec};
use crate::numkit::{RngStream, Tensor};

/// Per-layer elementwise ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRatios {
    pub ratios: Vec<f64>,
}

impl LayerRatios {
    pub fn median(&self) -> f64 {
        median(&self.ratios)
    }

    pub fn frac_within(&self, k: f64) -> f64 {
        if self.ratios.is_empty() {
            return 0.0;
        }
        self.ratios.iter().filter(|&&r| r <= k).count() as f64 / self.ratios.len() as f64
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// `μ_l` is the noise-free representation of `x`, `σ_l = g_φ(μ_l)`, and
/// `h_l` the clean representation of `x_shifted`. `sigma_scale`
/// multiplies every `σ_l`.
pub fn coverage_ratio_scaled(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &Tensor,
    x_shifted: &Tensor,
    sigma_scale: f64,
) -> Result<Vec<LayerRatios>> {
    let mu = forward_clean(spec, params, x)?;
    let h = forward_clean(spec, params, x_shifted)?;
    let mut out = Vec::with_capacity(spec.n_blocks);
    for (l, (m, hl)) in mu.iter().zip(&h).enumerate() {
        let s = sigma_forward(&params.adds[l], m)?;
        let ratios = hl
            .data()
            .iter()
            .zip(m.data())
            .zip(s.data())
            .map(|((a, b), sv)| (a - b).abs() / (sv * sigma_scale))
            .collect();
        out.push(LayerRatios { ratios });
    }
    Ok(out)
}

pub fn coverage_ratio(
    spec: &NetworkSpec,
    params: &NetworkParams,
    x: &Tensor,
    x_shifted: &Tensor,
) -> Result<Vec<LayerRatios>> {
    coverage_ratio_scaled(spec, params, x, x_shifted, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub probe: String,
    pub step: usize,
    pub layer: usize,
    pub median_ratio: f64,
    pub frac_within_2sigma: f64,
}

/// A shifted copy of the probe set used to track coverage.
#[derive(Debug, Clone)]
pub struct CoverageProbe {
    pub name: String,
    pub x: Tensor,
    pub x_shifted: Tensor,
}

impl CoverageProbe {
    /// Corrupts `data` with `ladder` at `severity`.
    pub fn from_corruption(data: &Dataset, ladder: &CorruptionLadder, severity: usize, seed: u64) -> Result<Self> {
        let mut rng = RngStream::new(seed).derive("probe").derive(&ladder.kind.to_string());
        let shifted = ladder.apply(data, severity, &mut rng)?;
        Ok(Self {
            name: format!("{}@{}", ladder.kind, severity),
            x: data.x.clone(),
            x_shifted: shifted.x,
        })
    }

    pub fn rows(&self, spec: &NetworkSpec, params: &NetworkParams, step: usize) -> Result<Vec<CoverageRow>> {
        let layers = coverage_ratio(spec, params, &self.x, &self.x_shifted)?;
        Ok(layers
            .iter()
            .enumerate()
            .map(|(l, r)| CoverageRow {
                probe: self.name.clone(),
                step,
                layer: l + 1,
                median_ratio: r.median(),
                frac_within_2sigma: r.frac_within(2.0),
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    /// CSV `probe, step, layer, median_ratio, frac_within_2sigma`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["probe", "step", "layer", "median_ratio", "frac_within_2sigma"])?;
        for r in &self.rows {
            out.write_record([
                r.probe.clone(),
                r.step.to_string(),
                r.layer.to_string(),
                r.median_ratio.to_string(),
                r.frac_within_2sigma.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Median over layers of the per-layer median ratio, per step, for one
    /// probe.
    pub fn pooled_by_step(&self, probe: &str) -> Vec<(usize, f64)> {
        let mut steps: Vec<usize> = self.rows.iter().filter(|r| r.probe == probe).map(|r| r.step).collect();
        steps.sort_unstable();
        steps.dedup();
        steps
            .into_iter()
            .map(|s| {
                let m: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.probe == probe && r.step == s)
                    .map(|r| r.median_ratio)
                    .collect();
                (s, median(&m))
            })
            .collect()
    }

    /// Median of the pooled series over its first and last quarter of
    /// steps. `None` with fewer than four steps.
    pub fn quartile_trend(&self, probe: &str) -> Option<(f64, f64)> {
        let series: Vec<f64> = self.pooled_by_step(probe).into_iter().map(|(_, v)| v).collect();
        let q = series.len() / 4;
        if q == 0 {
            return None;
        }
        Some((median(&series[..q]), median(&series[series.len() - q..])))
    }

    pub fn probes(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.probe) {
                names.push(r.probe.clone());
            }
        }
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (NetworkSpec, NetworkParams, Tensor) {
        let spec = NetworkSpec::new(2, 3, 6, 2).unwrap();
        let mut rng = RngStream::new(2);
        let p = NetworkParams::init(&spec, &mut rng);
        (spec, p, rng.sample_standard_normal(&[30, 2]))
    }

    #[test]
    fn identical_inputs_give_zero() {
        let (spec, p, x) = setup();
        for l in coverage_ratio(&spec, &p, &x, &x).unwrap() {
            assert!(l.ratios.iter().all(|&r| r == 0.0));
            assert_eq!(l.frac_within(2.0), 1.0);
        }
    }

    #[test]
    fn quartile_trend_of_a_falling_series() {
        let rows = (0..8)
            .map(|s| CoverageRow {
                probe: "p".into(),
                step: s,
                layer: 1,
                median_ratio: 8.0 - s as f64,
                frac_within_2sigma: 0.0,
            })
            .collect();
        let r = CoverageReport { rows };
        assert_eq!(r.quartile_trend("p"), Some((7.5, 1.5)));
        assert_eq!(r.quartile_trend("missing"), None);
    }

    #[test]
    fn doubling_sigma_halves_ratios() {
        let (spec, p, x) = setup();
        let xs = x.map(|v| v + 0.1);
        let a = coverage_ratio(&spec, &p, &x, &xs).unwrap();
        let b = coverage_ratio_scaled(&spec, &p, &x, &xs, 2.0).unwrap();
        for (la, lb) in a.iter().zip(&b) {
            for (ra, rb) in la.ratios.iter().zip(&lb.ratios) {
                assert!((ra / 2.0 - rb).abs() <= 1e-15 * ra.abs().max(1.0));
            }
        }
    }
}
