//! Severity-graded test-time corruptions. Each kind has a five-step
//! parameter ladder; a combined kind applies its components in order, each
//! at its own ladder value for the chosen severity.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numkit::RngStream;

use super::augment::{AugmentKind, AugmentOp};
use super::dataset::Dataset;

pub const SEVERITIES: usize = 5;

/// Default parameter per severity: rotation angle (rad), noise standard
/// deviation, offset, scale factor, translation length.
pub fn default_ladder(kind: AugmentKind) -> [f64; SEVERITIES] {
    match kind {
        AugmentKind::Rotate => [0.1, 0.2, 0.3, 0.45, 0.6],
        AugmentKind::Gaussian => [0.05, 0.1, 0.2, 0.3, 0.5],
        AugmentKind::Brightness => [0.05, 0.1, 0.2, 0.3, 0.4],
        AugmentKind::Scale => [1.1, 1.2, 1.3, 1.45, 1.6],
        AugmentKind::Translate => [0.1, 0.2, 0.3, 0.4, 0.5],
    }
}

/// Parameter value that leaves the data unchanged.
pub fn identity_param(kind: AugmentKind) -> f64 {
    if kind == AugmentKind::Scale {
        1.0
    } else {
        0.0
    }
}

/// The op for one ladder value. Translation runs along the fixed unit
/// direction `(1, -1, 1, -1, ...) / √d`, which is not the brightness
/// direction.
pub fn corruption_op(kind: AugmentKind, param: f64, dim: usize) -> AugmentOp {
    match kind {
        AugmentKind::Rotate => AugmentOp::Rotate(param),
        AugmentKind::Gaussian => AugmentOp::Gaussian(param),
        AugmentKind::Brightness => AugmentOp::Brightness(param),
        AugmentKind::Scale => AugmentOp::Scale(param),
        AugmentKind::Translate => {
            let c = param / (dim as f64).sqrt();
            AugmentOp::Translate((0..dim).map(|i| if i % 2 == 0 { c } else { -c }).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CorruptionKind {
    pub components: Vec<AugmentKind>,
}

impl CorruptionKind {
    pub fn single(kind: AugmentKind) -> Self {
        Self { components: vec![kind] }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.components.iter().map(|k| k.name()).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let components = s
            .split('+')
            .map(|p| {
                p.trim().parse::<AugmentKind>().map_err(|_| Error::UnknownKind {
                    what: "corruption",
                    name: s.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }
}

/// One cell of the suite.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: usize,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: usize) -> Result<Self> {
        if !(1..=SEVERITIES).contains(&severity) {
            return Err(Error::InvalidArgument(format!("severity {severity} outside 1..=5")));
        }
        Ok(Self { kind, severity })
    }
}

/// Parameters for severities `1..=5`, one row per component.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionLadder {
    pub kind: CorruptionKind,
    pub params: Vec<[f64; SEVERITIES]>,
}

impl CorruptionLadder {
    /// Every component's ladder must be strictly increasing, or sit at the
    /// identity value throughout.
    pub fn new(kind: CorruptionKind, params: Vec<[f64; SEVERITIES]>) -> Result<Self> {
        if kind.components.is_empty() || params.len() != kind.components.len() {
            return Err(Error::InvalidArgument(format!(
                "corruption `{kind}` needs one ladder per component"
            )));
        }
        for (&k, ladder) in kind.components.iter().zip(&params) {
            let id = identity_param(k);
            let identity = ladder.iter().all(|&p| p == id);
            let increasing = ladder.windows(2).all(|w| w[1] > w[0]);
            if !(identity || increasing) {
                return Err(Error::InvalidArgument(format!(
                    "{k} ladder {ladder:?} must be strictly increasing"
                )));
            }
            for &p in ladder {
                corruption_op(k, p, 2).validate()?;
            }
        }
        Ok(Self { kind, params })
    }

    pub fn default_for(kind: CorruptionKind) -> Self {
        let params = kind.components.iter().map(|&k| default_ladder(k)).collect();
        Self { kind, params }
    }

    /// Component parameters at `severity` (1-based).
    pub fn at(&self, severity: usize) -> Result<Vec<f64>> {
        if !(1..=SEVERITIES).contains(&severity) {
            return Err(Error::InvalidArgument(format!("severity {severity} outside 1..=5")));
        }
        Ok(self.params.iter().map(|p| p[severity - 1]).collect())
    }

    /// Corrupts every row of `data` at `severity`.
    pub fn apply(&self, data: &Dataset, severity: usize, rng: &mut RngStream) -> Result<Dataset> {
        let params = self.at(severity)?;
        let d = data.dim();
        let ops: Vec<AugmentOp> = self
            .kind
            .components
            .iter()
            .zip(&params)
            .map(|(&k, &p)| corruption_op(k, p, d))
            .collect();
        let mut x = data.x.clone();
        if d > 0 {
            for row in x.data_mut().chunks_mut(d) {
                for op in &ops {
                    op.apply_in_place(row, rng);
                }
            }
        }
        data.with_features(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedSet {
    pub kind: CorruptionKind,
    pub severity: usize,
    pub params: Vec<f64>,
    pub data: Dataset,
}

/// Every `(kind, severity)` corruption of `data`. The stream for a cell
/// depends only on `seed`, the kind name and the severity.
pub fn corruption_suite(ladders: &[CorruptionLadder], data: &Dataset, seed: u64) -> Result<Vec<CorruptedSet>> {
    let root = RngStream::new(seed).derive("corruption");
    let mut out = Vec::with_capacity(ladders.len() * SEVERITIES);
    for ladder in ladders {
        let by_kind = root.derive(&ladder.kind.to_string());
        for severity in 1..=SEVERITIES {
            let mut rng = by_kind.split(severity as u64);
            out.push(CorruptedSet {
                kind: ladder.kind.clone(),
                severity,
                params: ladder.at(severity)?,
                data: ladder.apply(data, severity, &mut rng)?,
            });
        }
    }
    Ok(out)
}

/// Text table `kind severity parameter`, one row per cell.
pub fn write_manifest<W: Write>(ladders: &[CorruptionLadder], mut w: W) -> Result<()> {
    writeln!(w, "kind severity parameter")?;
    for ladder in ladders {
        for severity in 1..=SEVERITIES {
            let p: Vec<String> = ladder.at(severity)?.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{} {} {}", ladder.kind, severity, p.join("+"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_dataset, DatasetKind};

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    #[test]
    fn displacement_grows_with_severity_for_every_kind() {
        let data = make_dataset(DatasetKind::TwoMoons, 1000, 0.1, 3).unwrap();
        let ladders: Vec<_> = AugmentKind::ALL
            .iter()
            .map(|&k| CorruptionLadder::default_for(CorruptionKind::single(k)))
            .collect();
        let suite = corruption_suite(&ladders, &data, 5).unwrap();
        for chunk in suite.chunks(SEVERITIES) {
            let med: Vec<f64> = chunk
                .iter()
                .map(|c| {
                    median(
                        (0..data.len())
                            .map(|i| {
                                let (a, b) = (data.x.row(i), c.data.x.row(i));
                                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                            })
                            .collect(),
                    )
                })
                .collect();
            assert!(med.windows(2).all(|w| w[1] > w[0]), "{}: {med:?}", chunk[0].kind);
            assert_eq!(chunk[0].data.y, data.y);
        }
    }

    #[test]
    fn params_echo_ladder_and_identity_ladder_is_clean() {
        let data = make_dataset(DatasetKind::TwoMoons, 50, 0.1, 1).unwrap();
        let ladder = CorruptionLadder::new(CorruptionKind::single(AugmentKind::Rotate), vec![[0.0; 5]]).unwrap();
        for c in corruption_suite(&[ladder], &data, 2).unwrap() {
            assert_eq!(c.params, vec![0.0]);
            assert_eq!(c.data, data);
        }
        let g = CorruptionLadder::default_for(CorruptionKind::single(AugmentKind::Gaussian));
        let got: Vec<f64> = (1..=5).map(|s| g.at(s).unwrap()[0]).collect();
        assert_eq!(got, vec![0.05, 0.1, 0.2, 0.3, 0.5]);
    }

    #[test]
    fn ladder_validation() {
        let k = CorruptionKind::single(AugmentKind::Gaussian);
        assert!(CorruptionLadder::new(k.clone(), vec![[0.1, 0.1, 0.2, 0.3, 0.4]]).is_err());
        assert!(CorruptionLadder::new(k, vec![[0.1, 0.2, 0.3, 0.4, 0.5]]).is_ok());
        assert!("gaussian+fog".parse::<CorruptionKind>().is_err());
        let combined: CorruptionKind = "rotate+gaussian".parse().unwrap();
        assert_eq!(combined.to_string(), "rotate+gaussian");
        assert_eq!(CorruptionLadder::default_for(combined).at(2).unwrap(), vec![0.2, 0.1]);
    }

    #[test]
    fn manifest_layout() {
        let mut buf = Vec::new();
        write_manifest(&[CorruptionLadder::default_for("scale".parse().unwrap())], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("kind severity parameter"));
        assert_eq!(text.lines().nth(5), Some("scale 5 1.6"));
    }
}
