use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkit::{RngStream, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Feature matrix `[n, d]` with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(x: Tensor, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        if x.rank() != 2 || x.rows() != y.len() {
            return Err(Error::ShapeMismatch {
                op: "dataset",
                lhs: x.shape().to_vec(),
                rhs: vec![y.len()],
            });
        }
        if !x.all_finite() {
            return Err(Error::InvalidArgument("dataset features must be finite".into()));
        }
        if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        Ok(Self { x, y, n_classes })
    }

    pub fn from_samples(samples: &[Sample], n_classes: usize) -> Result<Self> {
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
        let x = if rows.is_empty() {
            Tensor::zeros(&[0, 0])
        } else {
            Tensor::from_rows(&rows)?
        };
        Self::new(x, samples.iter().map(|s| s.label).collect(), n_classes)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample {
            features: self.x.row(i).to_vec(),
            label: self.y[i],
        }
    }

    pub fn samples(&self) -> Vec<Sample> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.y {
            c[l] += 1;
        }
        c
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Same labels, new features.
    pub fn with_features(&self, x: Tensor) -> Result<Self> {
        Self::new(x, self.y.clone(), self.n_classes)
    }

    /// CSV with columns `x1..xd, label`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format of [`Dataset::write_csv`]; the class count is the
    /// largest label plus one unless given.
    pub fn read_csv<R: Read>(r: R, n_classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().last() != Some("label") {
            return Err(Error::Format("last CSV column must be `label`".into()));
        }
        let d = headers.len() - 1;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number `{s}`: {e}")));
            rows.push(rec.iter().take(d).map(parse).collect::<Result<Vec<_>>>()?);
            let l = &rec[d];
            y.push(l.trim().parse::<usize>().map_err(|e| Error::Format(format!("bad label `{l}`: {e}")))?);
        }
        let c = n_classes.unwrap_or_else(|| y.iter().max().map_or(2, |m| m + 1).max(2));
        let x = if rows.is_empty() {
            Tensor::zeros(&[0, d])
        } else {
            Tensor::from_rows(&rows)?
        };
        Self::new(x, y, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Two interleaved half circles.
    TwoMoons,
    /// Two concentric circles, radii 0.5 and 1.
    Rings,
    /// Isotropic blobs centred on a circle of radius 3.
    GaussianBlobs { classes: usize },
}

impl DatasetKind {
    pub fn n_classes(self) -> usize {
        match self {
            DatasetKind::GaussianBlobs { classes } => classes,
            _ => 2,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::TwoMoons => "two_moons",
            DatasetKind::Rings => "rings",
            DatasetKind::GaussianBlobs { .. } => "gaussian_blobs",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_moons" => Ok(DatasetKind::TwoMoons),
            "rings" => Ok(DatasetKind::Rings),
            "gaussian_blobs" => Ok(DatasetKind::GaussianBlobs { classes: 3 }),
            other => Err(Error::UnknownKind {
                what: "dataset",
                name: other.to_string(),
            }),
        }
    }
}

/// Evenly spaced points on `[0, π]`, endpoints included.
fn arc(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if n == 1 { 0.0 } else { PI * i as f64 / (n - 1) as f64 })
}

/// Balanced synthetic dataset, rows shuffled. `noise` is the standard
/// deviation of isotropic Gaussian jitter.
pub fn make_dataset(kind: DatasetKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    let c = kind.n_classes();
    if n < c.max(2) {
        return Err(Error::InvalidArgument(format!("need at least {} samples, got {n}", c.max(2))));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise must be non-negative, got {noise}")));
    }
    if c < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    let root = RngStream::new(seed).derive("dataset");
    let mut jitter = root.derive("noise");
    let per_class: Vec<usize> = (0..c).map(|k| n / c + usize::from(k < n % c)).collect();
    let mut samples = Vec::with_capacity(n);
    match kind {
        DatasetKind::TwoMoons => {
            for t in arc(per_class[0]) {
                samples.push(Sample { features: vec![t.cos(), t.sin()], label: 0 });
            }
            for t in arc(per_class[1]) {
                samples.push(Sample { features: vec![1.0 - t.cos(), 0.5 - t.sin()], label: 1 });
            }
        }
        DatasetKind::Rings => {
            for (label, radius) in [(0, 0.5), (1, 1.0)] {
                let m = per_class[label];
                for i in 0..m {
                    let t = 2.0 * PI * i as f64 / m as f64;
                    samples.push(Sample { features: vec![radius * t.cos(), radius * t.sin()], label });
                }
            }
        }
        DatasetKind::GaussianBlobs { .. } => {
            let mut r = root.derive("blobs");
            for (label, &m) in per_class.iter().enumerate() {
                let a = 2.0 * PI * label as f64 / c as f64;
                let centre = [3.0 * a.cos(), 3.0 * a.sin()];
                for _ in 0..m {
                    let z = [r.standard_normal(), r.standard_normal()];
                    samples.push(Sample {
                        features: vec![centre[0] + 0.5 * z[0], centre[1] + 0.5 * z[1]],
                        label,
                    });
                }
            }
        }
    }
    if noise > 0.0 {
        for s in &mut samples {
            for v in &mut s.features {
                *v += noise * jitter.standard_normal();
            }
        }
    }
    samples.shuffle(&mut root.derive("shuffle"));
    Dataset::from_samples(&samples, c)
}

/// Label-stratified split: in every class the first
/// `round(fraction * count)` shuffled members go to the train side.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut rng = RngStream::new(seed).derive("split");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..data.n_classes {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.y[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let k = (train_fraction * members.len() as f64).round() as usize;
        if k == 0 || k == members.len() {
            return Err(Error::DegenerateSplit(class));
        }
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.select(&train), data.select(&test)))
}
