//! Corruption error tables and the accuracy / mCE / rmCE aggregates.

use std::io::Write;

use crate::error::{Error, Result};

/// Error rate `E_{c,s}` per corruption kind `c` and severity `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub kinds: Vec<String>,
    pub severities: usize,
    cells: Vec<Option<f64>>,
}

impl ErrorTable {
    pub fn new(kinds: Vec<String>, severities: usize) -> Self {
        let n = kinds.len() * severities;
        Self {
            kinds,
            severities,
            cells: vec![None; n],
        }
    }

    /// From complete rows, one per kind.
    pub fn from_rows(kinds: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let s = rows.first().map_or(0, |r| r.len());
        if rows.len() != kinds.len() || rows.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidArgument("error table rows must be rectangular, one per kind".into()));
        }
        let mut t = Self::new(kinds, s);
        for (c, row) in rows.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                t.set(c, j + 1, e)?;
            }
        }
        Ok(t)
    }

    fn index(&self, kind: usize, severity: usize) -> Result<usize> {
        if kind >= self.kinds.len() || severity == 0 || severity > self.severities {
            return Err(Error::InvalidArgument(format!("no cell ({kind}, {severity})")));
        }
        Ok(kind * self.severities + severity - 1)
    }

    /// Severity is 1-based.
    pub fn set(&mut self, kind: usize, severity: usize, error: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&error) {
            return Err(Error::InvalidArgument(format!("error rate {error} outside [0, 1]")));
        }
        let i = self.index(kind, severity)?;
        self.cells[i] = Some(error);
        Ok(())
    }

    pub fn get(&self, kind: usize, severity: usize) -> Result<f64> {
        let i = self.index(kind, severity)?;
        self.cells[i].ok_or_else(|| {
            Error::InvalidArgument(format!("missing cell ({}, severity {severity})", self.kinds[kind]))
        })
    }

    /// `Σ_s E_{c,s}`.
    pub fn kind_sum(&self, kind: usize) -> Result<f64> {
        (1..=self.severities).map(|s| self.get(kind, s)).sum()
    }

    pub fn mean_error(&self) -> Result<f64> {
        if self.cells.is_empty() {
            return Err(Error::InvalidArgument("empty error table".into()));
        }
        let mut total = 0.0;
        for c in 0..self.kinds.len() {
            total += self.kind_sum(c)?;
        }
        Ok(total / self.cells.len() as f64)
    }

    /// `1 − (1/(C·S)) Σ_c Σ_s E_{c,s}`.
    pub fn accuracy(&self) -> Result<f64> {
        Ok(1.0 - self.mean_error()?)
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if self.kinds != other.kinds || self.severities != other.severities {
            return Err(Error::InvalidArgument("model and baseline tables cover different cells".into()));
        }
        Ok(())
    }

    /// CSV `kind, severity, error`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["kind", "severity", "error"])?;
        for (c, k) in self.kinds.iter().enumerate() {
            for s in 1..=self.severities {
                out.write_record([k.clone(), s.to_string(), self.get(c, s)?.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// A normalized corruption error with the kinds that had to be dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    /// Percent.
    pub value: f64,
    /// Kinds whose baseline denominator was zero.
    pub excluded: Vec<String>,
}

fn normalized(
    model: &ErrorTable,
    baseline: &ErrorTable,
    what: &str,
    term: impl Fn(&ErrorTable, usize) -> Result<f64>,
    base_term: impl Fn(&ErrorTable, usize) -> Result<f64>,
) -> Result<Normalized> {
    model.check_grid(baseline)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = Vec::new();
    for c in 0..model.kinds.len() {
        let num = term(model, c)?;
        let den = base_term(baseline, c)?;
        if den == 0.0 {
            log::warn!("{what}: baseline denominator for `{}` is zero, kind excluded", model.kinds[c]);
            excluded.push(model.kinds[c].clone());
            continue;
        }
        sum += num / den;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument(format!("{what}: every baseline denominator is zero")));
    }
    Ok(Normalized {
        value: 100.0 * sum / used as f64,
        excluded,
    })
}

/// `100 · (1/C) Σ_c Σ_s E_{c,s}(f) / Σ_s E_{c,s}(f₀)`.
pub fn mce(model: &ErrorTable, baseline: &ErrorTable) -> Result<Normalized> {
    normalized(model, baseline, "mCE", |t, c| t.kind_sum(c), |t, c| t.kind_sum(c))
}

/// `100 · (1/C) Σ_c (Σ_s E_{c,s}(f) − S·E_nat(f)) / (Σ_s E_{c,s}(f₀) − S·E_nat(f₀))`.
pub fn rmce(model: &ErrorTable, baseline: &ErrorTable, model_nat: f64, baseline_nat: f64) -> Result<Normalized> {
    let s = model.severities as f64;
    normalized(
        model,
        baseline,
        "rmCE",
        |t, c| Ok(t.kind_sum(c)? - s * model_nat),
        |t, c| Ok(t.kind_sum(c)? - s * baseline_nat),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub table: ErrorTable,
    pub natural_error: f64,
    pub accuracy: f64,
    pub mce: Normalized,
    pub rmce: Normalized,
}

impl MetricsReport {
    pub fn new(table: ErrorTable, natural_error: f64, baseline: &ErrorTable, baseline_nat: f64) -> Result<Self> {
        Ok(Self {
            accuracy: table.accuracy()?,
            mce: mce(&table, baseline)?,
            rmce: rmce(&table, baseline, natural_error, baseline_nat)?,
            table,
            natural_error,
        })
    }

    /// CSV `metric, value`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["metric", "value"])?;
        out.write_record(["natural_error", &self.natural_error.to_string()])?;
        out.write_record(["accuracy", &self.accuracy.to_string()])?;
        out.write_record(["mce", &self.mce.value.to_string()])?;
        out.write_record(["rmce", &self.rmce.value.to_string()])?;
        out.flush()?;
        Ok(())
    }
}
