use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// Rectangular node grid over `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 || !(x.1 > x.0) || !(y.1 > y.0) {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 3x3 nodes over a non-empty extent, got {nx}x{ny} over {x:?}x{y:?}"
            )));
        }
        Ok(Self {
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
            nx,
            ny,
        })
    }

    /// Square grid `[-half, half]²` with `n × n` nodes.
    pub fn square(half: f64, n: usize) -> Result<Self> {
        Self::new((-half, half), (-half, half), n, n)
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.hy()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        const SLACK: f64 = 1e-12;
        p[0] >= self.x_min - SLACK
            && p[0] <= self.x_max + SLACK
            && p[1] >= self.y_min - SLACK
            && p[1] <= self.y_max + SLACK
    }

    /// Values of `f` at every node, row `j` (y) major.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Tensor {
        let mut data = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                data.push(f([self.x(i), self.y(j)]));
            }
        }
        Tensor::new(&[self.ny, self.nx], data).expect("grid shape")
    }
}

/// Solution values on a [`GridSpec`] at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    /// Shape `[ny, nx]`.
    pub values: Tensor,
    pub time_label: f64,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Tensor, time_label: f64) -> Result<Self> {
        if values.shape() != [spec.ny, spec.nx] {
            return Err(Error::ShapeMismatch {
                op: "grid_field",
                lhs: vec![spec.ny, spec.nx],
                rhs: values.shape().to_vec(),
            });
        }
        Ok(Self {
            spec,
            values,
            time_label,
        })
    }

    pub fn from_fn(spec: GridSpec, time_label: f64, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            values: spec.sample(f),
            spec,
            time_label,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values.data()[j * self.spec.nx + i]
    }

    pub fn min(&self) -> f64 {
        self.values.data().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.data().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation; `None` outside the extent.
    pub fn interpolate(&self, p: [f64; 2]) -> Option<f64> {
        let s = &self.spec;
        if !s.contains(p) {
            return None;
        }
        let fx = ((p[0] - s.x_min) / s.hx()).clamp(0.0, (s.nx - 1) as f64);
        let fy = ((p[1] - s.y_min) / s.hy()).clamp(0.0, (s.ny - 1) as f64);
        let i = (fx.floor() as usize).min(s.nx - 2);
        let j = (fy.floor() as usize).min(s.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        Some(
            (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11),
        )
    }

    /// Plain-text matrix: one header line, then `ny` rows of `nx` values
    /// (row 0 is `y_min`).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let s = &self.spec;
        writeln!(
            w,
            "# extent {} {} {} {} resolution {} {} time {}",
            s.x_min, s.x_max, s.y_min, s.y_max, s.nx, s.ny, self.time_label
        )?;
        let mut line = String::new();
        for j in 0..s.ny {
            line.clear();
            for i in 0..s.nx {
                if i > 0 {
                    line.push(' ');
                }
                write!(line, "{}", self.at(i, j)).expect("string write");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("grid field: {m}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("empty input"))??;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 11 || tok[0] != "#" || tok[1] != "extent" || tok[6] != "resolution" || tok[9] != "time" {
            return Err(bad("malformed header"));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number in header"));
        let n = |s: &str| s.parse::<usize>().map_err(|_| bad("bad resolution"));
        let spec = GridSpec::new((f(tok[2])?, f(tok[3])?), (f(tok[4])?, f(tok[5])?), n(tok[7])?, n(tok[8])?)?;
        let time = f(tok[10])?;
        let mut data = Vec::with_capacity(spec.nx * spec.ny);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for v in line.split_whitespace() {
                data.push(v.parse::<f64>().map_err(|_| bad("bad value"))?);
            }
        }
        let values = Tensor::new(&[spec.ny, spec.nx], data).map_err(|_| bad("value count"))?;
        Self::new(spec, values, time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_matches_extent() {
        let s = GridSpec::new((-1.3, 2.9), (0.0, 1.0), 128, 37).unwrap();
        assert!((s.hx() * 127.0 - 4.2).abs() < 1e-12);
        assert!((s.hy() * 36.0 - 1.0).abs() < 1e-12);
        assert!((s.x(127) - 2.9).abs() < 1e-12);
    }

    #[test]
    fn bilinear_exact_on_planes() {
        let s = GridSpec::square(1.0, 11).unwrap();
        let f = GridField::from_fn(s, 0.0, |p| 0.3 * p[0] - 1.7 * p[1] + 0.2);
        for p in [[0.123, -0.77], [0.999, 0.999], [-1.0, 1.0]] {
            let v = f.interpolate(p).unwrap();
            assert!((v - (0.3 * p[0] - 1.7 * p[1] + 0.2)).abs() < 1e-12);
        }
        assert!(f.interpolate([1.5, 0.0]).is_none());
    }

    #[test]
    fn text_round_trip() {
        let s = GridSpec::new((-1.0, 1.0), (0.0, 2.0), 4, 3).unwrap();
        let f = GridField::from_fn(s, 0.25, |p| p[0].sin() + p[1] / 3.0);
        let mut buf = Vec::new();
        f.write_text(&mut buf).unwrap();
        let back = GridField::read_text(&buf[..]).unwrap();
        assert_eq!(back, f);
        assert!(String::from_utf8(buf).unwrap().starts_with("# extent -1 1 0 2 resolution 4 3 time 0.25\n"));
    }
}
