//! Central-difference gradient checking.

use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// max over coordinates of |analytic - numeric| / max(1, |numeric|)
    pub max_rel_error: f64,
    pub worst_coord: usize,
    /// First coordinate where either side was not finite.
    pub non_finite_at: Option<usize>,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.non_finite_at.is_none() && self.max_rel_error <= tol
    }
}

/// Compares the tape gradient of a scalar function with central differences.
///
/// `f` builds the function on a fresh tape from the input variable and
/// returns the scalar output.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0 && step <= 1e-3) {
        return Err(Error::InvalidArgument(format!(
            "grad_check step {step} outside (0, 1e-3]"
        )));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f(&mut tape, x)?;
    let analytic = tape.backward(y)?.take(x);

    let eval = |p: Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.leaf(p);
        let out = f(&mut t, v)?;
        Ok(t.value(out).item())
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_coord: 0,
        non_finite_at: None,
    };
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        // a perturbation that leaves the function's domain counts as non-finite
        let numeric = match (eval(plus), eval(minus)) {
            (Ok(p), Ok(m)) => (p - m) / (2.0 * step),
            _ => f64::NAN,
        };
        let a = analytic.data()[i];
        if !numeric.is_finite() || !a.is_finite() {
            report.non_finite_at.get_or_insert(i);
            continue;
        }
        let err = (a - numeric).abs() / numeric.abs().max(1.0);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_coord = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::ops::OpKind;

    #[test]
    fn linear_map_is_exact() {
        let w = Tensor::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25], vec![1.0, 1.0]]).unwrap();
        let point = Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
        let report = grad_check(
            |t, x| {
                let w = t.leaf(w.clone());
                let y = t.matmul(x, w)?;
                t.sum(y)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(report.passed(1e-10), "{report:?}");
    }

    #[test]
    fn softplus_chain_at_zero() {
        // d/dx softplus(3x) at 0 = 3 * sigmoid(0) = 1.5
        let report = grad_check(
            |t, x| {
                let s = t.scale(x, 3.0)?;
                let y = t.unary(OpKind::Softplus, s)?;
                t.sum(y)
            },
            &Tensor::scalar(0.0),
            1e-5,
        )
        .unwrap();
        assert!(report.passed(1e-8), "{report:?}");
    }

    #[test]
    fn nan_reported_with_coordinate() {
        let point = Tensor::from_vec(vec![1.0, 1e-7]);
        let report = grad_check(
            |t, x| {
                let y = t.unary(OpKind::Log, x)?;
                t.sum(y)
            },
            &point,
            1e-6,
        )
        .unwrap();
        // minus-perturbation of coordinate 1 leaves the log domain
        assert_eq!(report.non_finite_at, Some(1));
        assert!(!report.passed(1.0));

        let overflow = grad_check(
            |t, x| {
                let y = t.unary(OpKind::Square, x)?;
                t.sum(y)
            },
            &Tensor::from_vec(vec![1e200, 0.5]),
            1e-5,
        )
        .unwrap();
        assert_eq!(overflow.non_finite_at, Some(0));
    }

    #[test]
    fn step_out_of_range_rejected() {
        assert!(grad_check(|t, x| t.sum(x), &Tensor::scalar(1.0), 0.1).is_err());
    }
}
