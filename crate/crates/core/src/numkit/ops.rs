//! Forward kernels and their vector-Jacobian products.
//!
//! Binary elementwise kinds accept a right-hand side of the same shape, a
//! row vector broadcast over the rows of a matrix (`[m, n] ∘ [n]`), or a
//! scalar.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Every operation the tape can record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    Div,
    /// Multiply by a constant.
    Scale(f64),
    /// Add a constant.
    Shift(f64),
    Softplus,
    Relu,
    Tanh,
    Exp,
    Log,
    Square,
    /// Sum of all elements, producing a scalar.
    Sum,
    /// Mean of all elements, producing a scalar.
    Mean,
    SumAxis(usize),
    MeanAxis(usize),
    /// Log-softmax along the last axis.
    LogSoftmax,
    /// Identity forward, zero backward.
    StopGradient,
}

impl OpKind {
    pub fn arity(self) -> usize {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Scale(_) => "scale",
            OpKind::Shift(_) => "shift",
            OpKind::Softplus => "softplus",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Square => "square",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::SumAxis(_) => "sum_axis",
            OpKind::MeanAxis(_) => "mean_axis",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::StopGradient => "stop_gradient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.rank() == 1 && a.rank() == 2 && a.cols() == b.len() {
        Ok(Broadcast::Row)
    } else if b.shape().is_empty() {
        Ok(Broadcast::Scalar)
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let mode = broadcast(op, a, b)?;
    let bd = b.data();
    let n = b.len();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let y = match mode {
                Broadcast::Same => bd[i],
                Broadcast::Row => bd[i % n],
                Broadcast::Scalar => bd[0],
            };
            f(x, y)
        })
        .collect();
    Tensor::new(a.shape(), data)
}

/// Reduces a gradient of `a`'s shape back to `b`'s broadcast shape.
fn unbroadcast(mode: Broadcast, g: Tensor, b: &Tensor) -> Tensor {
    match mode {
        Broadcast::Same => g,
        Broadcast::Row => {
            let n = b.len();
            let mut out = vec![0.0; n];
            for (i, v) in g.data().iter().enumerate() {
                out[i % n] += v;
            }
            Tensor::from_vec(out)
        }
        Broadcast::Scalar => {
            let s = g.sum();
            Tensor::new(b.shape(), vec![s]).expect("scalar shape")
        }
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: shape.to_vec(),
            rhs: vec![axis],
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != axis)
        .map(|(_, &d)| d)
        .collect()
}

fn sum_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, n, inner) = axis_split("sum_axis", x.shape(), axis)?;
    let d = x.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for k in 0..n {
            let base = (o * n + k) * inner;
            for i in 0..inner {
                out[o * inner + i] += d[base + i];
            }
        }
    }
    Tensor::new(&reduced_shape(x.shape(), axis), out)
}

fn expand_axis(g: &Tensor, shape: &[usize], axis: usize, scale: f64) -> Tensor {
    let (outer, n, inner) = axis_split("expand_axis", shape, axis).expect("validated on forward");
    let gd = g.data();
    let mut out = vec![0.0; outer * n * inner];
    for o in 0..outer {
        for k in 0..n {
            let base = (o * n + k) * inner;
            for i in 0..inner {
                out[base + i] = gd[o * inner + i] * scale;
            }
        }
    }
    Tensor::new(shape, out).expect("expanded shape")
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let d = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = d[i * n + j];
        }
    }
    Tensor::new(&[n, m], out).expect("transpose shape")
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1); expm1 keeps small y exact, the rewrite y + ln(1 - e^-y) avoids overflow
    if y < 1.0 {
        y.exp_m1().ln()
    } else {
        y + (-(-y).exp()).ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_softmax(x: &Tensor) -> Result<Tensor> {
    if x.rank() == 0 {
        return Err(Error::ShapeMismatch {
            op: "log_softmax",
            lhs: vec![],
            rhs: vec![],
        });
    }
    let n = x.cols();
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|v| v - lse));
    }
    Tensor::new(x.shape(), out)
}

fn check_arity(kind: OpKind, inputs: &[&Tensor]) -> Result<()> {
    if inputs.len() != kind.arity() {
        return Err(Error::InvalidArgument(format!(
            "{} takes {} inputs, got {}",
            kind.name(),
            kind.arity(),
            inputs.len()
        )));
    }
    Ok(())
}

/// Forward kernel for `kind`.
pub fn apply(kind: OpKind, inputs: &[&Tensor]) -> Result<Tensor> {
    check_arity(kind, inputs)?;
    let x = inputs[0];
    match kind {
        OpKind::MatMul => matmul(x, inputs[1]),
        OpKind::Add => binary("add", x, inputs[1], |a, b| a + b),
        OpKind::Sub => binary("sub", x, inputs[1], |a, b| a - b),
        OpKind::Mul => binary("mul", x, inputs[1], |a, b| a * b),
        OpKind::Div => {
            let b = inputs[1];
            if let Some(z) = b.data().iter().find(|&&v| v == 0.0) {
                return Err(Error::Domain {
                    op: "div",
                    detail: format!("divisor element {z}"),
                });
            }
            binary("div", x, b, |a, b| a / b)
        }
        OpKind::Scale(c) => Ok(x.map(|v| v * c)),
        OpKind::Shift(c) => Ok(x.map(|v| v + c)),
        OpKind::Softplus => Ok(x.map(softplus)),
        OpKind::Relu => Ok(x.map(|v| if v > 0.0 { v } else { 0.0 })),
        OpKind::Tanh => Ok(x.map(f64::tanh)),
        OpKind::Exp => {
            let y = x.map(f64::exp);
            if !y.all_finite() {
                return Err(Error::Domain {
                    op: "exp",
                    detail: "overflow".into(),
                });
            }
            Ok(y)
        }
        OpKind::Log => {
            if let Some(v) = x.data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
                return Err(Error::Domain {
                    op: "log",
                    detail: format!("non-positive element {v}"),
                });
            }
            Ok(x.map(f64::ln))
        }
        OpKind::Square => Ok(x.map(|v| v * v)),
        OpKind::Sum => Ok(Tensor::scalar(x.sum())),
        OpKind::Mean => Ok(Tensor::scalar(x.mean())),
        OpKind::SumAxis(axis) => sum_axis(x, axis),
        OpKind::MeanAxis(axis) => {
            let n = axis_split("mean_axis", x.shape(), axis)?.1 as f64;
            Ok(sum_axis(x, axis)?.map(|v| v / n))
        }
        OpKind::LogSoftmax => log_softmax(x),
        OpKind::StopGradient => Ok(x.clone()),
    }
}

/// Gradients with respect to each input, given the upstream gradient `g`
/// of the output.
pub fn vjp(kind: OpKind, inputs: &[&Tensor], output: &Tensor, g: &Tensor) -> Vec<Tensor> {
    let x = inputs[0];
    match kind {
        OpKind::MatMul => {
            let b = inputs[1];
            let da = matmul(g, &transpose(b)).expect("matmul vjp");
            let db = matmul(&transpose(x), g).expect("matmul vjp");
            vec![da, db]
        }
        OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Div => {
            let b = inputs[1];
            let mode = broadcast(kind.name(), x, b).expect("validated on forward");
            let n = b.len();
            let bval = |i: usize| match mode {
                Broadcast::Same => b.data()[i],
                Broadcast::Row => b.data()[i % n],
                Broadcast::Scalar => b.data()[0],
            };
            let gd = g.data();
            let xd = x.data();
            let (ga, gb): (Vec<f64>, Vec<f64>) = (0..x.len())
                .map(|i| match kind {
                    OpKind::Add => (gd[i], gd[i]),
                    OpKind::Sub => (gd[i], -gd[i]),
                    OpKind::Mul => (gd[i] * bval(i), gd[i] * xd[i]),
                    _ => {
                        let bv = bval(i);
                        (gd[i] / bv, -gd[i] * xd[i] / (bv * bv))
                    }
                })
                .unzip();
            let ga = Tensor::new(x.shape(), ga).expect("same shape");
            let gb = Tensor::new(x.shape(), gb).expect("same shape");
            vec![ga, unbroadcast(mode, gb, b)]
        }
        OpKind::Scale(c) => vec![g.map(|v| v * c)],
        OpKind::Shift(_) => vec![g.clone()],
        OpKind::Softplus => vec![g.zip_map(x, |gv, xv| gv * sigmoid(xv))],
        OpKind::Relu => vec![g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 })],
        OpKind::Tanh => vec![g.zip_map(output, |gv, y| gv * (1.0 - y * y))],
        OpKind::Exp => vec![g.zip_map(output, |gv, y| gv * y)],
        OpKind::Log => vec![g.zip_map(x, |gv, xv| gv / xv)],
        OpKind::Square => vec![g.zip_map(x, |gv, xv| 2.0 * gv * xv)],
        OpKind::Sum => vec![Tensor::full(x.shape(), g.item())],
        OpKind::Mean => vec![Tensor::full(x.shape(), g.item() / x.len() as f64)],
        OpKind::SumAxis(axis) => vec![expand_axis(g, x.shape(), axis, 1.0)],
        OpKind::MeanAxis(axis) => {
            let n = x.shape()[axis] as f64;
            vec![expand_axis(g, x.shape(), axis, 1.0 / n)]
        }
        OpKind::LogSoftmax => {
            let n = x.cols();
            let mut out = Vec::with_capacity(x.len());
            for (grow, yrow) in g.data().chunks(n).zip(output.data().chunks(n)) {
                let gs: f64 = grow.iter().sum();
                out.extend(grow.iter().zip(yrow).map(|(gv, y)| gv - y.exp() * gs));
            }
            vec![Tensor::new(x.shape(), out).expect("same shape")]
        }
        OpKind::StopGradient => vec![Tensor::zeros(x.shape())],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let m = Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let out = apply(OpKind::MatMul, &[&Tensor::eye(2), &m]).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn softplus_at_zero_is_ln2() {
        let out = apply(OpKind::Softplus, &[&Tensor::scalar(0.0)]).unwrap();
        assert!((out.item() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus_inv(softplus(0.3)) - 0.3).abs() < 1e-14);
        assert!((softplus(-800.0)).abs() < 1e-300);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn log_softmax_uniform() {
        let out = apply(OpKind::LogSoftmax, &[&Tensor::from_vec(vec![0.0; 3])]).unwrap();
        for v in out.data() {
            assert!((v + 3f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_names_kind_and_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let err = apply(OpKind::Add, &[&a, &b]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add") && msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
        let err = apply(OpKind::MatMul, &[&a, &a]).unwrap_err();
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn log_rejects_non_positive() {
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        assert!(matches!(
            apply(OpKind::Log, &[&x]),
            Err(Error::Domain { op: "log", .. })
        ));
        let y = Tensor::from_vec(vec![1.0, 2.0]);
        assert!(apply(OpKind::Div, &[&y, &x]).is_err());
    }

    #[test]
    fn row_broadcast_add() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::from_vec(vec![10.0, 20.0]);
        let out = apply(OpKind::Add, &[&a, &b]).unwrap();
        assert_eq!(out.data(), &[11.0, 22.0, 13.0, 24.0]);
        let g = Tensor::ones(&[2, 2]);
        let grads = vjp(OpKind::Add, &[&a, &b], &out, &g);
        assert_eq!(grads[1].data(), &[2.0, 2.0]);
    }

    #[test]
    fn axis_reductions() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(apply(OpKind::SumAxis(0), &[&a]).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(apply(OpKind::SumAxis(1), &[&a]).unwrap().data(), &[6.0, 15.0]);
        assert_eq!(apply(OpKind::MeanAxis(1), &[&a]).unwrap().data(), &[2.0, 5.0]);
        assert!(apply(OpKind::SumAxis(2), &[&a]).is_err());
    }
}
