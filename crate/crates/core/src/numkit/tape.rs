//! Append-only operation tape with reverse-mode differentiation.

use crate::error::{Error, Result};

use super::ops::{self, OpKind};
use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf,
    Op(OpKind, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    kind: NodeKind,
    value: Tensor,
}

/// Records every value produced while building an expression. Inputs of a
/// node always precede it, so a reverse sweep over the node list is a valid
/// backward order.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input value.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            kind: NodeKind::Leaf,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Runs the forward kernel and records the node.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let value = ops::apply(kind, &values)?;
        self.nodes.push(Node {
            kind: NodeKind::Op(kind, inputs.iter().map(|v| v.0).collect()),
            value,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Div, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::Scale(c), &[a])
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::Shift(c), &[a])
    }

    pub fn unary(&mut self, kind: OpKind, a: Var) -> Result<Var> {
        self.apply(kind, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[a])
    }

    pub fn stop_gradient(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::StopGradient, &[a])
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::ones(root_value.shape()));
        for id in (0..=root.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if let NodeKind::Op(kind, inputs) = &self.nodes[id].kind {
                let values: Vec<&Tensor> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
                let parts = ops::vjp(*kind, &values, &self.nodes[id].value, &g);
                for (&input, part) in inputs.iter().zip(parts) {
                    match &mut grads[input] {
                        Some(acc) => {
                            for (a, p) in acc.data_mut().iter_mut().zip(part.data()) {
                                *a += p;
                            }
                        }
                        slot @ None => *slot = Some(part),
                    }
                }
            }
            grads[id] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.unwrap_or_else(|| Tensor::zeros(n.value.shape())))
            .collect();
        Ok(Gradients { grads })
    }

    /// Recomputes every op node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.kind {
                NodeKind::Leaf => node.value.clone(),
                NodeKind::Op(kind, inputs) => {
                    let ins: Vec<&Tensor> = inputs.iter().map(|&i| &values[i]).collect();
                    ops::apply(*kind, &ins)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }
}

/// Gradient of a root with respect to every node on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.grads[v.0], Tensor::scalar(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap());
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x), &Tensor::ones(&[2, 2]));
        assert_eq!(g.get(s).item(), 1.0);
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.unary(OpKind::Square, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 6.0);
    }

    #[test]
    fn untouched_nodes_have_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let unused = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.unary(OpKind::Exp, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(unused), &Tensor::zeros(&[2]));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn shared_input_accumulates() {
        // y = x * x through mul: dy/dx = 2x
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.5));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 3.0);
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let d = tape.stop_gradient(x).unwrap();
        let y = tape.mul(d, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).item(), 2.0);
    }

    #[test]
    fn replay_is_bit_identical() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![0.3, -1.1], vec![2.2, 0.7]]).unwrap());
        let w = tape.leaf(Tensor::from_rows(&[vec![0.5, 1.5], vec![-0.25, 0.1]]).unwrap());
        let h = tape.matmul(x, w).unwrap();
        let t = tape.unary(OpKind::Tanh, h).unwrap();
        let l = tape.unary(OpKind::LogSoftmax, t).unwrap();
        tape.sum(l).unwrap();
        let replayed = tape.replay().unwrap();
        for (i, v) in replayed.iter().enumerate() {
            assert_eq!(v.data(), tape.value(Var(i)).data());
        }
    }
}
