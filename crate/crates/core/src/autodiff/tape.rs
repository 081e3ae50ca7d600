use std::collections::BTreeMap;

use super::{DiffError, Tensor};

/// Index of a node on a [`Tape`]. Ids grow monotonically, so every node's
/// inputs have strictly smaller ids than the node itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Radius below which `atan2` reports a zero gradient instead of dividing by ~0.
pub const ATAN2_ORIGIN_RADIUS: f64 = 1e-12;

/// An operation record. Inputs are ids of earlier nodes.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Param,
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Multiplication by a fixed real number.
    Scale(NodeId, f64),
    /// A scalar node times a tensor node.
    ScalarMul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`.
    MatMulT(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    SumRows(NodeId),
    Tanh(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Sqrt(NodeId),
    Square(NodeId),
    /// `atan2(y, x)`.
    Atan2(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize, usize),
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Param | Constant => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | ScalarMul(a, b) | MatMul(a, b) | MatMulT(a, b)
            | AddRow(a, b) | MulRow(a, b) | Atan2(a, b) => vec![*a, *b],
            Scale(a, _) | SumRows(a) | Tanh(a) | Sin(a) | Cos(a) | Sqrt(a) | Square(a) | Sum(a)
            | Mean(a) | Slice(a, _, _) => vec![*a],
            Concat(parts) => parts.clone(),
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by parameter node. A missing entry means zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grad {
    map: BTreeMap<NodeId, Tensor>,
}

impl Grad {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.map.get(&id)
    }

    /// Gradient for `id`, materializing zeros of `like`'s shape when absent.
    pub fn get_or_zeros(&self, id: NodeId, like: &Tensor) -> Tensor {
        self.map
            .get(&id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn is_empty(&self) -> bool {
        self.map.values().all(|t| t.data().iter().all(|&x| x == 0.0))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.map.iter().map(|(k, v)| (*k, v))
    }
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

    /// Ids of every node appended at or after position `start`.
    pub fn ids_since(&self, start: usize) -> Vec<NodeId> {
        (start..self.nodes.len()).map(NodeId).collect()
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Param, value, true)
    }

    /// A leaf treated as fixed data.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        id
    }

    fn check(&self, id: NodeId) -> Result<&Tensor, DiffError> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or(DiffError::UnknownNode(id.0))
    }

    /// Evaluates `op` on cached input values and appends the result.
    pub fn record(&mut self, op: Op) -> Result<NodeId, DiffError> {
        let inputs = op.inputs();
        for &i in &inputs {
            self.check(i)?;
        }
        let v = |id: NodeId| &self.nodes[id.0].value;
        let value = match &op {
            Op::Param | Op::Constant => {
                return Err(DiffError::Leaf);
            }
            Op::Add(a, b) => v(*a).add(v(*b))?,
            Op::Sub(a, b) => v(*a).sub(v(*b))?,
            Op::Mul(a, b) => v(*a).mul(v(*b))?,
            Op::Scale(a, c) => v(*a).scale(*c),
            Op::ScalarMul(s, x) => Tensor::scalar_mul(v(*s), v(*x))?,
            Op::MatMul(a, b) => v(*a).matmul(v(*b))?,
            Op::MatMulT(a, b) => v(*a).matmul_t(v(*b))?,
            Op::AddRow(a, r) => v(*a).add_row(v(*r))?,
            Op::MulRow(a, r) => v(*a).mul_row(v(*r))?,
            Op::SumRows(a) => v(*a).sum_rows()?,
            Op::Tanh(a) => v(*a).map(f64::tanh),
            Op::Sin(a) => v(*a).map(f64::sin),
            Op::Cos(a) => v(*a).map(f64::cos),
            Op::Sqrt(a) => v(*a).map(f64::sqrt),
            Op::Square(a) => v(*a).map(|x| x * x),
            Op::Atan2(y, x) => Tensor::atan2(v(*y), v(*x))?,
            Op::Sum(a) => v(*a).sum(),
            Op::Mean(a) => v(*a).mean(),
            Op::Concat(parts) => {
                let parts: Vec<&Tensor> = parts.iter().map(|&p| v(p)).collect();
                Tensor::concat_cols(&parts)?
            }
            Op::Slice(a, s, e) => v(*a).slice_cols(*s, *e)?,
        };
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        Ok(self.push(op, value, needs_grad))
    }

    /// Reverse sweep from a scalar `loss`, returning gradients for every
    /// parameter leaf that `loss` depends on.
    pub fn backward(&self, loss: NodeId) -> Result<Grad, DiffError> {
        let out = self.check(loss)?;
        if !out.is_scalar() {
            return Err(DiffError::NotScalar {
                shape: out.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::from_parts(out.shape().to_vec(), vec![1.0])?);
        let mut grads = Grad::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let Op::Param = node.op {
                grads.map.insert(NodeId(idx), g);
                continue;
            }
            self.propagate(node, &g, &mut adj)?;
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &Tensor, adj: &mut [Option<Tensor>]) -> Result<(), DiffError> {
        let val = |id: NodeId| &self.nodes[id.0].value;
        let mut send = |id: NodeId, contrib: Tensor| {
            if !self.nodes[id.0].needs_grad {
                return;
            }
            match &mut adj[id.0] {
                Some(acc) => acc.accumulate(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let wants = |id: NodeId| self.nodes[id.0].needs_grad;

        match &node.op {
            Op::Param | Op::Constant => {}
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    send(*a, g.mul(val(*b))?);
                }
                if wants(*b) {
                    send(*b, g.mul(val(*a))?);
                }
            }
            Op::Scale(a, c) => send(*a, g.scale(*c)),
            Op::ScalarMul(s, x) => {
                if wants(*s) {
                    let d: f64 = g.data().iter().zip(val(*x).data()).map(|(a, b)| a * b).sum();
                    send(*s, Tensor::from_parts(val(*s).shape().to_vec(), vec![d])?);
                }
                if wants(*x) {
                    send(*x, g.scale(val(*s).item()?));
                }
            }
            Op::MatMul(a, b) => {
                if wants(*a) {
                    send(*a, g.matmul_t(val(*b))?);
                }
                if wants(*b) {
                    send(*b, val(*a).t_matmul(g)?);
                }
            }
            Op::MatMulT(a, b) => {
                if wants(*a) {
                    send(*a, g.matmul(val(*b))?);
                }
                if wants(*b) {
                    send(*b, g.t_matmul(val(*a))?);
                }
            }
            Op::AddRow(a, r) => {
                send(*a, g.clone());
                if wants(*r) {
                    send(*r, g.sum_rows()?);
                }
            }
            Op::MulRow(a, r) => {
                if wants(*a) {
                    send(*a, g.mul_row(val(*r))?);
                }
                if wants(*r) {
                    send(*r, g.mul(val(*a))?.sum_rows()?);
                }
            }
            Op::SumRows(a) => {
                let (m, n) = val(*a).as_matrix("sum_rows")?;
                let mut data = Vec::with_capacity(m * n);
                for _ in 0..m {
                    data.extend_from_slice(g.data());
                }
                send(*a, Tensor::from_parts(vec![m, n], data)?);
            }
            Op::Tanh(a) => send(*a, g.zip(&node.value, "tanh", |g, y| g * (1.0 - y * y))?),
            Op::Sin(a) => send(*a, g.zip(val(*a), "sin", |g, x| g * x.cos())?),
            Op::Cos(a) => send(*a, g.zip(val(*a), "cos", |g, x| -g * x.sin())?),
            Op::Sqrt(a) => send(
                *a,
                g.zip(&node.value, "sqrt", |g, y| if y > 0.0 { g / (2.0 * y) } else { 0.0 })?,
            ),
            Op::Square(a) => send(*a, g.zip(val(*a), "square", |g, x| 2.0 * x * g)?),
            Op::Atan2(y, x) => {
                let (yv, xv) = (val(*y).data(), val(*x).data());
                let mut gy = Vec::with_capacity(yv.len());
                let mut gx = Vec::with_capacity(yv.len());
                for ((&gi, &yi), &xi) in g.data().iter().zip(yv).zip(xv) {
                    let r2 = xi * xi + yi * yi;
                    if r2 < ATAN2_ORIGIN_RADIUS * ATAN2_ORIGIN_RADIUS {
                        gy.push(0.0);
                        gx.push(0.0);
                    } else {
                        gy.push(gi * xi / r2);
                        gx.push(-gi * yi / r2);
                    }
                }
                let shape = val(*y).shape().to_vec();
                send(*y, Tensor::from_parts(shape.clone(), gy)?);
                send(*x, Tensor::from_parts(shape, gx)?);
            }
            Op::Sum(a) => {
                let s = g.item()?;
                send(*a, val(*a).map(|_| s));
            }
            Op::Mean(a) => {
                let s = g.item()? / val(*a).len() as f64;
                send(*a, val(*a).map(|_| s));
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for &p in parts {
                    let (_, w) = val(p).as_matrix("concat")?;
                    if wants(p) {
                        send(p, g.slice_cols(start, start + w)?);
                    }
                    start += w;
                }
            }
            Op::Slice(a, s, e) => {
                let src = val(*a);
                let (m, n) = src.as_matrix("slice")?;
                let w = e - s;
                let mut data = vec![0.0; m * n];
                for i in 0..m {
                    data[i * n + s..i * n + e].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                send(*a, Tensor::from_parts(src.shape().to_vec(), data)?);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let xx = tape.record(Op::Mul(x, x)).unwrap();
        let loss = tape.record(Op::Sum(xx)).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_loss_has_no_gradient() {
        let mut tape = Tape::new();
        let _x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let c = tape.constant(Tensor::vector(vec![5.0, 6.0]));
        let loss = tape.record(Op::Sum(c)).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.len(), 0);
    }

    #[test]
    fn atan2_gradient_at_unit_diagonal() {
        let mut tape = Tape::new();
        let y = tape.param(Tensor::scalar(1.0));
        let x = tape.param(Tensor::scalar(1.0));
        let loss = tape.record(Op::Atan2(y, x)).unwrap();
        let g = tape.backward(loss).unwrap();
        // Frozen from central differences with h = 1e-6.
        assert!((g.get(y).unwrap().item().unwrap() - 0.5).abs() < 1e-9);
        assert!((g.get(x).unwrap().item().unwrap() + 0.5).abs() < 1e-9);
    }

    #[test]
    fn atan2_origin_gives_zero_gradient() {
        let mut tape = Tape::new();
        let y = tape.param(Tensor::scalar(1e-14));
        let x = tape.param(Tensor::scalar(-1e-14));
        let loss = tape.record(Op::Atan2(y, x)).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(y).unwrap().item().unwrap(), 0.0);
        assert_eq!(g.get(x).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(DiffError::NotScalar { .. })));
    }

    #[test]
    fn shared_input_accumulates() {
        // loss = sum(x) + sum(3x) → grad 4 everywhere.
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.3, -1.0]));
        let a = tape.record(Op::Sum(x)).unwrap();
        let x3 = tape.record(Op::Scale(x, 3.0)).unwrap();
        let b = tape.record(Op::Sum(x3)).unwrap();
        let loss = tape.record(Op::Add(a, b)).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[4.0, 4.0]);
    }

    #[test]
    fn record_rejects_unknown_inputs() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.0));
        assert!(matches!(
            tape.record(Op::Add(x, NodeId(7))),
            Err(DiffError::UnknownNode(7))
        ));
    }
}
