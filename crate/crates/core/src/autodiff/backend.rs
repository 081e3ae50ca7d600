use super::{DiffError, NodeId, Op, Tape, Tensor};

/// Operations the models are written against.
///
/// `Tape` records every call for a later reverse sweep; `Eager` just computes.
pub trait Backend {
    type Var: Clone;

    /// Introduces a trainable parameter.
    fn param(&mut self, t: &Tensor) -> Self::Var;
    /// Introduces fixed data.
    fn constant(&mut self, t: Tensor) -> Self::Var;
    fn value<'a>(&'a self, v: &'a Self::Var) -> &'a Tensor;

    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var, DiffError>;
    fn sub(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var, DiffError>;
    fn mul(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var, DiffError>;
    fn scale(&mut self, a: &Self::Var, c: f64) -> Result<Self::Var, DiffError>;
    fn scalar_mul(&mut self, s: &Self::Var, x: &Self::Var) -> Result<Self::Var, DiffError>;
    fn matmul(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var, DiffError>;
    fn matmul_t(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var, DiffError>;
    fn add_row(&mut self, a: &Self::Var, r: &Self::Var) -> Result<Self::Var, DiffError>;
    fn mul_row(&mut self, a: &Self::Var, r: &Self::Var) -> Result<Self::Var, DiffError>;
    fn sum_rows(&mut self, a: &Self::Var) -> Result<Self::Var, DiffError>;
    fn tanh(&mut self, a: &Self::Var) -> Result<Self::Var, DiffError>;
    fn sin(&mut self, a: &Self::Var) -> Result<Self::Var, DiffError>;
    fn cos(&mut self, a: &Self::Var) -> Result<Self::Var, DiffError>;
    fn sqrt(&mut self, a: &Self::Var) -> Result<Self::Var, DiffError>;
    fn square(&mut self, a: &Self::Var) -> Result<Self::Var, DiffError>;
    fn atan2(&mut self, y: &Self::Var, x: &Self::Var) -> Result<Self::Var, DiffError>;
    fn sum(&mut self, a: &Self::Var) -> Result<Self::Var, DiffError>;
    fn mean(&mut self, a: &Self::Var) -> Result<Self::Var, DiffError>;
    fn concat(&mut self, parts: &[&Self::Var]) -> Result<Self::Var, DiffError>;
    fn slice(&mut self, a: &Self::Var, start: usize, end: usize) -> Result<Self::Var, DiffError>;
}

/// Tape-free evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl Backend for Eager {
    type Var = Tensor;

    fn param(&mut self, t: &Tensor) -> Tensor {
        t.clone()
    }
    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }
    fn value<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
        a.add(b)
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
        a.sub(b)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
        a.mul(b)
    }
    fn scale(&mut self, a: &Tensor, c: f64) -> Result<Tensor, DiffError> {
        Ok(a.scale(c))
    }
    fn scalar_mul(&mut self, s: &Tensor, x: &Tensor) -> Result<Tensor, DiffError> {
        Tensor::scalar_mul(s, x)
    }
    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
        a.matmul(b)
    }
    fn matmul_t(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
        a.matmul_t(b)
    }
    fn add_row(&mut self, a: &Tensor, r: &Tensor) -> Result<Tensor, DiffError> {
        a.add_row(r)
    }
    fn mul_row(&mut self, a: &Tensor, r: &Tensor) -> Result<Tensor, DiffError> {
        a.mul_row(r)
    }
    fn sum_rows(&mut self, a: &Tensor) -> Result<Tensor, DiffError> {
        a.sum_rows()
    }
    fn tanh(&mut self, a: &Tensor) -> Result<Tensor, DiffError> {
        Ok(a.map(f64::tanh))
    }
    fn sin(&mut self, a: &Tensor) -> Result<Tensor, DiffError> {
        Ok(a.map(f64::sin))
    }
    fn cos(&mut self, a: &Tensor) -> Result<Tensor, DiffError> {
        Ok(a.map(f64::cos))
    }
    fn sqrt(&mut self, a: &Tensor) -> Result<Tensor, DiffError> {
        Ok(a.map(f64::sqrt))
    }
    fn square(&mut self, a: &Tensor) -> Result<Tensor, DiffError> {
        Ok(a.map(|x| x * x))
    }
    fn atan2(&mut self, y: &Tensor, x: &Tensor) -> Result<Tensor, DiffError> {
        Tensor::atan2(y, x)
    }
    fn sum(&mut self, a: &Tensor) -> Result<Tensor, DiffError> {
        Ok(a.sum())
    }
    fn mean(&mut self, a: &Tensor) -> Result<Tensor, DiffError> {
        Ok(a.mean())
    }
    fn concat(&mut self, parts: &[&Tensor]) -> Result<Tensor, DiffError> {
        Tensor::concat_cols(parts)
    }
    fn slice(&mut self, a: &Tensor, start: usize, end: usize) -> Result<Tensor, DiffError> {
        a.slice_cols(start, end)
    }
}

impl Backend for Tape {
    type Var = NodeId;

    fn param(&mut self, t: &Tensor) -> NodeId {
        Tape::param(self, t.clone())
    }
    fn constant(&mut self, t: Tensor) -> NodeId {
        Tape::constant(self, t)
    }
    fn value<'a>(&'a self, v: &'a NodeId) -> &'a Tensor {
        Tape::value(self, *v)
    }
    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Add(*a, *b))
    }
    fn sub(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Sub(*a, *b))
    }
    fn mul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Mul(*a, *b))
    }
    fn scale(&mut self, a: &NodeId, c: f64) -> Result<NodeId, DiffError> {
        self.record(Op::Scale(*a, c))
    }
    fn scalar_mul(&mut self, s: &NodeId, x: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::ScalarMul(*s, *x))
    }
    fn matmul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::MatMul(*a, *b))
    }
    fn matmul_t(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::MatMulT(*a, *b))
    }
    fn add_row(&mut self, a: &NodeId, r: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::AddRow(*a, *r))
    }
    fn mul_row(&mut self, a: &NodeId, r: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::MulRow(*a, *r))
    }
    fn sum_rows(&mut self, a: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::SumRows(*a))
    }
    fn tanh(&mut self, a: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Tanh(*a))
    }
    fn sin(&mut self, a: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Sin(*a))
    }
    fn cos(&mut self, a: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Cos(*a))
    }
    fn sqrt(&mut self, a: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Sqrt(*a))
    }
    fn square(&mut self, a: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Square(*a))
    }
    fn atan2(&mut self, y: &NodeId, x: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Atan2(*y, *x))
    }
    fn sum(&mut self, a: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Sum(*a))
    }
    fn mean(&mut self, a: &NodeId) -> Result<NodeId, DiffError> {
        self.record(Op::Mean(*a))
    }
    fn concat(&mut self, parts: &[&NodeId]) -> Result<NodeId, DiffError> {
        self.record(Op::Concat(parts.iter().map(|p| **p).collect()))
    }
    fn slice(&mut self, a: &NodeId, start: usize, end: usize) -> Result<NodeId, DiffError> {
        self.record(Op::Slice(*a, start, end))
    }
}
