//! Symplectic coupling layers and the polar map onto action-angle coordinates.
//!
//! Each layer shears one block of the phase space by a gradient-like function
//! of the other block,
//!
//! ```text
//! even: (q, p) ↦ (q, p + f(q))      odd: (q, p) ↦ (q + f(p), p)
//! f(x) = C·x + Wᵀ diag(A) tanh(W·x + B)
//! ```
//!
//! so the Jacobian of `f` is symmetric and every layer is symplectic and
//! exactly invertible for any parameter values. With `A = 0` and `C = 0` a
//! layer is the identity.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Eager, Tensor};
use crate::error::{Error, Result};
use crate::phase::{batch_to_tensors, tensors_to_batch, PhaseState};

/// Which block a layer updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// Updates `p` from `q`.
    Even,
    /// Updates `q` from `p`.
    Odd,
}

impl Parity {
    pub fn of_index(i: usize) -> Self {
        if i % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GSympLayer {
    pub parity: Parity,
    /// `[width × n]`
    pub w: Tensor,
    /// `[width]`
    pub a: Tensor,
    /// `[width]`
    pub b: Tensor,
    /// scalar
    pub c: Tensor,
}

/// Parameters of a layer lifted onto a backend.
#[derive(Clone, Debug)]
pub struct BoundLayer<V> {
    pub parity: Parity,
    pub w: V,
    pub a: V,
    pub b: V,
    pub c: V,
}

impl GSympLayer {
    /// A layer that maps every state to itself.
    pub fn identity(parity: Parity, n: usize, width: usize) -> Self {
        Self {
            parity,
            w: Tensor::zeros(&[width, n]),
            a: Tensor::zeros(&[width]),
            b: Tensor::zeros(&[width]),
            c: Tensor::scalar(0.0),
        }
    }

    /// Near-identity initialization: `W ~ N(0, 1/√n)`, `A ~ N(0, 0.01)`, `B = C = 0`.
    pub fn init<R: Rng + ?Sized>(parity: Parity, n: usize, width: usize, rng: &mut R) -> Self {
        let w_dist = Normal::new(0.0, 1.0 / (n as f64).sqrt()).expect("valid std");
        let a_dist = Normal::new(0.0, 0.01).expect("valid std");
        let w = (0..width * n).map(|_| w_dist.sample(rng)).collect();
        let a = (0..width).map(|_| a_dist.sample(rng)).collect();
        Self {
            parity,
            w: Tensor::matrix(width, n, w).expect("shape matches"),
            a: Tensor::vector(a),
            b: Tensor::zeros(&[width]),
            c: Tensor::scalar(0.0),
        }
    }

    pub fn n(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.a.len() + self.b.len() + 1
    }

    pub fn params(&self) -> [&Tensor; 4] {
        [&self.w, &self.a, &self.b, &self.c]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w, &mut self.a, &mut self.b, &mut self.c]
    }

    pub fn bind<B: Backend>(&self, bk: &mut B) -> BoundLayer<B::Var> {
        BoundLayer {
            parity: self.parity,
            w: bk.param(&self.w),
            a: bk.param(&self.a),
            b: bk.param(&self.b),
            c: bk.param(&self.c),
        }
    }

    pub fn forward(&self, state: &PhaseState) -> Result<PhaseState> {
        let (q, p) = self.single(state)?;
        let bound = self.bind(&mut Eager);
        let (q, p) = bound.forward(&mut Eager, &q, &p)?;
        Ok(tensors_to_batch(&q, &p)?.remove(0))
    }

    pub fn inverse(&self, state: &PhaseState) -> Result<PhaseState> {
        let (q, p) = self.single(state)?;
        let bound = self.bind(&mut Eager);
        let (q, p) = bound.inverse(&mut Eager, &q, &p)?;
        Ok(tensors_to_batch(&q, &p)?.remove(0))
    }

    fn single(&self, state: &PhaseState) -> Result<(Tensor, Tensor)> {
        if state.dim() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: state.dim(),
            });
        }
        batch_to_tensors(std::slice::from_ref(state))
    }
}

impl<V: Clone> BoundLayer<V> {
    /// `f(x)` for a batch `x: [B×n]`.
    pub fn shear<B: Backend<Var = V>>(&self, bk: &mut B, x: &V) -> Result<V> {
        let z = bk.matmul_t(x, &self.w)?;
        let z = bk.add_row(&z, &self.b)?;
        let s = bk.tanh(&z)?;
        let s = bk.mul_row(&s, &self.a)?;
        let nonlinear = bk.matmul(&s, &self.w)?;
        let linear = bk.scalar_mul(&self.c, x)?;
        Ok(bk.add(&linear, &nonlinear)?)
    }

    pub fn forward<B: Backend<Var = V>>(&self, bk: &mut B, q: &V, p: &V) -> Result<(V, V)> {
        match self.parity {
            Parity::Even => {
                let f = self.shear(bk, q)?;
                Ok((q.clone(), bk.add(p, &f)?))
            }
            Parity::Odd => {
                let f = self.shear(bk, p)?;
                Ok((bk.add(q, &f)?, p.clone()))
            }
        }
    }

    pub fn inverse<B: Backend<Var = V>>(&self, bk: &mut B, q: &V, p: &V) -> Result<(V, V)> {
        match self.parity {
            Parity::Even => {
                let f = self.shear(bk, q)?;
                Ok((q.clone(), bk.sub(p, &f)?))
            }
            Parity::Odd => {
                let f = self.shear(bk, p)?;
                Ok((bk.sub(q, &f)?, p.clone()))
            }
        }
    }
}

/// Composition of coupling layers with alternating parity, starting from even.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowStack {
    n: usize,
    layers: Vec<GSympLayer>,
}

impl FlowStack {
    pub fn new(n: usize, layers: Vec<GSympLayer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.n() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: l.n(),
                });
            }
            if l.parity != Parity::of_index(i) {
                return Err(Error::Config(format!("layer {i} breaks even/odd alternation")));
            }
            if l.width() == 0 {
                return Err(Error::Config(format!("layer {i} has zero width")));
            }
        }
        Ok(Self { n, layers })
    }

    pub fn init<R: Rng + ?Sized>(n: usize, depth: usize, width: usize, rng: &mut R) -> Self {
        let layers = (0..depth)
            .map(|i| GSympLayer::init(Parity::of_index(i), n, width, rng))
            .collect();
        Self { n, layers }
    }

    pub fn identity(n: usize, depth: usize, width: usize) -> Self {
        let layers = (0..depth)
            .map(|i| GSympLayer::identity(Parity::of_index(i), n, width))
            .collect();
        Self { n, layers }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layers(&self) -> &[GSympLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [GSympLayer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(GSympLayer::param_count).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn bind<B: Backend>(&self, bk: &mut B) -> BoundStack<B::Var> {
        BoundStack {
            layers: self.layers.iter().map(|l| l.bind(bk)).collect(),
        }
    }

    pub fn forward(&self, state: &PhaseState) -> Result<PhaseState> {
        Ok(self.forward_batch(std::slice::from_ref(state))?.remove(0))
    }

    pub fn inverse(&self, state: &PhaseState) -> Result<PhaseState> {
        Ok(self.inverse_batch(std::slice::from_ref(state))?.remove(0))
    }

    pub fn forward_batch(&self, states: &[PhaseState]) -> Result<Vec<PhaseState>> {
        self.check_batch(states)?;
        let (q, p) = batch_to_tensors(states)?;
        let bound = self.bind(&mut Eager);
        let (q, p) = bound.forward(&mut Eager, &q, &p)?;
        tensors_to_batch(&q, &p)
    }

    pub fn inverse_batch(&self, states: &[PhaseState]) -> Result<Vec<PhaseState>> {
        self.check_batch(states)?;
        let (q, p) = batch_to_tensors(states)?;
        let bound = self.bind(&mut Eager);
        let (q, p) = bound.inverse(&mut Eager, &q, &p)?;
        tensors_to_batch(&q, &p)
    }

    fn check_batch(&self, states: &[PhaseState]) -> Result<()> {
        match states.iter().find(|s| s.dim() != self.n) {
            Some(s) => Err(Error::Dimension {
                expected: self.n,
                got: s.dim(),
            }),
            None => Ok(()),
        }
    }

    /// Max-abs entry of `JᵀΩJ − Ω` at `point`, with `J` from central differences.
    pub fn symplecticity_check(&self, point: &PhaseState) -> Result<f64> {
        symplectic_defect(|s| self.forward(s), point, 1e-5)
    }
}

#[derive(Clone, Debug)]
pub struct BoundStack<V> {
    pub layers: Vec<BoundLayer<V>>,
}

impl<V: Clone> BoundStack<V> {
    pub fn forward<B: Backend<Var = V>>(&self, bk: &mut B, q: &V, p: &V) -> Result<(V, V)> {
        let (mut q, mut p) = (q.clone(), p.clone());
        for l in &self.layers {
            (q, p) = l.forward(bk, &q, &p)?;
        }
        Ok((q, p))
    }

    pub fn inverse<B: Backend<Var = V>>(&self, bk: &mut B, q: &V, p: &V) -> Result<(V, V)> {
        let (mut q, mut p) = (q.clone(), p.clone());
        for l in self.layers.iter().rev() {
            (q, p) = l.inverse(bk, &q, &p)?;
        }
        Ok((q, p))
    }
}

/// Cartesian components of the actions; `(Ix_i, Iy_i)` are paired index-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianActionState {
    pub ix: Vec<f64>,
    pub iy: Vec<f64>,
}

/// Actions `I ≥ 0` and angles `θ ∈ [0, 2π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionAngleState {
    pub actions: Vec<f64>,
    pub angles: Vec<f64>,
}

/// Radius under which the angle is reported as 0.
pub const POLAR_ORIGIN_RADIUS: f64 = 1e-12;

/// Reduces an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn to_polar(c: &CartesianActionState) -> ActionAngleState {
    let (actions, angles) = c
        .ix
        .iter()
        .zip(&c.iy)
        .map(|(&x, &y)| {
            let r = (x * x + y * y).sqrt();
            let theta = if r < POLAR_ORIGIN_RADIUS {
                0.0
            } else {
                wrap_angle(y.atan2(x))
            };
            (r, theta)
        })
        .unzip();
    ActionAngleState { actions, angles }
}

pub fn from_polar(a: &ActionAngleState) -> Result<CartesianActionState> {
    if let Some((index, &value)) = a.actions.iter().enumerate().find(|(_, &i)| i < 0.0) {
        return Err(Error::NegativeAction { index, value });
    }
    let (ix, iy) = a
        .actions
        .iter()
        .zip(&a.angles)
        .map(|(&r, &t)| (r * t.cos(), r * t.sin()))
        .unzip();
    Ok(CartesianActionState { ix, iy })
}

/// Differentiable polar map. The angle is left unwrapped (in `(-π, π]`).
pub fn polar_forward<B: Backend>(bk: &mut B, ix: &B::Var, iy: &B::Var) -> Result<(B::Var, B::Var)> {
    let x2 = bk.square(ix)?;
    let y2 = bk.square(iy)?;
    let r2 = bk.add(&x2, &y2)?;
    let r = bk.sqrt(&r2)?;
    let theta = bk.atan2(iy, ix)?;
    Ok((r, theta))
}

/// Differentiable inverse polar map; periodic in the angle, so no wrapping is needed.
pub fn polar_inverse<B: Backend>(bk: &mut B, r: &B::Var, theta: &B::Var) -> Result<(B::Var, B::Var)> {
    let c = bk.cos(theta)?;
    let s = bk.sin(theta)?;
    Ok((bk.mul(r, &c)?, bk.mul(r, &s)?))
}

/// Central-difference Jacobian of `map` at `point`, rows indexed by output,
/// coordinates ordered `[q..., p...]`.
pub fn jacobian_fd<F>(map: F, point: &PhaseState, h: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&PhaseState) -> Result<PhaseState>,
{
    let x = point.to_vec();
    let dim = x.len();
    let mut jac = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += h;
        minus[j] -= h;
        let fp = map(&PhaseState::from_slice(&plus)?)?.to_vec();
        let fm = map(&PhaseState::from_slice(&minus)?)?.to_vec();
        for i in 0..dim {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `‖JᵀΩJ − Ω‖∞` with `Ω = [[0, I], [−I, 0]]`.
pub fn symplectic_defect<F>(map: F, point: &PhaseState, h: f64) -> Result<f64>
where
    F: Fn(&PhaseState) -> Result<PhaseState>,
{
    let jac = jacobian_fd(map, point, h)?;
    let dim = jac.len();
    let n = dim / 2;
    let omega = |i: usize, j: usize| -> f64 {
        if i < n && j == i + n {
            1.0
        } else if i >= n && j + n == i {
            -1.0
        } else {
            0.0
        }
    };
    // (Ω J)_kj
    let omega_j: Vec<Vec<f64>> = (0..dim)
        .map(|k| (0..dim).map(|j| (0..dim).map(|l| omega(k, l) * jac[l][j]).sum()).collect())
        .collect();
    let mut defect: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let v: f64 = (0..dim).map(|k| jac[k][i] * omega_j[k][j]).sum();
            defect = defect.max((v - omega(i, j)).abs());
        }
    }
    Ok(defect)
}
