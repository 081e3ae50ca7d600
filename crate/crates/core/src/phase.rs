use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Canonical coordinates `(q, p)` of an `n`-body system at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::Dimension {
                expected: q.len(),
                got: p.len(),
            });
        }
        if q.iter().chain(&p).any(|x| !x.is_finite()) {
            return Err(Error::Config("phase state must be finite".into()));
        }
        Ok(Self { q, p })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            p: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `[q..., p...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.q.iter().chain(&self.p).copied().collect()
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() % 2 != 0 {
            return Err(Error::Dimension {
                expected: x.len() + 1,
                got: x.len(),
            });
        }
        let n = x.len() / 2;
        Ok(Self {
            q: x[..n].to_vec(),
            p: x[n..].to_vec(),
        })
    }

    pub fn squared_distance(&self, other: &PhaseState) -> f64 {
        self.q
            .iter()
            .chain(&self.p)
            .zip(other.q.iter().chain(&other.p))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &PhaseState) -> f64 {
        self.q
            .iter()
            .chain(&self.p)
            .zip(other.q.iter().chain(&other.p))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Stacks states into `[B×n]` position and momentum matrices.
pub fn batch_to_tensors(states: &[PhaseState]) -> Result<(Tensor, Tensor)> {
    let n = states.first().map(PhaseState::dim).unwrap_or(0);
    let mut q = Vec::with_capacity(states.len() * n);
    let mut p = Vec::with_capacity(states.len() * n);
    for s in states {
        if s.dim() != n {
            return Err(Error::Dimension {
                expected: n,
                got: s.dim(),
            });
        }
        q.extend_from_slice(&s.q);
        p.extend_from_slice(&s.p);
    }
    Ok((
        Tensor::matrix(states.len(), n, q)?,
        Tensor::matrix(states.len(), n, p)?,
    ))
}

/// Inverse of [`batch_to_tensors`].
pub fn tensors_to_batch(q: &Tensor, p: &Tensor) -> Result<Vec<PhaseState>> {
    let (rows, n) = match q.shape() {
        [r, c] => (*r, *c),
        _ => {
            return Err(Error::Dimension {
                expected: 2,
                got: q.shape().len(),
            })
        }
    };
    if p.shape() != q.shape() {
        return Err(Error::Dimension {
            expected: q.len(),
            got: p.len(),
        });
    }
    Ok((0..rows)
        .map(|i| PhaseState {
            q: q.data()[i * n..(i + 1) * n].to_vec(),
            p: p.data()[i * n..(i + 1) * n].to_vec(),
        })
        .collect())
}
