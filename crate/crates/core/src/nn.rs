//! Fully connected tanh networks.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Backend, Eager, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[out × in]`
    pub w: Tensor,
    /// `[out]`
    pub b: Tensor,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.w.shape()[0]
    }
}

/// Multi-layer perceptron with tanh between layers and a linear output.
///
/// Every evaluation bumps an atomic counter so callers can assert how many
/// times a vector field was queried.
#[derive(Debug)]
pub struct Mlp {
    layers: Vec<Dense>,
    calls: AtomicUsize,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            calls: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// LeCun-normal weights and zero biases. With `zero_last` the output layer
    /// starts at exactly zero.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], zero_last: bool, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let count = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let w = if zero_last && i + 1 == count {
                    vec![0.0; fan_out * fan_in]
                } else {
                    let d = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("valid std");
                    (0..fan_out * fan_in).map(|_| d.sample(rng)).collect()
                };
                Dense {
                    w: Tensor::matrix(fan_out, fan_in, w).expect("shape matches"),
                    b: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Ok(Self::from_layers(layers)?)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Dimension {
                    expected: pair[0].outputs(),
                    got: pair[1].inputs(),
                });
            }
        }
        for l in &layers {
            if l.b.shape() != [l.outputs()] {
                return Err(Error::Dimension {
                    expected: l.outputs(),
                    got: l.b.len(),
                });
            }
        }
        Ok(Self {
            layers,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// `[in, hidden..., out]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs())
            .chain(self.layers.iter().map(Dense::outputs))
            .collect()
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    /// Number of forward evaluations since construction or the last reset.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_call_count(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn bind<'a, B: Backend>(&'a self, bk: &mut B) -> BoundMlp<'a, B::Var> {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|l| (bk.param(&l.w), bk.param(&l.b)))
                .collect(),
            calls: &self.calls,
        }
    }

    /// Evaluates a batch `x: [B × in]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.bind(&mut Eager).forward(&mut Eager, x)
    }
}

pub struct BoundMlp<'a, V> {
    layers: Vec<(V, V)>,
    calls: &'a AtomicUsize,
}

impl<V: Clone> BoundMlp<'_, V> {
    pub fn forward<B: Backend<Var = V>>(&self, bk: &mut B, x: &V) -> Result<V> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let z = bk.matmul_t(&h, w)?;
            h = bk.add_row(&z, b)?;
            if i != last {
                h = bk.tanh(&h)?;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sizes_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::init(&[2, 32, 2], true, &mut rng).unwrap();
        assert_eq!(mlp.sizes(), vec![2, 32, 2]);
        assert_eq!(mlp.param_count(), 2 * 32 + 32 + 32 * 2 + 2);
        let x = Tensor::matrix(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let y = mlp.forward(&x).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert_eq!(mlp.call_count(), 1);
        mlp.reset_call_count();
        assert_eq!(mlp.call_count(), 0);
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Mlp::init(&[2], false, &mut rng).is_err());
        assert!(Mlp::init(&[2, 0, 2], false, &mut rng).is_err());
    }
}
