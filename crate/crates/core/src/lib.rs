//! Action-angle networks: learned symplectic maps to action-angle coordinates
//! for simulating integrable Hamiltonian systems, plus latent-space baselines,
//! a coupled-oscillator data generator and an evaluation harness.

pub mod autodiff;
pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod flows;
pub mod model;
pub mod nn;
pub mod phase;
pub mod plot;
pub mod systems;
pub mod training;

pub use error::{Error, Result};
pub use model::{ActionAngleNetwork, AanConfig, ModelKind, Simulator, Trainable};
pub use phase::PhaseState;
