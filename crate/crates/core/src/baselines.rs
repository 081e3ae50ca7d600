//! Latent-space baselines: the Euler Update Network and a Neural ODE.
//!
//! Both encode `u = [q, p]` into a latent `û` of the same width, advance it
//! with a learned vector field `ℱ`, and decode. The Euler network takes one
//! explicit Euler step of size `Δt`; the Neural ODE integrates with classical
//! RK4 on a fixed grid of `ceil(Δt/h₀)` substeps, so its cost grows with `Δt`.
//!
//! Encoder and decoder are residual (`x + MLP(x)`) with zeroed output layers,
//! so a fresh model starts as the identity map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Eager, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{ModelKind, Recorded, Simulator, Trainable};
use crate::nn::{BoundMlp, Mlp};
use crate::phase::{batch_to_tensors, tensors_to_batch, PhaseState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub n: usize,
    pub coder_hidden: Vec<usize>,
    pub field_hidden: Vec<usize>,
    /// Neural ODE substep bound `h₀`; unused by the Euler network.
    pub step_size: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self::euler_default()
    }
}

impl BaselineConfig {
    /// About 9K parameters at `n = 2`.
    pub fn euler_default() -> Self {
        Self {
            n: 2,
            coder_hidden: vec![50, 50],
            field_hidden: vec![50, 50],
            step_size: 0.1,
        }
    }

    /// About 100K parameters at `n = 2`.
    pub fn neural_ode_default() -> Self {
        Self {
            n: 2,
            coder_hidden: vec![178, 178],
            field_hidden: vec![178, 178],
            step_size: 0.1,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::NeuralOde => Self::neural_ode_default(),
            _ => Self::euler_default(),
        }
    }

    fn sizes(&self, hidden: &[usize]) -> Vec<usize> {
        let w = 2 * self.n;
        std::iter::once(w).chain(hidden.iter().copied()).chain(std::iter::once(w)).collect()
    }

    pub fn coder_sizes(&self) -> Vec<usize> {
        self.sizes(&self.coder_hidden)
    }

    pub fn field_sizes(&self) -> Vec<usize> {
        self.sizes(&self.field_hidden)
    }

    pub fn param_count(&self) -> usize {
        let count = |s: Vec<usize>| -> usize { s.windows(2).map(|w| w[0] * w[1] + w[1]).sum() };
        2 * count(self.coder_sizes()) + count(self.field_sizes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.coder_hidden.contains(&0) || self.field_hidden.contains(&0) {
            return Err(Error::Config(format!("invalid baseline architecture {self:?}")));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        Ok(())
    }
}

/// Residual encoder/decoder pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// The latent vector field `ℱ(û)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDynamics {
    pub field: Mlp,
}

/// Substeps used by the Neural ODE for a horizon `dt`.
pub fn rk4_substeps(dt: f64, step_size: f64) -> usize {
    // The small slack keeps 1.0/0.1 from rounding up to 11.
    ((dt / step_size) - 1e-9).ceil().max(1.0) as usize
}

/// One classical RK4 step of `ż = field(z)`.
pub fn rk4_step<B, F>(bk: &mut B, field: &mut F, z: &B::Var, h: f64) -> Result<B::Var>
where
    B: Backend,
    F: FnMut(&mut B, &B::Var) -> Result<B::Var>,
{
    let k1 = field(bk, z)?;
    let s = bk.scale(&k1, 0.5 * h)?;
    let z2 = bk.add(z, &s)?;
    let k2 = field(bk, &z2)?;
    let s = bk.scale(&k2, 0.5 * h)?;
    let z3 = bk.add(z, &s)?;
    let k3 = field(bk, &z3)?;
    let s = bk.scale(&k3, h)?;
    let z4 = bk.add(z, &s)?;
    let k4 = field(bk, &z4)?;

    let k23 = bk.add(&k2, &k3)?;
    let k23 = bk.scale(&k23, 2.0)?;
    let sum = bk.add(&k1, &k23)?;
    let sum = bk.add(&sum, &k4)?;
    let incr = bk.scale(&sum, h / 6.0)?;
    Ok(bk.add(z, &incr)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stepper {
    Euler,
    Rk4,
}

/// Shared body of both baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentModel {
    kind: ModelKind,
    n: usize,
    step_size: f64,
    pub coder: LatentCoder,
    pub dynamics: LatentDynamics,
}

pub type EulerUpdateNetwork = LatentModel;
pub type NeuralOde = LatentModel;

struct BoundLatent<'a, V> {
    encoder: BoundMlp<'a, V>,
    decoder: BoundMlp<'a, V>,
    field: BoundMlp<'a, V>,
}

impl LatentModel {
    pub fn init<R: Rng + ?Sized>(kind: ModelKind, cfg: &BaselineConfig, rng: &mut R) -> Result<Self> {
        if kind == ModelKind::ActionAngle {
            return Err(Error::Config("action-angle is not a latent baseline".into()));
        }
        cfg.validate()?;
        let encoder = Mlp::init(&cfg.coder_sizes(), true, rng)?;
        let decoder = Mlp::init(&cfg.coder_sizes(), true, rng)?;
        let field = Mlp::init(&cfg.field_sizes(), false, rng)?;
        Self::from_parts(kind, cfg.step_size, LatentCoder { encoder, decoder }, LatentDynamics { field })
    }

    pub fn from_parts(kind: ModelKind, step_size: f64, coder: LatentCoder, dynamics: LatentDynamics) -> Result<Self> {
        let w = coder.encoder.inputs();
        for (name, mlp) in [("encoder", &coder.encoder), ("decoder", &coder.decoder), ("field", &dynamics.field)] {
            if mlp.inputs() != w || mlp.outputs() != w {
                return Err(Error::Architecture(format!(
                    "{name} maps {} → {}, expected {w} → {w}",
                    mlp.inputs(),
                    mlp.outputs()
                )));
            }
        }
        if w % 2 != 0 {
            return Err(Error::Architecture(format!("latent width {w} is odd")));
        }
        if !(step_size > 0.0) {
            return Err(Error::Config("step_size must be positive".into()));
        }
        Ok(Self {
            kind,
            n: w / 2,
            step_size,
            coder,
            dynamics,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn config(&self) -> BaselineConfig {
        let hidden = |m: &Mlp| {
            let s = m.sizes();
            s[1..s.len() - 1].to_vec()
        };
        BaselineConfig {
            n: self.n,
            coder_hidden: hidden(&self.coder.encoder),
            field_hidden: hidden(&self.dynamics.field),
            step_size: self.step_size,
        }
    }

    fn stepper(&self) -> Stepper {
        match self.kind {
            ModelKind::NeuralOde => Stepper::Rk4,
            _ => Stepper::Euler,
        }
    }

    fn bind<B: Backend>(&self, bk: &mut B) -> BoundLatent<'_, B::Var> {
        BoundLatent {
            encoder: self.coder.encoder.bind(bk),
            decoder: self.coder.decoder.bind(bk),
            field: self.dynamics.field.bind(bk),
        }
    }

    /// Latent state after advancing `z` by `dt`.
    fn advance<B: Backend>(&self, bk: &mut B, field: &BoundMlp<'_, B::Var>, z: &B::Var, dt: f64) -> Result<B::Var> {
        match self.stepper() {
            Stepper::Euler => {
                let f = field.forward(bk, z)?;
                let s = bk.scale(&f, dt)?;
                Ok(bk.add(z, &s)?)
            }
            Stepper::Rk4 => {
                let steps = rk4_substeps(dt, self.step_size);
                let h = dt / steps as f64;
                let mut z = z.clone();
                let mut eval = |bk: &mut B, x: &B::Var| field.forward(bk, x);
                for k in 0..steps {
                    z = rk4_step(bk, &mut eval, &z, h)?;
                    if !bk.value(&z).all_finite() {
                        return Err(Error::NonFiniteState(k));
                    }
                }
                Ok(z)
            }
        }
    }

    fn run<B: Backend>(&self, bk: &mut B, bound: &BoundLatent<'_, B::Var>, q: &B::Var, p: &B::Var, dt: f64) -> Result<(B::Var, B::Var)> {
        let u = bk.concat(&[q, p])?;
        let e = bound.encoder.forward(bk, &u)?;
        let z = bk.add(&u, &e)?;
        let z = self.advance(bk, &bound.field, &z, dt)?;
        let d = bound.decoder.forward(bk, &z)?;
        let out = bk.add(&z, &d)?;
        let q = bk.slice(&out, 0, self.n)?;
        let p = bk.slice(&out, self.n, 2 * self.n)?;
        Ok((q, p))
    }

    /// Latent state for one input, before any evolution.
    pub fn encode(&self, state: &PhaseState) -> Result<Vec<f64>> {
        let u = Tensor::matrix(1, 2 * self.n, state.to_vec())?;
        let e = self.coder.encoder.forward(&u)?;
        Ok(u.add(&e)?.into_data())
    }
}

impl Simulator for LatentModel {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn n(&self) -> usize {
        self.n
    }

    fn param_count(&self) -> usize {
        self.coder.encoder.param_count() + self.coder.decoder.param_count() + self.dynamics.field.param_count()
    }

    fn predict_batch(&self, states: &[PhaseState], dt: f64) -> Result<Vec<PhaseState>> {
        if dt < 0.0 {
            return Err(Error::NegativeDt(dt));
        }
        if let Some(s) = states.iter().find(|s| s.dim() != self.n) {
            return Err(Error::Dimension {
                expected: self.n,
                got: s.dim(),
            });
        }
        let (q, p) = batch_to_tensors(states)?;
        let mut bk = Eager;
        let bound = self.bind(&mut bk);
        let (q, p) = self.run(&mut bk, &bound, &q, &p, dt)?;
        tensors_to_batch(&q, &p)
    }

    fn field_calls(&self) -> usize {
        self.dynamics.field.call_count()
    }
}

impl Trainable for LatentModel {
    fn params(&self) -> Vec<&Tensor> {
        let mut v = self.coder.encoder.params();
        v.extend(self.coder.decoder.params());
        v.extend(self.dynamics.field.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.coder.encoder.params_mut();
        v.extend(self.coder.decoder.params_mut());
        v.extend(self.dynamics.field.params_mut());
        v
    }

    fn record(&self, tape: &mut Tape, q: NodeId, p: NodeId, dt: f64) -> Result<Recorded> {
        let first = tape.len();
        let bound = self.bind(tape);
        let params = tape.ids_since(first);
        let (q, p) = self.run(tape, &bound, &q, &p, dt)?;
        Ok(Recorded {
            params,
            q,
            p,
            actions: None,
        })
    }
}
