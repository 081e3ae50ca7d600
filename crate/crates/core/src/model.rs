//! The Action-Angle Network: encode `(q, p)` into action-angle coordinates with
//! a symplectic flow followed by the polar map, advance the angles linearly at
//! the rate predicted from the actions, and decode with the exact inverse.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Eager, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::flows::{
    from_polar, polar_forward, polar_inverse, to_polar, wrap_angle, ActionAngleState, BoundStack,
    CartesianActionState, FlowStack,
};
use crate::nn::{BoundMlp, Mlp};
use crate::phase::{batch_to_tensors, tensors_to_batch, PhaseState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    ActionAngle,
    EulerUpdate,
    NeuralOde,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ActionAngle => "action-angle",
            ModelKind::EulerUpdate => "euler-update",
            ModelKind::NeuralOde => "neural-ode",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "action-angle" | "aan" => Ok(ModelKind::ActionAngle),
            "euler-update" | "eun" => Ok(ModelKind::EulerUpdate),
            "neural-ode" | "node" => Ok(ModelKind::NeuralOde),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A learned map `(u(t), Δt) ↦ u(t + Δt)`.
pub trait Simulator: Send + Sync {
    fn kind(&self) -> ModelKind;
    fn n(&self) -> usize;
    fn param_count(&self) -> usize;
    fn predict_batch(&self, states: &[PhaseState], dt: f64) -> Result<Vec<PhaseState>>;
    /// Cumulative evaluations of the learned vector field.
    fn field_calls(&self) -> usize;

    fn predict(&self, state: &PhaseState, dt: f64) -> Result<PhaseState> {
        Ok(self.predict_batch(std::slice::from_ref(state), dt)?.remove(0))
    }
}

/// What a model records on a tape for one batch.
pub struct Recorded {
    /// Parameter leaves, in the order of [`Trainable::params`].
    pub params: Vec<NodeId>,
    pub q: NodeId,
    pub p: NodeId,
    /// Encoded actions of the input batch, `[B × n]`, when the model has them.
    pub actions: Option<NodeId>,
}

pub trait Trainable: Simulator {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;
    fn record(&self, tape: &mut Tape, q: NodeId, p: NodeId, dt: f64) -> Result<Recorded>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AanConfig {
    pub n: usize,
    pub flow_depth: usize,
    pub flow_width: usize,
    pub head_hidden: Vec<usize>,
}

impl Default for AanConfig {
    fn default() -> Self {
        Self {
            n: 2,
            flow_depth: 8,
            flow_width: 256,
            head_hidden: vec![32],
        }
    }
}

impl AanConfig {
    pub fn head_sizes(&self) -> Vec<usize> {
        std::iter::once(self.n)
            .chain(self.head_hidden.iter().copied())
            .chain(std::iter::once(self.n))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        let flow = self.flow_depth * (self.flow_width * self.n + 2 * self.flow_width + 1);
        let head: usize = self.head_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        flow + head
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.flow_width == 0 || self.head_hidden.contains(&0) {
            return Err(Error::Config(format!("invalid action-angle architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionAngleNetwork {
    flow: FlowStack,
    head: Mlp,
}

impl ActionAngleNetwork {
    /// Near-identity flow and a zero-output dynamics head.
    pub fn init<R: Rng + ?Sized>(cfg: &AanConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let flow = FlowStack::init(cfg.n, cfg.flow_depth, cfg.flow_width, rng);
        let head = Mlp::init(&cfg.head_sizes(), true, rng)?;
        Self::from_parts(flow, head)
    }

    pub fn from_parts(flow: FlowStack, head: Mlp) -> Result<Self> {
        if head.inputs() != flow.n() || head.outputs() != flow.n() {
            return Err(Error::Dimension {
                expected: flow.n(),
                got: head.inputs(),
            });
        }
        Ok(Self { flow, head })
    }

    pub fn flow(&self) -> &FlowStack {
        &self.flow
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Mlp {
        &mut self.head
    }

    pub fn config(&self) -> AanConfig {
        let sizes = self.head.sizes();
        AanConfig {
            n: self.flow.n(),
            flow_depth: self.flow.layers().len(),
            flow_width: self.flow.layers().first().map_or(0, |l| l.width()),
            head_hidden: sizes[1..sizes.len() - 1].to_vec(),
        }
    }

    fn check(&self, state: &PhaseState) -> Result<()> {
        if state.dim() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: state.dim(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, state: &PhaseState) -> Result<ActionAngleState> {
        self.check(state)?;
        let z = self.flow.forward(state)?;
        Ok(to_polar(&CartesianActionState { ix: z.q, iy: z.p }))
    }

    pub fn decode(&self, a: &ActionAngleState) -> Result<PhaseState> {
        if a.actions.len() != self.n() || a.angles.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: a.actions.len(),
            });
        }
        let c = from_polar(a)?;
        self.flow.inverse(&PhaseState { q: c.ix, p: c.iy })
    }

    /// `θ̇ = ℱ(I)`. The angles are not an input.
    pub fn angular_velocity(&self, actions: &[f64]) -> Result<Vec<f64>> {
        if actions.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: actions.len(),
            });
        }
        let x = Tensor::matrix(1, self.n(), actions.to_vec())?;
        Ok(self.head.forward(&x)?.into_data())
    }

    /// Actions pass through untouched; angles advance by `θ̇·dt` and are wrapped.
    pub fn evolve(&self, a: &ActionAngleState, dt: f64) -> Result<ActionAngleState> {
        if dt < 0.0 {
            return Err(Error::NegativeDt(dt));
        }
        let rates = self.angular_velocity(&a.actions)?;
        Ok(ActionAngleState {
            actions: a.actions.clone(),
            angles: a
                .angles
                .iter()
                .zip(&rates)
                .map(|(&t, &w)| wrap_angle(t + w * dt))
                .collect(),
        })
    }

    pub fn bind<B: Backend>(&self, bk: &mut B) -> BoundAan<'_, B::Var> {
        BoundAan {
            flow: self.flow.bind(bk),
            head: self.head.bind(bk),
        }
    }
}

pub struct BoundAan<'a, V> {
    pub flow: BoundStack<V>,
    pub head: BoundMlp<'a, V>,
}

/// Intermediate values of one differentiable prediction.
pub struct AanPass<V> {
    pub actions: V,
    pub angles: V,
    pub q: V,
    pub p: V,
}

impl<V: Clone> BoundAan<'_, V> {
    /// Returns `(I, θ)` with `θ` unwrapped.
    pub fn encode<B: Backend<Var = V>>(&self, bk: &mut B, q: &V, p: &V) -> Result<(V, V)> {
        let (ix, iy) = self.flow.forward(bk, q, p)?;
        polar_forward(bk, &ix, &iy)
    }

    pub fn decode<B: Backend<Var = V>>(&self, bk: &mut B, actions: &V, angles: &V) -> Result<(V, V)> {
        let (ix, iy) = polar_inverse(bk, actions, angles)?;
        self.flow.inverse(bk, &ix, &iy)
    }

    pub fn predict<B: Backend<Var = V>>(&self, bk: &mut B, q: &V, p: &V, dt: f64) -> Result<AanPass<V>> {
        let (actions, angles) = self.encode(bk, q, p)?;
        let rate = self.head.forward(bk, &actions)?;
        let step = bk.scale(&rate, dt)?;
        let advanced = bk.add(&angles, &step)?;
        let (q, p) = self.decode(bk, &actions, &advanced)?;
        Ok(AanPass {
            actions,
            angles,
            q,
            p,
        })
    }
}

impl Simulator for ActionAngleNetwork {
    fn kind(&self) -> ModelKind {
        ModelKind::ActionAngle
    }

    fn n(&self) -> usize {
        self.flow.n()
    }

    fn param_count(&self) -> usize {
        self.flow.param_count() + self.head.param_count()
    }

    fn predict_batch(&self, states: &[PhaseState], dt: f64) -> Result<Vec<PhaseState>> {
        if dt < 0.0 {
            return Err(Error::NegativeDt(dt));
        }
        for s in states {
            self.check(s)?;
        }
        let (q, p) = batch_to_tensors(states)?;
        let bound = self.bind(&mut Eager);
        let pass = bound.predict(&mut Eager, &q, &p, dt)?;
        tensors_to_batch(&pass.q, &pass.p)
    }

    fn field_calls(&self) -> usize {
        self.head.call_count()
    }
}

impl Trainable for ActionAngleNetwork {
    fn params(&self) -> Vec<&Tensor> {
        let mut v = self.flow.params();
        v.extend(self.head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = self.flow.params_mut();
        v.extend(self.head.params_mut());
        v
    }

    fn record(&self, tape: &mut Tape, q: NodeId, p: NodeId, dt: f64) -> Result<Recorded> {
        let first = tape.len();
        let bound = self.bind(tape);
        let params = tape.ids_since(first);
        let pass = bound.predict(tape, &q, &p, dt)?;
        Ok(Recorded {
            params,
            q: pass.q,
            p: pass.p,
            actions: Some(pass.actions),
        })
    }
}
