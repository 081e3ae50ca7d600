//! Self-describing JSON checkpoints and a model enum over every kind.
//!
//! Parameters are stored as decimal strings with 17 significant digits, which
//! round-trips every finite `f64` exactly.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::baselines::{BaselineConfig, LatentCoder, LatentDynamics, LatentModel};
use crate::error::{Error, Result};
use crate::flows::{FlowStack, GSympLayer, Parity};
use crate::model::{ActionAngleNetwork, AanConfig, ModelKind, Recorded, Simulator, Trainable};
use crate::nn::{Dense, Mlp};
use crate::phase::PhaseState;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayRecord {
    pub shape: Vec<usize>,
    pub data: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowLayerRecord {
    pub parity: Parity,
    pub width: usize,
    pub w: ArrayRecord,
    pub a: ArrayRecord,
    pub b: ArrayRecord,
    pub c: ArrayRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub w: ArrayRecord,
    pub b: ArrayRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_size: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flow: Vec<FlowLayerRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub head: Vec<DenseRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub encoder: Vec<DenseRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decoder: Vec<DenseRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub field: Vec<DenseRecord>,
}

/// Architecture of any model kind, used to validate a loaded file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    ActionAngle(AanConfig),
    EulerUpdate(BaselineConfig),
    NeuralOde(BaselineConfig),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::ActionAngle => Self::ActionAngle(AanConfig::default()),
            ModelKind::EulerUpdate => Self::EulerUpdate(BaselineConfig::euler_default()),
            ModelKind::NeuralOde => Self::NeuralOde(BaselineConfig::neural_ode_default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::ActionAngle(_) => ModelKind::ActionAngle,
            Self::EulerUpdate(_) => ModelKind::EulerUpdate,
            Self::NeuralOde(_) => ModelKind::NeuralOde,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Self::ActionAngle(c) => c.n,
            Self::EulerUpdate(c) | Self::NeuralOde(c) => c.n,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::ActionAngle(c) => c.param_count(),
            Self::EulerUpdate(c) | Self::NeuralOde(c) => c.param_count(),
        }
    }

    pub fn init<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<AnyModel> {
        Ok(match self {
            Self::ActionAngle(c) => AnyModel::ActionAngle(ActionAngleNetwork::init(c, rng)?),
            Self::EulerUpdate(c) => AnyModel::Latent(LatentModel::init(ModelKind::EulerUpdate, c, rng)?),
            Self::NeuralOde(c) => AnyModel::Latent(LatentModel::init(ModelKind::NeuralOde, c, rng)?),
        })
    }

    /// Initialization from a seed, on a ChaCha stream separate from the one
    /// the training loop draws batches from.
    pub fn init_seeded(&self, seed: u64) -> Result<AnyModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        self.init(&mut rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    ActionAngle(ActionAngleNetwork),
    Latent(LatentModel),
}

impl AnyModel {
    pub fn spec(&self) -> ModelSpec {
        match self {
            Self::ActionAngle(m) => ModelSpec::ActionAngle(m.config()),
            Self::Latent(m) if m.kind() == ModelKind::NeuralOde => ModelSpec::NeuralOde(m.config()),
            Self::Latent(m) => ModelSpec::EulerUpdate(m.config()),
        }
    }

    pub fn as_action_angle(&self) -> Option<&ActionAngleNetwork> {
        match self {
            Self::ActionAngle(m) => Some(m),
            Self::Latent(_) => None,
        }
    }

    fn inner(&self) -> &dyn Trainable {
        match self {
            Self::ActionAngle(m) => m,
            Self::Latent(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Trainable {
        match self {
            Self::ActionAngle(m) => m,
            Self::Latent(m) => m,
        }
    }
}

impl Simulator for AnyModel {
    fn kind(&self) -> ModelKind {
        self.inner().kind()
    }

    fn n(&self) -> usize {
        self.inner().n()
    }

    fn param_count(&self) -> usize {
        self.inner().param_count()
    }

    fn predict_batch(&self, states: &[PhaseState], dt: f64) -> Result<Vec<PhaseState>> {
        self.inner().predict_batch(states, dt)
    }

    fn field_calls(&self) -> usize {
        self.inner().field_calls()
    }
}

impl Trainable for AnyModel {
    fn params(&self) -> Vec<&Tensor> {
        self.inner().params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.inner_mut().params_mut()
    }

    fn record(&self, tape: &mut Tape, q: NodeId, p: NodeId, dt: f64) -> Result<Recorded> {
        self.inner().record(tape, q, p, dt)
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn array(t: &Tensor) -> ArrayRecord {
    ArrayRecord {
        shape: t.shape().to_vec(),
        data: t.data().iter().map(|&x| fmt_f64(x)).collect(),
    }
}

fn dense(d: &Dense) -> DenseRecord {
    DenseRecord {
        inputs: d.inputs(),
        outputs: d.outputs(),
        w: array(&d.w),
        b: array(&d.b),
    }
}

fn mlp(m: &Mlp) -> Vec<DenseRecord> {
    m.layers().iter().map(dense).collect()
}

impl CheckpointFile {
    pub fn from_model(model: &AnyModel) -> Self {
        let mut file = Self {
            format_version: FORMAT_VERSION,
            model_kind: model.kind(),
            n: model.n(),
            step_size: None,
            flow: Vec::new(),
            head: Vec::new(),
            encoder: Vec::new(),
            decoder: Vec::new(),
            field: Vec::new(),
        };
        match model {
            AnyModel::ActionAngle(m) => {
                file.flow = m
                    .flow()
                    .layers()
                    .iter()
                    .map(|l| FlowLayerRecord {
                        parity: l.parity,
                        width: l.width(),
                        w: array(&l.w),
                        a: array(&l.a),
                        b: array(&l.b),
                        c: array(&l.c),
                    })
                    .collect();
                file.head = mlp(m.head());
            }
            AnyModel::Latent(m) => {
                file.step_size = Some(fmt_f64(m.step_size()));
                file.encoder = mlp(&m.coder.encoder);
                file.decoder = mlp(&m.coder.decoder);
                file.field = mlp(&m.dynamics.field);
            }
        }
        file
    }

    pub fn into_model(self) -> Result<AnyModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let n = self.n;
        match self.model_kind {
            ModelKind::ActionAngle => {
                if self.flow.is_empty() || self.head.is_empty() {
                    return Err(Error::Corrupt("action-angle checkpoint without flow or head".into()));
                }
                let layers = self
                    .flow
                    .iter()
                    .enumerate()
                    .map(|(i, l)| flow_layer(i, n, l))
                    .collect::<Result<Vec<_>>>()?;
                let flow = FlowStack::new(n, layers).map_err(|e| Error::Shape(e.to_string()))?;
                let head = build_mlp("head", &self.head)?;
                let net = ActionAngleNetwork::from_parts(flow, head).map_err(|e| Error::Shape(e.to_string()))?;
                Ok(AnyModel::ActionAngle(net))
            }
            kind => {
                let step = self
                    .step_size
                    .as_deref()
                    .ok_or_else(|| Error::Corrupt("baseline checkpoint without step_size".into()))
                    .and_then(|s| parse_f64(s))?;
                let coder = LatentCoder {
                    encoder: build_mlp("encoder", &self.encoder)?,
                    decoder: build_mlp("decoder", &self.decoder)?,
                };
                let dynamics = LatentDynamics {
                    field: build_mlp("field", &self.field)?,
                };
                let model = LatentModel::from_parts(kind, step, coder, dynamics).map_err(|e| Error::Shape(e.to_string()))?;
                if model.n() != n {
                    return Err(Error::Shape(format!("file declares n={n}, parameters imply n={}", model.n())));
                }
                Ok(AnyModel::Latent(model))
            }
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Corrupt(format!("bad number {s:?}")))?;
    if !x.is_finite() {
        return Err(Error::Corrupt(format!("non-finite parameter {s:?}")));
    }
    Ok(x)
}

fn tensor(name: &str, rec: &ArrayRecord, expected: &[usize]) -> Result<Tensor> {
    if rec.shape != expected {
        return Err(Error::Shape(format!("{name}: expected shape {expected:?}, file has {:?}", rec.shape)));
    }
    let data = rec.data.iter().map(|s| parse_f64(s)).collect::<Result<Vec<_>>>()?;
    Tensor::new(rec.shape.clone(), data).map_err(|e| Error::Shape(format!("{name}: {e}")))
}

fn flow_layer(i: usize, n: usize, rec: &FlowLayerRecord) -> Result<GSympLayer> {
    let name = |p: &str| format!("flow[{i}].{p}");
    Ok(GSympLayer {
        parity: rec.parity,
        w: tensor(&name("w"), &rec.w, &[rec.width, n])?,
        a: tensor(&name("a"), &rec.a, &[rec.width])?,
        b: tensor(&name("b"), &rec.b, &[rec.width])?,
        c: tensor(&name("c"), &rec.c, &[])?,
    })
}

fn build_mlp(name: &str, recs: &[DenseRecord]) -> Result<Mlp> {
    if recs.is_empty() {
        return Err(Error::Corrupt(format!("missing {name} layers")));
    }
    let layers = recs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(Dense {
                w: tensor(&format!("{name}[{i}].w"), &r.w, &[r.outputs, r.inputs])?,
                b: tensor(&format!("{name}[{i}].b"), &r.b, &[r.outputs])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Mlp::from_layers(layers).map_err(|e| Error::Shape(format!("{name}: {e}")))
}

pub fn save(model: &AnyModel, path: &Path) -> Result<()> {
    let file = CheckpointFile::from_model(model);
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<AnyModel> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    // Check the version before the schema so old files report the right error.
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::Version {
                found: u32::try_from(v).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            })
        }
        None => return Err(Error::Corrupt(format!("{}: missing format_version", path.display()))),
    }
    let file: CheckpointFile =
        serde_json::from_value(value).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
    file.into_model()
}

/// Loads a checkpoint and insists that it matches `expected`.
pub fn load_as(path: &Path, expected: &ModelSpec) -> Result<AnyModel> {
    let model = load(path)?;
    let found = model.spec();
    if &found != expected {
        return Err(Error::Architecture(format!("file holds {found:?}, expected {expected:?}")));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_strings_round_trip() {
        for x in [0.1, -1.0 / 3.0, f64::MIN_POSITIVE, 1e300, 5e-324, 0.0, -0.0] {
            let y = parse_f64(&fmt_f64(x)).unwrap();
            assert_eq!(x.to_bits(), y.to_bits(), "{x}");
        }
    }

    #[test]
    fn rejects_non_finite_strings() {
        assert!(matches!(parse_f64("NaN"), Err(Error::Corrupt(_))));
        assert!(matches!(parse_f64("inf"), Err(Error::Corrupt(_))));
    }
}
