//! Experiment config file: every section and field is optional and falls back
//! to the library defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use aanet_core::baselines::BaselineConfig;
use aanet_core::checkpoint::ModelSpec;
use aanet_core::systems::OscillatorConfig;
use aanet_core::training::TrainConfig;
use aanet_core::{AanConfig, ModelKind};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const RUN_ROOT_ENV: &str = "AANET_RUN_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub dt_grid: Vec<f64>,
    pub samples_grid: Vec<usize>,
    /// Jumps evaluated for each point of the samples grid.
    pub samples_dt: Vec<f64>,
    pub bench_dt_grid: Vec<f64>,
    pub repeats: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            // 40 is the longest round jump that still leaves pairs in a 500-sample tail.
            dt_grid: vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0],
            samples_grid: vec![50, 100, 200, 500],
            samples_dt: vec![1.0, 5.0, 10.0],
            bench_dt_grid: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            repeats: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: OscillatorConfig,
    pub train: TrainConfig,
    pub action_angle: AanConfig,
    pub euler_update: BaselineConfig,
    pub neural_ode: BaselineConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: OscillatorConfig::default(),
            train: TrainConfig::default(),
            action_angle: AanConfig::default(),
            euler_update: BaselineConfig::euler_default(),
            neural_ode: BaselineConfig::neural_ode_default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let user: Value = serde_json::from_str(&text).with_context(|| format!("config {} is not valid JSON", path.display()))?;
        let mut merged = serde_json::to_value(Self::default())?;
        merge(&mut merged, user, "")?;
        serde_json::from_value(merged).with_context(|| format!("invalid value in config {}", path.display()))
    }

    pub fn spec(&self, kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::ActionAngle => ModelSpec::ActionAngle(self.action_angle.clone()),
            ModelKind::EulerUpdate => ModelSpec::EulerUpdate(self.euler_update.clone()),
            ModelKind::NeuralOde => ModelSpec::NeuralOde(self.neural_ode.clone()),
        }
    }

    pub fn set_spec(&mut self, spec: ModelSpec) {
        match spec {
            ModelSpec::ActionAngle(c) => self.action_angle = c,
            ModelSpec::EulerUpdate(c) => self.euler_update = c,
            ModelSpec::NeuralOde(c) => self.neural_ode = c,
        }
    }
}

/// Overlays `user` onto `base`, refusing keys that `base` does not have.
fn merge(base: &mut Value, user: Value, at: &str) -> Result<()> {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &path)?,
                    None => bail!("unknown config key `{path}`"),
                }
            }
        }
        (slot, v) => *slot = v,
    }
    Ok(())
}

/// Resolves an output directory against the run root and creates it.
pub fn out_dir(out: Option<&Path>) -> Result<PathBuf> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let dir = match std::env::var_os(RUN_ROOT_ENV) {
        Some(root) if out.is_relative() => PathBuf::from(root).join(out),
        _ => out,
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}
