//! Training objective and loop.
//!
//! Each step draws one horizon `Δt ~ U(0, step/max_steps)·Δt_max`, rounds it to
//! a whole number of samples, draws a minibatch of start indices inside the
//! training range, and minimizes
//!
//! ```text
//! L = 1/(1+Δt) · mean ‖M(u(t₀), Δt) − u(t₀+Δt)‖²  +  λ · Var(I)
//! ```
//!
//! with Adam. `Var(I)` is the population variance of the encoded actions over
//! the minibatch, averaged over components.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{ActionAngleNetwork, Simulator, Trainable};
use crate::phase::{batch_to_tensors, PhaseState};
use crate::systems::Trajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the action-variance regularizer.
    pub lambda: f64,
    pub dt_max: f64,
    /// Number of leading trajectory samples available for training.
    pub split: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 50_000,
            batch_size: 32,
            learning_rate: 1e-3,
            lambda: 1.0,
            dt_max: 10.0,
            split: 500,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, trajectory_len: usize) -> Result<()> {
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return Err(Error::Config("dt_max must be positive".into()));
        }
        if self.split < 2 || self.split >= trajectory_len {
            return Err(Error::Config(format!(
                "split {} must lie in [2, {})",
                self.split, trajectory_len
            )));
        }
        if self.batch_size == 0 || self.max_steps == 0 {
            return Err(Error::Config("batch_size and max_steps must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("lambda must be >= 0 and learning_rate > 0".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    /// Horizon actually used, a whole multiple of the sampling interval.
    pub dt: f64,
    pub l_predict: f64,
    pub l_action: f64,
    pub l_total: f64,
    pub wall_ms: f64,
    /// Largest trajectory index touched by this step's inputs and targets.
    pub max_index: usize,
}

/// `U · (step/max_steps) · dt_max` with `U ~ Uniform[0, 1)`.
pub fn sample_dt<R: Rng + ?Sized>(step: usize, max_steps: usize, dt_max: f64, rng: &mut R) -> f64 {
    let progress = step.min(max_steps) as f64 / max_steps as f64;
    let u: f64 = rng.random();
    u * progress * dt_max
}

/// Nearest whole number of samples to `dt`.
pub fn quantize_dt(dt: f64, time_delta: f64) -> usize {
    (dt / time_delta).round() as usize
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], state: &mut AdamState, hyper: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            got: grads.len(),
        });
    }
    state.t += 1;
    let bc1 = 1.0 - hyper.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(state.t as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if p.shape() != g.shape() || m.shape() != g.shape() {
            return Err(Error::Shape(format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape())));
        }
        let pd = p.data_mut();
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = g.data()[i];
            md[i] = hyper.beta1 * md[i] + (1.0 - hyper.beta1) * gi;
            vd[i] = hyper.beta2 * vd[i] + (1.0 - hyper.beta2) * gi * gi;
            let mhat = md[i] / bc1;
            let vhat = vd[i] / bc2;
            pd[i] -= hyper.learning_rate * mhat / (vhat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

/// `mean_b (1/(1+dt))·‖model(input_b, dt) − target_b‖²`.
pub fn prediction_loss(model: &dyn Simulator, inputs: &[PhaseState], targets: &[PhaseState], dt: f64) -> Result<f64> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::Dimension {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let preds = model.predict_batch(inputs, dt)?;
    let total: f64 = preds.iter().zip(targets).map(|(a, b)| a.squared_distance(b)).sum();
    Ok(total / (inputs.len() as f64 * (1.0 + dt)))
}

/// Mean over components of the population variance of the encoded actions
/// at `indices` of one trajectory.
pub fn action_loss(net: &ActionAngleNetwork, trajectory: &Trajectory, indices: &[usize]) -> Result<f64> {
    if indices.len() < 2 {
        return Err(Error::Config("action loss needs at least two states".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= trajectory.len()) {
        return Err(Error::Config(format!("index {bad} outside trajectory of length {}", trajectory.len())));
    }
    let actions: Vec<Vec<f64>> = indices
        .iter()
        .map(|&i| net.encode(&trajectory.states[i]).map(|a| a.actions))
        .collect::<Result<_>>()?;
    Ok(action_variance(&actions))
}

/// Mean over components of the population variance of `rows`.
pub fn action_variance(rows: &[Vec<f64>]) -> f64 {
    let b = rows.len() as f64;
    let n = rows.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for k in 0..n {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / b;
        total += rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / b;
    }
    total / n as f64
}

struct LossNodes {
    params: Vec<NodeId>,
    total: NodeId,
    predict: NodeId,
    action: Option<NodeId>,
}

fn record_loss<M: Trainable + ?Sized>(
    model: &M,
    tape: &mut Tape,
    inputs: &[PhaseState],
    targets: &[PhaseState],
    dt: f64,
    lambda: f64,
) -> Result<LossNodes> {
    let (q0, p0) = batch_to_tensors(inputs)?;
    let (q1, p1) = batch_to_tensors(targets)?;
    let batch = inputs.len() as f64;
    let q0 = tape.constant(q0);
    let p0 = tape.constant(p0);
    let q1 = tape.constant(q1);
    let p1 = tape.constant(p1);

    let rec = model.record(tape, q0, p0, dt)?;
    let dq = tape.sub(&rec.q, &q1)?;
    let dp = tape.sub(&rec.p, &p1)?;
    let dq2 = tape.square(&dq)?;
    let dp2 = tape.square(&dp)?;
    let sq = tape.sum(&dq2)?;
    let sp = tape.sum(&dp2)?;
    let s = tape.add(&sq, &sp)?;
    let predict = tape.scale(&s, 1.0 / (batch * (1.0 + dt)))?;

    let action = match rec.actions {
        Some(actions) => {
            let col_sum = tape.sum_rows(&actions)?;
            let neg_mean = tape.scale(&col_sum, -1.0 / batch)?;
            let centered = tape.add_row(&actions, &neg_mean)?;
            let c2 = tape.square(&centered)?;
            Some(tape.mean(&c2)?)
        }
        None => None,
    };
    let total = match action {
        Some(a) if lambda > 0.0 => {
            let weighted = tape.scale(&a, lambda)?;
            tape.add(&predict, &weighted)?
        }
        _ => predict,
    };
    Ok(LossNodes {
        params: rec.params,
        total,
        predict,
        action,
    })
}

/// Loss value and parameter gradients for one fixed batch, in
/// [`Trainable::params`] order.
pub fn loss_and_grads<M: Trainable + ?Sized>(
    model: &M,
    inputs: &[PhaseState],
    targets: &[PhaseState],
    dt: f64,
    lambda: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let nodes = record_loss(model, &mut tape, inputs, targets, dt, lambda)?;
    let grad = tape.backward(nodes.total)?;
    let params = model.params();
    let grads = nodes
        .params
        .iter()
        .zip(&params)
        .map(|(&id, p)| grad.get_or_zeros(id, p))
        .collect();
    Ok((tape.value(nodes.total).item()?, grads))
}

pub fn train<M: Trainable>(model: &mut M, trajectory: &Trajectory, cfg: &TrainConfig) -> Result<Vec<TrainRecord>> {
    train_with_progress(model, trajectory, cfg, |_| {})
}

/// Runs the full loop, handing each record to `on_step` as it is produced.
pub fn train_with_progress<M: Trainable>(
    model: &mut M,
    trajectory: &Trajectory,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&TrainRecord),
) -> Result<Vec<TrainRecord>> {
    cfg.validate(trajectory.len())?;
    if trajectory.n() != model.n() {
        return Err(Error::Dimension {
            expected: model.n(),
            got: trajectory.n(),
        });
    }
    let time_delta = trajectory.time_delta();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.params());
    let hyper = cfg.adam();
    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.max_steps);

    for step in 1..=cfg.max_steps {
        let raw_dt = sample_dt(step, cfg.max_steps, cfg.dt_max, &mut rng);
        let offset = quantize_dt(raw_dt, time_delta).min(cfg.split - 1);
        let dt = offset as f64 * time_delta;
        let last_start = cfg.split - 1 - offset;

        let starts: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..=last_start)).collect();
        let inputs: Vec<PhaseState> = starts.iter().map(|&i| trajectory.states[i].clone()).collect();
        let targets: Vec<PhaseState> = starts.iter().map(|&i| trajectory.states[i + offset].clone()).collect();
        let max_index = starts.iter().max().copied().unwrap_or(0) + offset;

        let mut tape = Tape::new();
        let nodes = record_loss(&*model, &mut tape, &inputs, &targets, dt, cfg.lambda)?;
        let l_total = tape.value(nodes.total).item()?;
        let l_predict = tape.value(nodes.predict).item()?;
        let l_action = match nodes.action {
            Some(a) => tape.value(a).item()?,
            None => 0.0,
        };
        if !l_total.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                dt,
                l_predict,
                l_action,
            });
        }
        let grad = tape.backward(nodes.total)?;
        let grads: Vec<Tensor> = {
            let params = model.params();
            nodes
                .params
                .iter()
                .zip(&params)
                .map(|(&id, p)| grad.get_or_zeros(id, p))
                .collect()
        };
        drop(tape);
        adam_step(&mut model.params_mut(), &grads, &mut adam, &hyper)?;

        let record = TrainRecord {
            step,
            dt,
            l_predict,
            l_action,
            l_total,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            max_index,
        };
        on_step(&record);
        records.push(record);
    }
    Ok(records)
}

pub const TRAIN_LOG_HEADER: &str = "step,dt,l_predict,l_action,l_total,wall_ms";

pub fn write_train_log(path: &Path, records: &[TrainRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{TRAIN_LOG_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            r.step, r.dt, r.l_predict, r.l_action, r.l_total, r.wall_ms
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dt_is_zero_at_step_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_dt(0, 100, 10.0, &mut rng), 0.0);
        }
    }

    #[test]
    fn dt_bounded_at_final_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let dt = sample_dt(100, 100, 10.0, &mut rng);
            assert!((0.0..=10.0).contains(&dt));
        }
    }

    #[test]
    fn dt_mean_halfway() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mean: f64 = (0..100_000).map(|_| sample_dt(50, 100, 10.0, &mut rng)).sum::<f64>() / 1e5;
        assert!((mean - 2.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn quantization_rounds_to_nearest_sample() {
        assert_eq!(quantize_dt(0.04, 0.1), 0);
        assert_eq!(quantize_dt(0.06, 0.1), 1);
        assert_eq!(quantize_dt(9.96, 0.1), 100);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Tensor::scalar(1.0);
        let mut state = AdamState::new(&[&p]);
        let hyper = AdamConfig {
            learning_rate: 0.1,
            ..Default::default()
        };
        adam_step(&mut [&mut p], &[Tensor::scalar(1.0)], &mut state, &hyper).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = 0.1/(1 + 1e-8).
        assert!((p.item().unwrap() - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_keeps_params_and_decays_moments() {
        let mut p = Tensor::vector(vec![0.5, -0.5]);
        let mut state = AdamState::new(&[&p]);
        let hyper = AdamConfig::default();
        adam_step(&mut [&mut p], &[Tensor::vector(vec![0.0, 0.0])], &mut state, &hyper).unwrap();
        assert_eq!(p.data(), &[0.5, -0.5]);

        adam_step(&mut [&mut p], &[Tensor::vector(vec![1.0, 1.0])], &mut state, &hyper).unwrap();
        let m_before = state.m[0].data()[0];
        let v_before = state.v[0].data()[0];
        for _ in 0..10 {
            adam_step(&mut [&mut p], &[Tensor::vector(vec![0.0, 0.0])], &mut state, &hyper).unwrap();
        }
        assert!(state.m[0].data()[0] < m_before && state.m[0].data()[0] > 0.0);
        assert!(state.v[0].data()[0] < v_before);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = Tensor::vector(vec![0.5, -0.5]);
        let mut state = AdamState::new(&[&p]);
        let r = adam_step(&mut [&mut p], &[Tensor::scalar(1.0)], &mut state, &AdamConfig::default());
        assert!(r.is_err());
    }

    #[test]
    fn variance_of_two_actions() {
        assert_eq!(action_variance(&[vec![1.0], vec![3.0]]), 1.0);
        assert_eq!(action_variance(&[vec![2.0, 5.0], vec![2.0, 5.0]]), 0.0);
    }
}
