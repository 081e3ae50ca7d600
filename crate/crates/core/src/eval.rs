//! Evaluation harness: error against training-set size and jump length,
//! inference timing, and recovered angular frequencies.
//!
//! Every metric here reads only the held-out tail of the trajectory.

use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelSpec;
use crate::error::{Error, Result};
use crate::model::{ActionAngleNetwork, Simulator};
use crate::phase::PhaseState;
use crate::systems::Trajectory;
use crate::training::{train, TrainConfig, TrainRecord};

/// Length of the held-out tail.
pub const TEST_LEN: usize = 500;
pub const BENCH_WARMUP: usize = 5;
pub const MIN_BENCH_REPEATS: usize = 30;

pub fn test_range(trajectory: &Trajectory) -> Result<Range<usize>> {
    let len = trajectory.len();
    if len < TEST_LEN {
        return Err(Error::Eval(format!("trajectory has {len} samples, need at least {TEST_LEN}")));
    }
    Ok(len - TEST_LEN..len)
}

/// Mean over coordinates of the population variance across the test range.
pub fn test_variance(trajectory: &Trajectory) -> Result<f64> {
    let states = &trajectory.states[test_range(trajectory)?];
    let rows: Vec<Vec<f64>> = states.iter().map(PhaseState::to_vec).collect();
    let dim = rows[0].len();
    let count = rows.len() as f64;
    let total: f64 = (0..dim)
        .map(|c| {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / count;
            rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / count
        })
        .sum();
    Ok(total / dim as f64)
}

/// Sample offset for a jump `dt`, which must be a multiple of the sampling step.
pub fn dt_offset(dt: f64, time_delta: f64) -> Result<usize> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::Eval(format!("jump {dt} must be finite and non-negative")));
    }
    let k = (dt / time_delta).round();
    if (k * time_delta - dt).abs() > 1e-9 * dt.max(1.0) {
        return Err(Error::Eval(format!("jump {dt} is not a multiple of the sampling step {time_delta}")));
    }
    Ok(k as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtErrorRow {
    pub model: String,
    pub dt: f64,
    pub mse: f64,
    pub pairs: usize,
}

pub const DT_ERROR_HEADER: &str = "model,dt,mse,pairs";

/// Test MSE of one model at one jump, averaged over pairs and coordinates.
pub fn test_mse(model: &dyn Simulator, trajectory: &Trajectory, dt: f64) -> Result<(f64, usize)> {
    let range = test_range(trajectory)?;
    let k = dt_offset(dt, trajectory.time_delta())?;
    if k >= range.len() {
        return Err(Error::Eval(format!(
            "jump {dt} leaves no valid pairs in a test range of {} samples",
            range.len()
        )));
    }
    let inputs = &trajectory.states[range.start..range.end - k];
    let targets = &trajectory.states[range.start + k..range.end];
    let preds = model.predict_batch(inputs, dt)?;
    let sq: f64 = preds.iter().zip(targets).map(|(a, b)| a.squared_distance(b)).sum();
    let pairs = inputs.len();
    Ok((sq / (pairs * 2 * model.n()) as f64, pairs))
}

pub fn eval_error_vs_dt(models: &[(String, &dyn Simulator)], trajectory: &Trajectory, dt_grid: &[f64]) -> Result<Vec<DtErrorRow>> {
    check_grid(dt_grid)?;
    let mut rows = Vec::new();
    for (name, model) in models {
        for &dt in dt_grid {
            let (mse, pairs) = test_mse(*model, trajectory, dt)?;
            rows.push(DtErrorRow {
                model: name.clone(),
                dt,
                mse,
                pairs,
            });
        }
    }
    Ok(rows)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Eval("empty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Eval(format!("grid {grid:?} is not strictly increasing")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplesErrorRow {
    pub model: String,
    pub samples: usize,
    pub dt: f64,
    pub mse: f64,
}

pub const SAMPLES_ERROR_HEADER: &str = "model,samples,dt,mse";

/// Retrains from scratch on the first `s` samples for each grid value.
///
/// `on_run` sees each finished run's training records.
pub fn eval_error_vs_samples(
    spec: &ModelSpec,
    trajectory: &Trajectory,
    samples_grid: &[usize],
    dt_set: &[f64],
    cfg: &TrainConfig,
    init_seed: u64,
    mut on_run: impl FnMut(usize, &[TrainRecord]),
) -> Result<Vec<SamplesErrorRow>> {
    if samples_grid.is_empty() {
        return Err(Error::Eval("empty samples grid".into()));
    }
    if let Some(&s) = samples_grid.iter().find(|&&s| s > cfg.split || s < 2) {
        return Err(Error::Eval(format!("sample count {s} must lie in 2..={}", cfg.split)));
    }
    check_grid(dt_set)?;
    let mut rows = Vec::new();
    for &s in samples_grid {
        let mut model = spec.init_seeded(init_seed)?;
        let run_cfg = TrainConfig { split: s, ..cfg.clone() };
        let records = train(&mut model, trajectory, &run_cfg)?;
        on_run(s, &records);
        for &dt in dt_set {
            let (mse, _) = test_mse(&model, trajectory, dt)?;
            rows.push(SamplesErrorRow {
                model: spec.kind().to_string(),
                samples: s,
                dt,
                mse,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    pub dt: f64,
    pub median_s: f64,
    pub iqr_s: f64,
    pub field_calls: usize,
    pub repeats: usize,
}

pub const BENCH_HEADER: &str = "model,dt,median_s,iqr_s,field_calls,repeats";

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times single-state predictions after a warmup; also counts field calls
/// for one prediction.
pub fn bench_inference(
    models: &[(String, &dyn Simulator)],
    state: &PhaseState,
    dt_grid: &[f64],
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    if repeats < MIN_BENCH_REPEATS {
        return Err(Error::Eval(format!("need at least {MIN_BENCH_REPEATS} repeats, got {repeats}")));
    }
    check_grid(dt_grid)?;
    let mut rows = Vec::new();
    for (name, model) in models {
        for &dt in dt_grid {
            for _ in 0..BENCH_WARMUP {
                std::hint::black_box(model.predict(state, dt)?);
            }
            let before = model.field_calls();
            model.predict(state, dt)?;
            let field_calls = model.field_calls() - before;

            let mut times = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let t = Instant::now();
                std::hint::black_box(model.predict(std::hint::black_box(state), dt)?);
                times.push(t.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                model: name.clone(),
                dt,
                median_s: quantile(&times, 0.5),
                iqr_s: quantile(&times, 0.75) - quantile(&times, 0.25),
                field_calls,
                repeats,
            });
        }
    }
    Ok(rows)
}

/// Gaussian kernel density estimate on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Silverman's rule of thumb, `0.9·min(σ, IQR/1.34)·N^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

pub fn kde(samples: &[f64]) -> Result<Kde> {
    if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Eval("density estimate needs finite samples".into()));
    }
    let mut h = silverman_bandwidth(samples);
    if !(h > 0.0) {
        // Degenerate sample set; keep a narrow but resolvable kernel.
        let scale = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        h = 1e-3 * scale.max(1.0);
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * h;
    let points = (((hi - lo) / (h / 10.0)).ceil() as usize + 1).clamp(512, 20_001);
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..points).map(|i| lo + i as f64 * step).collect();
    let density = grid
        .iter()
        .map(|&x| norm * samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>())
        .collect();
    Ok(Kde { bandwidth: h, grid, density })
}

/// Trapezoid integral of a density over its grid.
pub fn kde_integral(k: &Kde) -> f64 {
    k.grid
        .windows(2)
        .zip(k.density.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    /// `samples[i][k]` is component `k` of `θ̇` at test state `i`.
    pub samples: Vec<Vec<f64>>,
    pub kdes: Vec<Kde>,
    /// Mean `|θ̇|` per component, ascending.
    pub learned: Vec<f64>,
    /// True mode frequencies, ascending.
    pub truth: Vec<f64>,
    pub relative_errors: Vec<f64>,
}

pub const FREQ_SAMPLES_HEADER_PREFIX: &str = "index";

/// Angular velocities over the test range, matched to the true mode
/// frequencies by sorting both.
pub fn extract_frequencies(net: &ActionAngleNetwork, trajectory: &Trajectory) -> Result<FrequencyReport> {
    let range = test_range(trajectory)?;
    let n = net.n();
    let samples = trajectory.states[range]
        .iter()
        .map(|s| {
            let a = net.encode(s)?;
            net.angular_velocity(&a.actions)
        })
        .collect::<Result<Vec<_>>>()?;
    let count = samples.len() as f64;
    let mut learned: Vec<f64> = (0..n).map(|k| samples.iter().map(|r| r[k].abs()).sum::<f64>() / count).collect();
    learned.sort_by(f64::total_cmp);
    let mut truth = trajectory.meta.omegas.clone();
    truth.sort_by(f64::total_cmp);
    if truth.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: truth.len(),
        });
    }
    let relative_errors = learned.iter().zip(&truth).map(|(l, t)| (l - t).abs() / t.abs()).collect();
    let kdes = (0..n)
        .map(|k| kde(&samples.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrequencyReport {
        samples,
        kdes,
        learned,
        truth,
        relative_errors,
    })
}
