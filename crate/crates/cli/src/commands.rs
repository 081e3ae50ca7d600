use std::path::{Path, PathBuf};
use std::time::Instant;

use aanet_core::checkpoint::{self, AnyModel, ModelSpec};
use aanet_core::eval::{bench_inference, eval_error_vs_dt, eval_error_vs_samples, extract_frequencies, test_range, test_variance};
use aanet_core::systems::{generate_trajectory, Trajectory};
use aanet_core::training::{train_with_progress, write_train_log};
use aanet_core::{ModelKind, Simulator};
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::{out_dir, ExperimentConfig};
use crate::report;
use crate::{Command, Common, TrainOverrides};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate {
            common,
            seed,
            n,
            num_steps,
            time_delta,
            k_wall,
            k_pair,
            masses,
        } => {
            let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
            let sys = &mut cfg.system;
            if let Some(n) = n {
                if masses.is_none() && sys.masses.len() != n {
                    sys.masses = vec![1.0; n];
                }
                sys.n = n;
            }
            if let Some(m) = masses {
                sys.masses = m;
            }
            set(&mut sys.seed, seed);
            set(&mut sys.num_steps, num_steps);
            set(&mut sys.time_delta, time_delta);
            set(&mut sys.k_wall, k_wall);
            set(&mut sys.k_pair, k_pair);
            generate(&common, &cfg)
        }
        Command::Train {
            common,
            model,
            data,
            describe,
            overrides,
        } => train(&common, model, data.as_deref(), describe, &overrides),
        Command::Evaluate {
            common,
            checkpoints,
            data,
            dt_grid,
            samples_grid,
            models,
            overrides,
        } => evaluate(&common, &checkpoints, &data, dt_grid, samples_grid, &models, &overrides),
        Command::Bench {
            common,
            checkpoints,
            data,
            dt_grid,
            repeats,
        } => bench(&common, &checkpoints, &data, dt_grid, repeats),
        Command::Freqs { common, checkpoint, data } => freqs(&common, &checkpoint, &data),
        Command::Plot { run, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            std::fs::create_dir_all(&out)?;
            for f in report::render_figures(&run, &out)? {
                println!("{}", out.join(f).display());
            }
            Ok(())
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn finish(dir: &Path, command: &str, cfg: &ExperimentConfig, seed: u64, started: Instant) -> Result<()> {
    report::write_json(&dir.join("config.json"), cfg)?;
    report::write_manifest(dir, command, cfg, seed, started.elapsed().as_secs_f64())
}

fn generate(common: &Common, cfg: &ExperimentConfig) -> Result<()> {
    let started = Instant::now();
    let traj = generate_trajectory(&cfg.system)?;
    let dir = out_dir(common.out.as_deref())?;
    let csv = dir.join("traj.csv");
    traj.save(&csv)?;
    finish(&dir, "generate", cfg, cfg.system.seed, started)?;
    println!(
        "wrote {} ({} samples, ω = {:?})",
        csv.display(),
        traj.len(),
        traj.meta.omegas
    );
    Ok(())
}

fn load_trajectory(path: &Path) -> Result<Trajectory> {
    Trajectory::load(path).with_context(|| format!("cannot load trajectory {}", path.display()))
}

/// Applies flag overrides to the training section and to `kind`'s architecture.
fn apply_overrides(cfg: &mut ExperimentConfig, kind: ModelKind, o: &TrainOverrides) {
    let t = &mut cfg.train;
    set(&mut t.max_steps, o.max_steps);
    set(&mut t.batch_size, o.batch_size);
    set(&mut t.learning_rate, o.learning_rate);
    set(&mut t.lambda, o.lambda);
    set(&mut t.dt_max, o.dt_max);
    set(&mut t.split, o.split);
    set(&mut t.seed, o.seed);
    match kind {
        ModelKind::ActionAngle => {
            let a = &mut cfg.action_angle;
            set(&mut a.flow_depth, o.flow_depth);
            set(&mut a.flow_width, o.flow_width);
            set(&mut a.head_hidden, o.hidden.clone());
        }
        ModelKind::EulerUpdate | ModelKind::NeuralOde => {
            let b = if kind == ModelKind::EulerUpdate {
                &mut cfg.euler_update
            } else {
                &mut cfg.neural_ode
            };
            if let Some(h) = &o.hidden {
                b.coder_hidden = h.clone();
                b.field_hidden = h.clone();
            }
        }
    }
}

fn with_n(spec: ModelSpec, n: usize) -> ModelSpec {
    match spec {
        ModelSpec::ActionAngle(mut c) => {
            c.n = n;
            ModelSpec::ActionAngle(c)
        }
        ModelSpec::EulerUpdate(mut c) => {
            c.n = n;
            ModelSpec::EulerUpdate(c)
        }
        ModelSpec::NeuralOde(mut c) => {
            c.n = n;
            ModelSpec::NeuralOde(c)
        }
    }
}

#[derive(Serialize)]
struct Description<'a> {
    model: ModelKind,
    param_count: usize,
    architecture: &'a ModelSpec,
}

fn train(common: &Common, kind: ModelKind, data: Option<&Path>, describe: bool, o: &TrainOverrides) -> Result<()> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    apply_overrides(&mut cfg, kind, o);
    if describe {
        let spec = cfg.spec(kind);
        let d = Description {
            model: kind,
            param_count: spec.param_count(),
            architecture: &spec,
        };
        println!("{}", serde_json::to_string(&d)?);
        return Ok(());
    }
    let Some(data) = data else {
        bail!("train needs --data (or --describe)");
    };
    let traj = load_trajectory(data)?;
    let spec = with_n(cfg.spec(kind), traj.n());
    cfg.set_spec(spec.clone());
    let mut model = spec.init_seeded(cfg.train.seed)?;
    let every = o.progress;
    let records = train_with_progress(&mut model, &traj, &cfg.train, |r| {
        if every > 0 && r.step % every == 0 {
            eprintln!(
                "step {} dt={} l_predict={:.4e} l_action={:.4e}",
                r.step, r.dt, r.l_predict, r.l_action
            );
        }
    })?;

    let dir = out_dir(common.out.as_deref())?;
    checkpoint::save(&model, &dir.join("checkpoint.json"))?;
    write_train_log(&dir.join("train_log.csv"), &records)?;
    finish(&dir, "train", &cfg, cfg.train.seed, started)?;
    let last = records.last().map(|r| r.l_total).unwrap_or(f64::NAN);
    println!(
        "trained {kind} ({} parameters, {} steps, final loss {last:.4e}) -> {}",
        model.param_count(),
        records.len(),
        dir.display()
    );
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<(String, AnyModel)>> {
    if paths.is_empty() {
        bail!("no checkpoints given");
    }
    let models = paths
        .iter()
        .map(|p| checkpoint::load(p).with_context(|| format!("cannot load checkpoint {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = models.iter().map(|m| m.kind().to_string()).collect();
    Ok(models
        .into_iter()
        .zip(paths)
        .enumerate()
        .map(|(i, (m, p))| {
            let clash = labels.iter().filter(|l| **l == labels[i]).count() > 1;
            let label = if clash {
                let stem = p.parent().and_then(|d| d.file_name()).or(p.file_stem());
                format!("{}:{}", labels[i], stem.map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            } else {
                labels[i].clone()
            };
            (label, m)
        })
        .collect())
}

fn as_dyn(models: &[(String, AnyModel)]) -> Vec<(String, &dyn Simulator)> {
    models.iter().map(|(l, m)| (l.clone(), m as &dyn Simulator)).collect()
}

fn evaluate(
    common: &Common,
    checkpoints: &[PathBuf],
    data: &Path,
    dt_grid: Option<Vec<f64>>,
    samples_grid: Option<Vec<usize>>,
    kinds: &[ModelKind],
    o: &TrainOverrides,
) -> Result<()> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    for &k in kinds {
        apply_overrides(&mut cfg, k, o);
    }
    set(&mut cfg.eval.dt_grid, dt_grid);
    let traj = load_trajectory(data)?;
    let dir = out_dir(common.out.as_deref())?;

    if !checkpoints.is_empty() {
        let models = load_models(checkpoints)?;
        let rows = eval_error_vs_dt(&as_dyn(&models), &traj, &cfg.eval.dt_grid)?;
        report::write_dt_errors(&dir.join(report::DT_ERROR_CSV), &rows)?;
        let var = test_variance(&traj)?;
        for r in &rows {
            println!("{} dt={} mse={:.4e} (mse/var={:.4e})", r.model, r.dt, r.mse, r.mse / var);
        }
    }

    if let Some(grid) = samples_grid {
        cfg.eval.samples_grid = grid;
        let mut rows = Vec::new();
        for &kind in kinds {
            let spec = with_n(cfg.spec(kind), traj.n());
            let part = eval_error_vs_samples(
                &spec,
                &traj,
                &cfg.eval.samples_grid,
                &cfg.eval.samples_dt,
                &cfg.train,
                cfg.train.seed,
                |s, records| {
                    let log = dir.join(format!("train_log_{kind}_{s}.csv"));
                    if let Err(e) = write_train_log(&log, records) {
                        eprintln!("aanet: warning: cannot write {}: {e}", log.display());
                    }
                },
            )?;
            rows.extend(part);
        }
        report::write_samples_errors(&dir.join(report::SAMPLES_ERROR_CSV), &rows)?;
        for r in &rows {
            println!("{} samples={} dt={} mse={:.4e}", r.model, r.samples, r.dt, r.mse);
        }
    } else if checkpoints.is_empty() {
        bail!("evaluate needs --checkpoints and/or --samples-grid");
    }
    finish(&dir, "evaluate", &cfg, cfg.train.seed, started)
}

fn bench(common: &Common, checkpoints: &[PathBuf], data: &Path, dt_grid: Option<Vec<f64>>, repeats: Option<usize>) -> Result<()> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    set(&mut cfg.eval.bench_dt_grid, dt_grid);
    set(&mut cfg.eval.repeats, repeats);
    let traj = load_trajectory(data)?;
    let state = traj.states[test_range(&traj)?.start].clone();
    let models = load_models(checkpoints)?;
    let rows = bench_inference(&as_dyn(&models), &state, &cfg.eval.bench_dt_grid, cfg.eval.repeats)?;
    let dir = out_dir(common.out.as_deref())?;
    report::write_bench(&dir.join(report::BENCH_CSV), &rows)?;
    for r in &rows {
        println!(
            "{} dt={} median={:.3e}s iqr={:.3e}s field_calls={}",
            r.model, r.dt, r.median_s, r.iqr_s, r.field_calls
        );
    }
    finish(&dir, "bench", &cfg, cfg.train.seed, started)
}

fn freqs(common: &Common, path: &Path, data: &Path) -> Result<()> {
    let started = Instant::now();
    let cfg = ExperimentConfig::load(common.config.as_deref())?;
    let model = checkpoint::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    let Some(net) = model.as_action_angle() else {
        bail!("freqs needs an action-angle checkpoint, {} holds {}", path.display(), model.kind());
    };
    let traj = load_trajectory(data)?;
    let report_data = extract_frequencies(net, &traj)?;
    let dir = out_dir(common.out.as_deref())?;
    report::write_frequencies(&dir, &report_data)?;
    for ((l, t), e) in report_data.learned.iter().zip(&report_data.truth).zip(&report_data.relative_errors) {
        println!("learned |θ̇|={l:.6} true ω={t:.6} relative error={e:.3e}");
    }
    finish(&dir, "freqs", &cfg, cfg.train.seed, started)
}
