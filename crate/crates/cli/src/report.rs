//! CSV tables, run manifests and the figures built from them.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::process::Command;

use aanet_core::eval::{
    BenchRow, DtErrorRow, FrequencyReport, SamplesErrorRow, BENCH_HEADER, DT_ERROR_HEADER, SAMPLES_ERROR_HEADER,
};
use aanet_core::plot::{write_svg, PlotSpec, Series};
use anyhow::{bail, Context, Result};
use serde::Serialize;

pub const DT_ERROR_CSV: &str = "error_vs_dt.csv";
pub const SAMPLES_ERROR_CSV: &str = "error_vs_samples.csv";
pub const BENCH_CSV: &str = "timing.csv";
pub const FREQ_SAMPLES_CSV: &str = "freq_samples.csv";
pub const FREQ_KDE_CSV: &str = "freq_kde.csv";
pub const FREQ_SUMMARY_JSON: &str = "freq_summary.json";

fn write_csv<R>(path: &Path, header: &str, rows: &[R], line: impl Fn(&R) -> String) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(&line(r));
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_dt_errors(path: &Path, rows: &[DtErrorRow]) -> Result<()> {
    write_csv(path, DT_ERROR_HEADER, rows, |r| format!("{},{},{},{}", r.model, r.dt, r.mse, r.pairs))
}

pub fn write_samples_errors(path: &Path, rows: &[SamplesErrorRow]) -> Result<()> {
    write_csv(path, SAMPLES_ERROR_HEADER, rows, |r| format!("{},{},{},{}", r.model, r.samples, r.dt, r.mse))
}

pub fn write_bench(path: &Path, rows: &[BenchRow]) -> Result<()> {
    write_csv(path, BENCH_HEADER, rows, |r| {
        format!("{},{},{},{},{},{}", r.model, r.dt, r.median_s, r.iqr_s, r.field_calls, r.repeats)
    })
}

#[derive(Serialize)]
struct FreqSummary<'a> {
    learned: &'a [f64],
    truth: &'a [f64],
    relative_errors: &'a [f64],
    bandwidths: Vec<f64>,
}

pub fn write_frequencies(dir: &Path, report: &FrequencyReport) -> Result<()> {
    let n = report.learned.len();
    let header = std::iter::once("index".to_string())
        .chain((1..=n).map(|k| format!("theta_dot_{k}")))
        .collect::<Vec<_>>()
        .join(",");
    let indexed: Vec<(usize, &Vec<f64>)> = report.samples.iter().enumerate().collect();
    write_csv(&dir.join(FREQ_SAMPLES_CSV), &header, &indexed, |(i, r)| format!("{i},{}", join(r)))?;

    let kde_rows: Vec<(usize, f64, f64)> = report
        .kdes
        .iter()
        .enumerate()
        .flat_map(|(k, d)| d.grid.iter().zip(&d.density).map(move |(&x, &y)| (k + 1, x, y)))
        .collect();
    write_csv(&dir.join(FREQ_KDE_CSV), "component,theta_dot,density", &kde_rows, |(k, x, y)| {
        format!("{k},{x},{y}")
    })?;

    let summary = FreqSummary {
        learned: &report.learned,
        truth: &report.truth,
        relative_errors: &report.relative_errors,
        bandwidths: report.kdes.iter().map(|k| k.bandwidth).collect(),
    };
    fs::write(dir.join(FREQ_SUMMARY_JSON), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn git_revision() -> String {
    Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    seed: u64,
    git_revision: String,
    wall_time_s: f64,
    version: &'a str,
}

pub fn write_manifest<C: Serialize>(dir: &Path, command: &str, config: &C, seed: u64, wall_time_s: f64) -> Result<()> {
    let manifest = Manifest {
        command,
        config,
        seed,
        git_revision: git_revision(),
        wall_time_s,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Reads a CSV with a header, returning the header and the rows split on commas.
fn read_csv(path: &Path) -> Result<Option<(Vec<String>, Vec<Vec<String>>)>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        bail!("{} is empty", path.display());
    };
    let header = header.split(',').map(str::to_string).collect::<Vec<_>>();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>()).collect::<Vec<_>>();
    if rows.iter().any(|r| r.len() != header.len()) {
        bail!("{} has ragged rows", path.display());
    }
    Ok(Some((header, rows)))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .with_context(|| format!("{} has no `{name}` column", path.display()))
}

fn num(s: &str) -> Result<f64> {
    s.trim().parse().with_context(|| format!("bad number `{s}`"))
}

/// Groups `(key, x, y)` triples into one series per key, in first-seen order.
fn group(rows: impl Iterator<Item = Result<(String, f64, f64)>>) -> Result<Vec<Series>> {
    let mut out: Vec<Series> = Vec::new();
    for r in rows {
        let (key, x, y) = r?;
        match out.iter_mut().find(|s| s.label == key) {
            Some(s) => s.points.push((x, y)),
            None => out.push(Series::new(key, vec![(x, y)])),
        }
    }
    Ok(out)
}

/// Writes every figure whose source table exists in `run`; returns the files.
pub fn render_figures(run: &Path, out: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();

    let path = run.join(SAMPLES_ERROR_CSV);
    if let Some((h, rows)) = read_csv(&path)? {
        let (m, s, d, e) = (
            column(&h, "model", &path)?,
            column(&h, "samples", &path)?,
            column(&h, "dt", &path)?,
            column(&h, "mse", &path)?,
        );
        let series = group(rows.iter().map(|r| Ok((format!("{} Δt={}", r[m], r[d]), num(&r[s])?, num(&r[e])?))))?;
        let spec = PlotSpec {
            title: "Test error vs training samples".into(),
            x_label: "training samples".into(),
            y_label: "test MSE".into(),
            log_x: true,
            log_y: true,
        };
        write_svg(&out.join("fig2_error_vs_samples.svg"), &spec, &series)?;
        written.push("fig2_error_vs_samples.svg".to_string());
    }

    let path = run.join(BENCH_CSV);
    if let Some((h, rows)) = read_csv(&path)? {
        let (m, d, t) = (column(&h, "model", &path)?, column(&h, "dt", &path)?, column(&h, "median_s", &path)?);
        let series = group(rows.iter().map(|r| Ok((r[m].clone(), num(&r[d])?, num(&r[t])?))))?;
        let spec = PlotSpec {
            title: "Inference time vs jump".into(),
            x_label: "Δt".into(),
            y_label: "median time per prediction (s)".into(),
            log_x: true,
            log_y: true,
        };
        write_svg(&out.join("fig3a_time.svg"), &spec, &series)?;
        written.push("fig3a_time.svg".to_string());
    }

    let path = run.join(DT_ERROR_CSV);
    if let Some((h, rows)) = read_csv(&path)? {
        let (m, d, e) = (column(&h, "model", &path)?, column(&h, "dt", &path)?, column(&h, "mse", &path)?);
        let series = group(rows.iter().map(|r| Ok((r[m].clone(), num(&r[d])?, num(&r[e])?))))?;
        let spec = PlotSpec {
            title: "Test error vs jump".into(),
            x_label: "Δt".into(),
            y_label: "test MSE".into(),
            log_x: false,
            log_y: true,
        };
        write_svg(&out.join("fig3b_error_vs_dt.svg"), &spec, &series)?;
        written.push("fig3b_error_vs_dt.svg".to_string());
    }

    let path = run.join(FREQ_KDE_CSV);
    if let Some((h, rows)) = read_csv(&path)? {
        let (c, x, y) = (
            column(&h, "component", &path)?,
            column(&h, "theta_dot", &path)?,
            column(&h, "density", &path)?,
        );
        let mut series = group(rows.iter().map(|r| Ok((format!("θ̇_{}", r[c]), num(&r[x])?, num(&r[y])?))))?;
        let peak = series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .fold(0.0f64, f64::max);
        let summary_path = run.join(FREQ_SUMMARY_JSON);
        if summary_path.exists() {
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary_path)?)?;
            let truth = v["truth"].as_array().cloned().unwrap_or_default();
            for (i, w) in truth.iter().filter_map(|w| w.as_f64()).enumerate() {
                series.push(Series::new(format!("true ω_{}", i + 1), vec![(w, 0.0), (w, peak)]).dashed());
            }
        }
        let spec = PlotSpec {
            title: "Learned angular frequencies".into(),
            x_label: "θ̇".into(),
            y_label: "density".into(),
            log_x: false,
            log_y: false,
        };
        write_svg(&out.join("fig4_freqs.svg"), &spec, &series)?;
        written.push("fig4_freqs.svg".to_string());
    }

    if written.is_empty() {
        bail!("no result tables found in {}", run.display());
    }
    Ok(written)
}
