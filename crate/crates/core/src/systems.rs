//! Coupled harmonic oscillators with a closed-form normal-mode solution.
//!
//! `n` masses, each tied to a wall by a spring `k_w` and to every other mass
//! by a spring `k_p`:
//!
//! ```text
//! m_i q̈_i = −k_w q_i + Σ_{j≠i} k_p (q_j − q_i)
//! ```
//!
//! Every solution is a superposition of normal modes
//! `q(t) = Σ_r A_r c_r cos(ω_r t + φ_r)`, so trajectories are exact samples
//! with no integrator drift.

use std::f64::consts::TAU;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::PhaseState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillatorConfig {
    pub n: usize,
    pub masses: Vec<f64>,
    pub k_wall: f64,
    pub k_pair: f64,
    pub time_delta: f64,
    pub num_steps: usize,
    /// Mode amplitudes are drawn from `[lo, hi)`.
    pub amplitude_range: (f64, f64),
    /// Mode phases are drawn from `[lo, hi)`.
    pub phase_range: (f64, f64),
    pub seed: u64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            n: 2,
            masses: vec![1.0, 1.0],
            k_wall: 1.0,
            k_pair: 0.5,
            time_delta: 0.1,
            num_steps: 1000,
            amplitude_range: (0.5, 1.5),
            phase_range: (0.0, TAU),
            seed: 0,
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.masses.len() != self.n {
            return bad(format!("{} masses given for n = {}", self.masses.len(), self.n));
        }
        if self.masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return bad("masses must be positive and finite".into());
        }
        if !(self.k_wall > 0.0 && self.k_wall.is_finite()) {
            return bad("k_wall must be positive".into());
        }
        if !(self.k_pair >= 0.0 && self.k_pair.is_finite()) {
            return bad("k_pair must be non-negative".into());
        }
        if !(self.time_delta > 0.0 && self.time_delta.is_finite()) {
            return bad("time_delta must be positive".into());
        }
        if self.num_steps < 2 {
            return bad("num_steps must be at least 2".into());
        }
        let (alo, ahi) = self.amplitude_range;
        let (plo, phi) = self.phase_range;
        if !(alo <= ahi && plo <= phi) || ![alo, ahi, plo, phi].iter().all(|x| x.is_finite()) {
            return bad("sampling ranges must be finite with lo <= hi".into());
        }
        Ok(())
    }
}

/// `M_ii = −(k_w + (n−1)k_p)/m_i`, `M_ij = k_p/m_i`.
pub fn build_coupling_matrix(cfg: &OscillatorConfig) -> Vec<Vec<f64>> {
    let n = cfg.n;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        -(cfg.k_wall + (n as f64 - 1.0) * cfg.k_pair) / cfg.masses[i]
                    } else {
                        cfg.k_pair / cfg.masses[i]
                    }
                })
                .collect()
        })
        .collect()
}

/// Stiffness matrix `K` with `m q̈ = −K q`.
pub fn stiffness_matrix(cfg: &OscillatorConfig) -> Vec<Vec<f64>> {
    let n = cfg.n;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        cfg.k_wall + (n as f64 - 1.0) * cfg.k_pair
                    } else {
                        -cfg.k_pair
                    }
                })
                .collect()
        })
        .collect()
}

pub const JACOBI_TOLERANCE: f64 = 1e-14;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues (unsorted) and eigenvectors as columns:
/// `vectors[i][k]` is component `i` of eigenvector `k`.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::Config("jacobi_eigen needs a square matrix".into()));
    }
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let scale = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let off_norm = |a: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off < JACOBI_TOLERANCE * scale {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNotConverged { sweeps, off_norm: off });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok(((0..n).map(|i| a[i][i]).collect(), v))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalModes {
    /// Ascending angular frequencies.
    pub omegas: Vec<f64>,
    /// `vectors[r]` is mode shape `c_r`, normalized so `c_rᵀ diag(m) c_r = 1`.
    pub vectors: Vec<Vec<f64>>,
}

impl NormalModes {
    /// `max_r ‖(M + ω_r² I) c_r‖∞`.
    pub fn residual(&self, cfg: &OscillatorConfig) -> f64 {
        let m = build_coupling_matrix(cfg);
        let mut worst: f64 = 0.0;
        for (w, c) in self.omegas.iter().zip(&self.vectors) {
            for (i, row) in m.iter().enumerate() {
                let mc: f64 = row.iter().zip(c).map(|(a, b)| a * b).sum();
                worst = worst.max((mc + w * w * c[i]).abs());
            }
        }
        worst
    }
}

/// Normal modes via the mass-symmetrized problem
/// `m^{-1/2} K m^{-1/2} v = ω² v`, `c = m^{-1/2} v`.
pub fn solve_modes(cfg: &OscillatorConfig) -> Result<NormalModes> {
    cfg.validate()?;
    let n = cfg.n;
    let k = stiffness_matrix(cfg);
    let inv_sqrt_m: Vec<f64> = cfg.masses.iter().map(|m| 1.0 / m.sqrt()).collect();
    let sym: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| inv_sqrt_m[i] * k[i][j] * inv_sqrt_m[j]).collect())
        .collect();
    let (vals, vecs) = jacobi_eigen(&sym)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));

    let mut omegas = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for r in order {
        if vals[r] <= 0.0 {
            return Err(Error::Config(format!("non-positive mode eigenvalue {}", vals[r])));
        }
        omegas.push(vals[r].sqrt());
        let mut c: Vec<f64> = (0..n).map(|i| inv_sqrt_m[i] * vecs[i][r]).collect();
        // Fix the sign so the largest component is positive.
        let lead = c.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.push(c);
    }
    Ok(NormalModes { omegas, vectors })
}

pub fn closed_form_state(
    modes: &NormalModes,
    amplitudes: &[f64],
    phases: &[f64],
    masses: &[f64],
    t: f64,
) -> PhaseState {
    let n = masses.len();
    let mut q = vec![0.0; n];
    let mut v = vec![0.0; n];
    for (r, (&w, c)) in modes.omegas.iter().zip(&modes.vectors).enumerate() {
        let arg = w * t + phases[r];
        let (s, co) = arg.sin_cos();
        for i in 0..n {
            q[i] += amplitudes[r] * c[i] * co;
            v[i] -= amplitudes[r] * c[i] * w * s;
        }
    }
    let p = v.iter().zip(masses).map(|(v, m)| m * v).collect();
    PhaseState { q, p }
}

/// Kinetic plus spring potential energy.
pub fn total_energy(cfg: &OscillatorConfig, state: &PhaseState) -> f64 {
    let kinetic: f64 = state
        .p
        .iter()
        .zip(&cfg.masses)
        .map(|(p, m)| p * p / (2.0 * m))
        .sum();
    let wall: f64 = state.q.iter().map(|q| 0.5 * cfg.k_wall * q * q).sum();
    let mut pair = 0.0;
    for i in 0..state.q.len() {
        for j in i + 1..state.q.len() {
            let d = state.q[i] - state.q[j];
            pair += 0.5 * cfg.k_pair * d * d;
        }
    }
    kinetic + wall + pair
}

/// Everything needed to reproduce a trajectory; written as the sidecar JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub config: OscillatorConfig,
    pub seed: u64,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub omegas: Vec<f64>,
    pub mode_vectors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub meta: TrajectoryMeta,
}

pub fn generate_trajectory(cfg: &OscillatorConfig) -> Result<Trajectory> {
    let modes = solve_modes(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..hi) } else { lo };
    let amplitudes: Vec<f64> = (0..cfg.n).map(|_| draw(&mut rng, cfg.amplitude_range)).collect();
    let phases: Vec<f64> = (0..cfg.n).map(|_| draw(&mut rng, cfg.phase_range)).collect();

    let times: Vec<f64> = (0..cfg.num_steps).map(|k| k as f64 * cfg.time_delta).collect();
    let states = times
        .iter()
        .map(|&t| closed_form_state(&modes, &amplitudes, &phases, &cfg.masses, t))
        .collect();
    Ok(Trajectory {
        times,
        states,
        meta: TrajectoryMeta {
            config: cfg.clone(),
            seed: cfg.seed,
            amplitudes,
            phases,
            omegas: modes.omegas,
            mode_vectors: modes.vectors,
        },
    })
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn n(&self) -> usize {
        self.meta.config.n
    }

    pub fn time_delta(&self) -> f64 {
        self.meta.config.time_delta
    }

    /// Sidecar path next to a trajectory CSV: `traj.csv` → `traj.json`.
    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes `t,q_1..q_n,p_1..p_n` rows plus the sidecar JSON.
    pub fn save(&self, csv: &Path) -> Result<()> {
        let n = self.n();
        let mut out = BufWriter::new(fs::File::create(csv)?);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q_{i}")));
        header.extend((1..=n).map(|i| format!("p_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(t)
                .chain(&s.q)
                .chain(&s.p)
                .map(|x| x.to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        fs::write(Self::sidecar_path(csv), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        Ok(())
    }

    pub fn load(csv: &Path) -> Result<Self> {
        let meta_path = Self::sidecar_path(csv);
        let meta: TrajectoryMeta = serde_json::from_str(&fs::read_to_string(&meta_path).map_err(|e| {
            Error::Trajectory(format!("cannot read sidecar {}: {e}", meta_path.display()))
        })?)?;
        let n = meta.config.n;
        let reader = BufReader::new(fs::File::open(csv)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Trajectory("empty file".into()))??;
        if header.split(',').count() != 1 + 2 * n {
            return Err(Error::Trajectory(format!(
                "header has {} columns, expected {}",
                header.split(',').count(),
                1 + 2 * n
            )));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Trajectory(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 1 + 2 * n {
                return Err(Error::Trajectory(format!("line {} has {} columns", lineno + 2, vals.len())));
            }
            times.push(vals[0]);
            states.push(PhaseState::from_slice(&vals[1..])?);
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Trajectory("times must be strictly increasing".into()));
        }
        Ok(Self { times, states, meta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, masses: Vec<f64>, k_wall: f64, k_pair: f64) -> OscillatorConfig {
        OscillatorConfig {
            n,
            masses,
            k_wall,
            k_pair,
            ..Default::default()
        }
    }

    #[test]
    fn coupling_matrix_examples() {
        assert_eq!(build_coupling_matrix(&cfg(1, vec![1.0], 4.0, 7.0)), vec![vec![-4.0]]);
        assert_eq!(
            build_coupling_matrix(&cfg(2, vec![1.0, 1.0], 1.0, 0.5)),
            vec![vec![-1.5, 0.5], vec![0.5, -1.5]]
        );
        let m = build_coupling_matrix(&cfg(3, vec![2.0; 3], 2.0, 1.0));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[i][j], if i == j { -2.0 } else { 0.5 });
            }
        }
    }

    #[test]
    fn single_oscillator_frequency() {
        let modes = solve_modes(&cfg(1, vec![1.0], 4.0, 0.0)).unwrap();
        assert_eq!(modes.omegas, vec![2.0]);
    }

    #[test]
    fn uncoupled_modes_are_degenerate() {
        let c = cfg(3, vec![2.0; 3], 8.0, 0.0);
        let modes = solve_modes(&c).unwrap();
        for w in &modes.omegas {
            assert!((w - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unequal_masses_satisfy_eigen_relation() {
        let c = cfg(4, vec![1.0, 2.5, 0.7, 3.0], 1.3, 0.4);
        let modes = solve_modes(&c).unwrap();
        assert!(modes.residual(&c) < 1e-10);
        assert!(modes.omegas.windows(2).all(|w| w[0] <= w[1]));
        // Mass-weighted orthonormality.
        for r in 0..4 {
            for s in 0..4 {
                let dot: f64 = (0..4).map(|i| modes.vectors[r][i] * c.masses[i] * modes.vectors[s][i]).sum();
                assert!((dot - if r == s { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_reports_non_square() {
        assert!(jacobi_eigen(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn rest_state_energy_and_spring() {
        let c = cfg(1, vec![1.0], 4.0, 0.0);
        assert_eq!(total_energy(&c, &PhaseState::zeros(1)), 0.0);
        assert_eq!(total_energy(&c, &PhaseState::new(vec![1.0], vec![0.0]).unwrap()), 2.0);
    }

    #[test]
    fn closed_form_at_zero_phase() {
        let c = OscillatorConfig::default();
        let modes = solve_modes(&c).unwrap();
        let amps = [0.7, 1.2];
        let s = closed_form_state(&modes, &amps, &[0.0, 0.0], &c.masses, 0.0);
        for i in 0..2 {
            let expect = amps[0] * modes.vectors[0][i] + amps[1] * modes.vectors[1][i];
            assert!((s.q[i] - expect).abs() < 1e-15);
            assert_eq!(s.p[i], 0.0);
        }
    }

    #[test]
    fn validation_catches_bad_configs() {
        assert!(cfg(2, vec![1.0], 1.0, 0.0).validate().is_err());
        assert!(cfg(1, vec![-1.0], 1.0, 0.0).validate().is_err());
        assert!(cfg(1, vec![1.0], 0.0, 0.0).validate().is_err());
        assert!(cfg(1, vec![1.0], 1.0, -0.1).validate().is_err());
        let mut c = OscillatorConfig::default();
        c.num_steps = 1;
        assert!(c.validate().is_err());
    }
}
