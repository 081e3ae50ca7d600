//! Coupled-oscillator ground truth against independent oracles.

use aanet_core::systems::{
    build_coupling_matrix, closed_form_state, generate_trajectory, solve_modes, total_energy, OscillatorConfig, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(masses: Vec<f64>, k_wall: f64, k_pair: f64) -> OscillatorConfig {
    OscillatorConfig {
        n: masses.len(),
        masses,
        k_wall,
        k_pair,
        ..OscillatorConfig::default()
    }
}

/// Determinant by cofactor expansion along the first row.
fn det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|j| {
            let minor: Vec<Vec<f64>> = m[1..]
                .iter()
                .map(|row| row.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &v)| v).collect())
                .collect();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[0][j] * det(&minor)
        })
        .sum()
}

/// Roots `s = ω²` of `det(M + s·I)`, by scanning for sign changes and bisecting.
fn char_poly_roots(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let p = |s: f64| {
        let shifted: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| m[i][j] + if i == j { s } else { 0.0 }).collect())
            .collect();
        det(&shifted)
    };
    // Gershgorin bound on the spectrum of −M.
    let hi = (0..n).map(|i| m[i].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let steps = 200_000;
    let mut roots = Vec::new();
    let mut prev = p(0.0);
    for k in 1..=steps {
        let s = hi * k as f64 / steps as f64;
        let cur = p(s);
        if prev == 0.0 || prev.signum() != cur.signum() {
            let (mut a, mut b) = (hi * (k - 1) as f64 / steps as f64, s);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if p(a).signum() == p(mid).signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev = cur;
    }
    roots
}

#[test]
fn default_two_oscillators_have_unit_and_root_two_frequencies() {
    let modes = solve_modes(&OscillatorConfig::default()).unwrap();
    assert!((modes.omegas[0] - 1.0).abs() < 1e-9);
    assert!((modes.omegas[1] - 2.0f64.sqrt()).abs() < 1e-9);
}

#[test]
fn frequencies_match_characteristic_polynomial_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..30 {
        let n = 1 + trial % 3;
        let masses = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let cfg = config(masses, rng.random_range(0.5..2.0), rng.random_range(0.1..1.0));
        let modes = solve_modes(&cfg).unwrap();
        let roots = char_poly_roots(&build_coupling_matrix(&cfg));
        assert_eq!(roots.len(), n, "{cfg:?}");
        for (w, s) in modes.omegas.iter().zip(&roots) {
            assert!((w - s.sqrt()).abs() < 1e-9, "{w} vs {}", s.sqrt());
        }
    }
}

#[test]
fn modes_satisfy_eigen_relation_and_mass_orthonormality() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 1..=6 {
        let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        let cfg = config(masses.clone(), 1.3, 0.4);
        let modes = solve_modes(&cfg).unwrap();
        assert!(modes.residual(&cfg) < 1e-10);
        assert!(modes.omegas.windows(2).all(|w| w[0] <= w[1]));
        for r in 0..n {
            for s in 0..n {
                let dot: f64 = (0..n).map(|i| masses[i] * modes.vectors[r][i] * modes.vectors[s][i]).sum();
                let expected = if r == s { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn energy_is_conserved_along_generated_trajectories() {
    for (seed, cfg) in [
        (0, OscillatorConfig::default()),
        (3, config(vec![1.0, 2.0, 0.7], 1.5, 0.3)),
        (5, config(vec![1.0; 5], 1.0, 0.8)),
    ] {
        let cfg = OscillatorConfig { seed, ..cfg };
        let traj = generate_trajectory(&cfg).unwrap();
        assert_eq!(traj.len(), 1000);
        let e0 = total_energy(&cfg, &traj.states[0]);
        let drift = traj
            .states
            .iter()
            .map(|s| (total_energy(&cfg, s) - e0).abs() / e0)
            .fold(0.0, f64::max);
        assert!(drift < 1e-8, "relative drift {drift:e}");
    }
}

#[test]
fn momenta_match_finite_difference_velocities() {
    let cfg = config(vec![1.0, 2.5, 0.8], 1.2, 0.6);
    let modes = solve_modes(&cfg).unwrap();
    let amps = [0.9, 1.1, 0.6];
    let phases = [0.3, 2.0, 4.4];
    let h = 1e-5;
    for k in 0..50 {
        let t = 0.37 * k as f64;
        let s = closed_form_state(&modes, &amps, &phases, &cfg.masses, t);
        let plus = closed_form_state(&modes, &amps, &phases, &cfg.masses, t + h);
        let minus = closed_form_state(&modes, &amps, &phases, &cfg.masses, t - h);
        for i in 0..3 {
            let qdot = (plus.q[i] - minus.q[i]) / (2.0 * h);
            assert!((qdot - s.p[i] / cfg.masses[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn trajectories_satisfy_the_equations_of_motion() {
    let cfg = OscillatorConfig {
        time_delta: 0.01,
        ..config(vec![1.0, 1.7, 0.6], 1.0, 0.5)
    };
    let traj = generate_trajectory(&cfg).unwrap();
    let h = cfg.time_delta;
    let n = cfg.n;
    let mut worst_resid: f64 = 0.0;
    let mut largest_rhs: f64 = 0.0;
    for k in 1..traj.len() - 1 {
        let (a, b, c) = (&traj.states[k - 1], &traj.states[k], &traj.states[k + 1]);
        for i in 0..n {
            let qdd = (c.q[i] - 2.0 * b.q[i] + a.q[i]) / (h * h);
            let coupling: f64 = (0..n).filter(|&j| j != i).map(|j| cfg.k_pair * (b.q[j] - b.q[i])).sum();
            let rhs = -cfg.k_wall * b.q[i] + coupling;
            worst_resid = worst_resid.max((cfg.masses[i] * qdd - rhs).abs());
            largest_rhs = largest_rhs.max(rhs.abs());
        }
    }
    assert!(worst_resid / largest_rhs < 1e-4, "relative residual {:e}", worst_resid / largest_rhs);
}

#[test]
fn weak_coupling_limit_is_independent_oscillators() {
    for k_pair in [0.0, 1e-13] {
        let cfg = config(vec![1.0, 2.0, 3.0], 1.5, k_pair);
        let traj = generate_trajectory(&cfg).unwrap();
        let s0 = &traj.states[0];
        for (t, s) in traj.times.iter().zip(&traj.states) {
            for i in 0..3 {
                let m = cfg.masses[i];
                let w = (cfg.k_wall / m).sqrt();
                let q = s0.q[i] * (w * t).cos() + s0.p[i] / (m * w) * (w * t).sin();
                assert!((s.q[i] - q).abs() < 1e-9, "k_p={k_pair} t={t}");
            }
        }
    }
}

#[test]
fn single_mode_is_periodic() {
    let cfg = config(vec![1.0, 1.0], 1.0, 0.5);
    let modes = solve_modes(&cfg).unwrap();
    for r in 0..2 {
        let mut amps = [0.0, 0.0];
        amps[r] = 1.2;
        let period = std::f64::consts::TAU / modes.omegas[r];
        for k in 0..20 {
            let t = 0.31 * k as f64;
            let a = closed_form_state(&modes, &amps, &[0.4, 1.1], &cfg.masses, t);
            let b = closed_form_state(&modes, &amps, &[0.4, 1.1], &cfg.masses, t + period);
            assert!(a.max_abs_diff(&b) < 1e-10);
        }
    }
}

#[test]
fn generation_is_deterministic_and_files_round_trip() {
    let cfg = OscillatorConfig {
        seed: 11,
        ..OscillatorConfig::default()
    };
    let a = generate_trajectory(&cfg).unwrap();
    let b = generate_trajectory(&cfg).unwrap();
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    a.save(&pa).unwrap();
    b.save(&pb).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_eq!(
        std::fs::read(Trajectory::sidecar_path(&pa)).unwrap(),
        std::fs::read(Trajectory::sidecar_path(&pb)).unwrap()
    );

    let loaded = Trajectory::load(&pa).unwrap();
    assert_eq!(loaded, a);

    let other = generate_trajectory(&OscillatorConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(other.states, a.states);
}

#[test]
fn loading_without_sidecar_or_with_bad_rows_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let traj = generate_trajectory(&OscillatorConfig {
        num_steps: 10,
        ..OscillatorConfig::default()
    })
    .unwrap();
    traj.save(&path).unwrap();

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("0.1,", "0.1,x", 1)).unwrap();
    assert!(Trajectory::load(&path).is_err());

    std::fs::remove_file(Trajectory::sidecar_path(&path)).unwrap();
    assert!(Trajectory::load(&path).is_err());
}
