//! Euler Update Network and Neural ODE against hand-computed oracles.

use aanet_core::autodiff::{Backend, Eager, Tensor};
use aanet_core::baselines::{rk4_step, rk4_substeps, LatentCoder, LatentDynamics, LatentModel};
use aanet_core::error::Error;
use aanet_core::model::{ModelKind, Simulator};
use aanet_core::nn::{Dense, Mlp};
use aanet_core::phase::PhaseState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(rows: usize, cols: usize, w: Vec<f64>, b: Vec<f64>) -> Dense {
    Dense {
        w: Tensor::matrix(rows, cols, w).unwrap(),
        b: Tensor::vector(b),
    }
}

fn random_mlp(sizes: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Mlp {
    let layers = sizes
        .windows(2)
        .map(|io| {
            let w = (0..io[0] * io[1]).map(|_| rng.random_range(-scale..scale)).collect();
            let b = (0..io[1]).map(|_| rng.random_range(-scale..scale)).collect();
            dense(io[1], io[0], w, b)
        })
        .collect();
    Mlp::from_layers(layers).unwrap()
}

fn zero_mlp(sizes: &[usize]) -> Mlp {
    let layers = sizes
        .windows(2)
        .map(|io| dense(io[1], io[0], vec![0.0; io[0] * io[1]], vec![0.0; io[1]]))
        .collect();
    Mlp::from_layers(layers).unwrap()
}

/// Field whose output is the bias of its last layer everywhere.
fn constant_field(width: usize, value: Vec<f64>) -> Mlp {
    let mut layers = zero_mlp(&[width, 3, width]).layers().to_vec();
    layers[1].b = Tensor::vector(value);
    Mlp::from_layers(layers).unwrap()
}

fn model(kind: ModelKind, step: f64, encoder: Mlp, decoder: Mlp, field: Mlp) -> LatentModel {
    LatentModel::from_parts(kind, step, LatentCoder { encoder, decoder }, LatentDynamics { field }).unwrap()
}

#[test]
fn mlp_matches_hand_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mlp = random_mlp(&[3, 4, 2], 1.0, &mut rng);
    let x = [0.3, -1.2, 0.7];
    let l = mlp.layers();
    let hidden: Vec<f64> = (0..4)
        .map(|i| {
            let z: f64 = (0..3).map(|j| l[0].w.data()[i * 3 + j] * x[j]).sum::<f64>() + l[0].b.data()[i];
            z.tanh()
        })
        .collect();
    let out: Vec<f64> = (0..2)
        .map(|i| (0..4).map(|j| l[1].w.data()[i * 4 + j] * hidden[j]).sum::<f64>() + l[1].b.data()[i])
        .collect();
    let got = mlp.forward(&Tensor::matrix(1, 3, x.to_vec()).unwrap()).unwrap();
    for (a, b) in got.data().iter().zip(&out) {
        assert!((a - b).abs() < 1e-14);
    }
    assert_eq!(mlp.call_count(), 1);
}

#[test]
fn euler_step_hand_example() {
    // Latent [1, 0], constant field [0, 1], dt = 2 gives latent [1, 2].
    let m = model(
        ModelKind::EulerUpdate,
        0.1,
        zero_mlp(&[2, 3, 2]),
        zero_mlp(&[2, 3, 2]),
        constant_field(2, vec![0.0, 1.0]),
    );
    let x = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
    assert_eq!(m.encode(&x).unwrap(), vec![1.0, 0.0]);
    let y = m.predict(&x, 2.0).unwrap();
    assert_eq!((y.q[0], y.p[0]), (1.0, 2.0));
}

#[test]
fn zero_field_reduces_to_the_coder_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in [ModelKind::EulerUpdate, ModelKind::NeuralOde] {
        let m = model(
            kind,
            0.1,
            random_mlp(&[4, 5, 4], 0.5, &mut rng),
            random_mlp(&[4, 5, 4], 0.5, &mut rng),
            zero_mlp(&[4, 5, 4]),
        );
        let x = PhaseState::new(vec![0.4, -0.2], vec![1.1, 0.3]).unwrap();
        let base = m.predict(&x, 0.0).unwrap();
        for dt in [0.5, 3.0, 40.0] {
            assert!(m.predict(&x, dt).unwrap().max_abs_diff(&base) < 1e-14);
        }
    }
}

#[test]
fn euler_network_calls_field_once_per_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = model(
        ModelKind::EulerUpdate,
        0.1,
        random_mlp(&[4, 5, 4], 0.5, &mut rng),
        random_mlp(&[4, 5, 4], 0.5, &mut rng),
        random_mlp(&[4, 5, 4], 0.5, &mut rng),
    );
    let x = PhaseState::new(vec![0.4, -0.2], vec![1.1, 0.3]).unwrap();
    for dt in [0.0, 1.0, 10.0, 100.0] {
        let before = m.field_calls();
        m.predict(&x, dt).unwrap();
        assert_eq!(m.field_calls() - before, 1);
    }
}

#[test]
fn neural_ode_call_count_grows_linearly_with_dt() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = model(
        ModelKind::NeuralOde,
        0.1,
        random_mlp(&[2, 3, 2], 0.5, &mut rng),
        random_mlp(&[2, 3, 2], 0.5, &mut rng),
        random_mlp(&[2, 3, 2], 0.5, &mut rng),
    );
    let x = PhaseState::new(vec![0.4], vec![1.1]).unwrap();
    for (dt, steps) in [(0.1, 1), (1.0, 10), (2.5, 25), (10.0, 100), (100.0, 1000), (0.25, 3)] {
        assert_eq!(rk4_substeps(dt, 0.1), steps);
        let before = m.field_calls();
        m.predict(&x, dt).unwrap();
        assert_eq!(m.field_calls() - before, 4 * steps, "dt={dt}");
    }
}

fn linear_field(a: &Tensor) -> impl FnMut(&mut Eager, &Tensor) -> aanet_core::Result<Tensor> + '_ {
    move |bk: &mut Eager, z: &Tensor| Ok(bk.matmul_t(z, a)?)
}

#[test]
fn rk4_on_exponential_growth() {
    let a = Tensor::matrix(1, 1, vec![1.0]).unwrap();
    let z = Tensor::matrix(1, 1, vec![1.0]).unwrap();
    let out = rk4_step(&mut Eager, &mut linear_field(&a), &z, 0.1).unwrap();
    let truncated = 1.0 + 0.1 + 0.005 + 0.1f64.powi(3) / 6.0 + 0.1f64.powi(4) / 24.0;
    assert!((out.item().unwrap() - truncated).abs() < 1e-15);
    assert!((out.item().unwrap() - 1.10517083).abs() < 5e-9);
}

#[test]
fn rk4_on_linear_systems_is_the_truncated_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for d in [1, 2, 4] {
        let a_data: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = Tensor::matrix(d, d, a_data.clone()).unwrap();
        let z0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = 0.3;
        // Σ_{k≤4} (hA)^k z₀ / k!
        let mut term = z0.clone();
        let mut expected = z0.clone();
        for k in 1..=4 {
            term = (0..d)
                .map(|i| h * (0..d).map(|j| a_data[i * d + j] * term[j]).sum::<f64>() / k as f64)
                .collect();
            for i in 0..d {
                expected[i] += term[i];
            }
        }
        let z = Tensor::matrix(1, d, z0).unwrap();
        let out = rk4_step(&mut Eager, &mut linear_field(&a), &z, h).unwrap();
        for (u, v) in out.data().iter().zip(&expected) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}

#[test]
fn rk4_with_zero_field_is_identity() {
    let a = Tensor::zeros(&[3, 3]);
    let z = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -1.0, 5.0, 2.0]).unwrap();
    let out = rk4_step(&mut Eager, &mut linear_field(&a), &z, 0.7).unwrap();
    assert_eq!(out, z);
}

/// Pendulum field `(x, y) ↦ (y, −sin x)`.
fn pendulum(bk: &mut Eager, z: &Tensor) -> aanet_core::Result<Tensor> {
    let x = bk.slice(z, 0, 1)?;
    let y = bk.slice(z, 1, 2)?;
    let s = bk.sin(&x)?;
    let ms = bk.scale(&s, -1.0)?;
    Ok(bk.concat(&[&y, &ms])?)
}

fn integrate(z0: &Tensor, t: f64, steps: usize) -> Tensor {
    let h = t / steps as f64;
    let mut z = z0.clone();
    for _ in 0..steps {
        z = rk4_step(&mut Eager, &mut pendulum, &z, h).unwrap();
    }
    z
}

fn dist(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn rk4_is_fourth_order() {
    let z0 = Tensor::matrix(1, 2, vec![1.2, 0.3]).unwrap();
    let reference = integrate(&z0, 2.0, 20_000);
    let coarse = dist(&integrate(&z0, 2.0, 20), &reference);
    let fine = dist(&integrate(&z0, 2.0, 40), &reference);
    let ratio = coarse / fine;
    assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn rk4_forward_then_backward_returns_within_h5() {
    let z0 = Tensor::matrix(1, 2, vec![0.8, -0.5]).unwrap();
    for h in [0.2, 0.1, 0.05] {
        let there = rk4_step(&mut Eager, &mut pendulum, &z0, h).unwrap();
        let back = rk4_step(&mut Eager, &mut pendulum, &there, -h).unwrap();
        assert!(dist(&back, &z0) < h.powi(5), "h={h}: {}", dist(&back, &z0));
    }
}

#[test]
fn neural_ode_converges_at_fourth_order_in_step_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (enc, dec, field) = (
        random_mlp(&[2, 4, 2], 0.5, &mut rng),
        random_mlp(&[2, 4, 2], 0.5, &mut rng),
        random_mlp(&[2, 8, 2], 1.0, &mut rng),
    );
    let at = |h0: f64| model(ModelKind::NeuralOde, h0, enc.clone(), dec.clone(), field.clone());
    let x = PhaseState::new(vec![0.5], vec![-0.4]).unwrap();
    let dt = 3.0;
    let reference = at(1e-4).predict(&x, dt).unwrap();
    let coarse = at(0.2).predict(&x, dt).unwrap().max_abs_diff(&reference);
    let fine = at(0.1).predict(&x, dt).unwrap().max_abs_diff(&reference);
    let ratio = coarse / fine;
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn divergent_latent_state_is_reported() {
    let huge = constant_field(2, vec![1e308, 1e308]);
    let m = model(ModelKind::NeuralOde, 0.1, zero_mlp(&[2, 3, 2]), zero_mlp(&[2, 3, 2]), huge);
    let x = PhaseState::new(vec![0.5], vec![-0.4]).unwrap();
    assert!(matches!(m.predict(&x, 1.0), Err(Error::NonFiniteState(_))));
}

#[test]
fn baselines_reject_negative_dt() {
    let m = model(
        ModelKind::NeuralOde,
        0.1,
        zero_mlp(&[2, 3, 2]),
        zero_mlp(&[2, 3, 2]),
        zero_mlp(&[2, 3, 2]),
    );
    let x = PhaseState::new(vec![0.5], vec![-0.4]).unwrap();
    assert!(matches!(m.predict(&x, -0.5), Err(Error::NegativeDt(_))));
}
