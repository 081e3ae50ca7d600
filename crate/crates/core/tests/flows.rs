//! Invertibility and symplecticity of coupling-layer stacks.

use aanet_core::flows::{from_polar, jacobian_fd, symplectic_defect, to_polar, ActionAngleState, FlowStack};
use aanet_core::model::ActionAngleNetwork;
use aanet_core::nn::Mlp;
use aanet_core::phase::PhaseState;
use aanet_core::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A stack with every parameter drawn uniformly from `[-scale, scale]`, far
/// from the near-identity initialization.
fn random_stack(n: usize, depth: usize, width: usize, scale: f64, rng: &mut ChaCha8Rng) -> FlowStack {
    let mut stack = FlowStack::init(n, depth, width, rng);
    for p in stack.params_mut() {
        for x in p.data_mut() {
            *x = rng.random_range(-scale..scale);
        }
    }
    stack
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> PhaseState {
    let q = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let p = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    PhaseState::new(q, p).unwrap()
}

fn net_from(stack: FlowStack, rng: &mut ChaCha8Rng) -> ActionAngleNetwork {
    let n = stack.n();
    let head = Mlp::init(&[n, 8, n], false, rng).unwrap();
    ActionAngleNetwork::from_parts(stack, head).unwrap()
}

#[test]
fn decode_encode_is_identity_on_1000_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = [1, 2, 4][i % 3];
        let depth = 1 + i % 8;
        let width = 1 + (i * 7) % 16;
        let net = net_from(random_stack(n, depth, width, 1.0, &mut rng), &mut rng);
        let x = random_state(n, &mut rng);
        let back = net.decode(&net.encode(&x).unwrap()).unwrap();
        worst = worst.max(back.max_abs_diff(&x));
    }
    assert!(worst < 1e-10, "worst round-trip error {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stack_inverse_undoes_forward(
        n in prop::sample::select(vec![1usize, 2, 4]),
        depth in 1usize..=8,
        width in 1usize..=16,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = random_stack(n, depth, width, 1.0, &mut rng);
        let x = random_state(n, &mut rng);
        let y = stack.forward(&x).unwrap();
        prop_assert!(stack.inverse(&y).unwrap().max_abs_diff(&x) < 1e-10);
        prop_assert!(stack.forward(&stack.inverse(&x).unwrap()).unwrap().max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn encode_decode_is_identity_off_the_origin(
        n in prop::sample::select(vec![1usize, 2, 4]),
        depth in 1usize..=8,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = net_from(random_stack(n, depth, 6, 1.0, &mut rng), &mut rng);
        let a = ActionAngleState {
            actions: (0..n).map(|_| rng.random_range(0.1..3.0)).collect(),
            angles: (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect(),
        };
        let back = net.encode(&net.decode(&a).unwrap()).unwrap();
        for k in 0..n {
            prop_assert!((back.actions[k] - a.actions[k]).abs() < 1e-10);
            let d = (back.angles[k] - a.angles[k]).rem_euclid(std::f64::consts::TAU);
            prop_assert!(d.min(std::f64::consts::TAU - d) < 1e-10);
        }
    }

    #[test]
    fn polar_map_round_trips(ix in -5.0f64..5.0, iy in -5.0f64..5.0) {
        prop_assume!(ix.hypot(iy) > 1e-6);
        let c = aanet_core::flows::CartesianActionState { ix: vec![ix], iy: vec![iy] };
        let back = from_polar(&to_polar(&c)).unwrap();
        prop_assert!((back.ix[0] - ix).abs() < 1e-12 && (back.iy[0] - iy).abs() < 1e-12);
    }
}

#[test]
fn random_stacks_are_symplectic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for s in 0..30 {
        let n = [1, 2, 4][s % 3];
        let stack = random_stack(n, 1 + s % 8, 8, 0.8, &mut rng);
        for _ in 0..20 {
            let x = random_state(n, &mut rng);
            worst = worst.max(stack.symplecticity_check(&x).unwrap());
        }
    }
    assert!(worst < 1e-6, "worst defect {worst:e}");
}

fn det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut d = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if m[piv][c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            m.swap(piv, c);
            d = -d;
        }
        d *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    d
}

#[test]
fn random_stacks_preserve_volume() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in 0..20 {
        let n = [1, 2, 4][s % 3];
        let stack = random_stack(n, 8, 8, 0.8, &mut rng);
        let x = random_state(n, &mut rng);
        let j = jacobian_fd(|s| stack.forward(s), &x, 1e-5).unwrap();
        assert!((det(j) - 1.0).abs() < 1e-6);
    }
}

/// Stack followed by `p ← p + 0.1·p∘p`, whose Jacobian scales `dp` by
/// `1 + 0.2·p` and so cannot be symplectic.
fn perturbed(stack: &FlowStack, x: &PhaseState) -> Result<PhaseState> {
    let y = stack.forward(x)?;
    let p = y.p.iter().map(|v| v + 0.1 * v * v).collect();
    PhaseState::new(y.q, p)
}

#[test]
fn non_symplectic_control_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut weakest = f64::INFINITY;
    for s in 0..30 {
        let n = [1, 2, 4][s % 3];
        let stack = random_stack(n, 1 + s % 8, 8, 0.8, &mut rng);
        for _ in 0..20 {
            let x = random_state(n, &mut rng);
            let image = stack.forward(&x).unwrap();
            if image.p.iter().all(|v| v.abs() < 0.05) {
                continue;
            }
            weakest = weakest.min(symplectic_defect(|s| perturbed(&stack, s), &x, 1e-5).unwrap());
        }
    }
    assert!(weakest > 1e-3, "weakest control defect {weakest:e}");
}

#[test]
fn quadratic_position_kick_is_still_symplectic() {
    // p ← p + 0.1·q∘q is the gradient of Σ q³/30, so it must pass.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kick = |x: &PhaseState| {
        let p = x.p.iter().zip(&x.q).map(|(p, q)| p + 0.1 * q * q).collect();
        PhaseState::new(x.q.clone(), p)
    };
    for n in [1, 2, 4] {
        let x = random_state(n, &mut rng);
        assert!(symplectic_defect(kick, &x, 1e-5).unwrap() < 1e-8);
    }
}
