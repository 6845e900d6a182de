use gtdlab_core::analysis::{neu, neu_grad, rmsve};
use gtdlab_core::envs::baird_initial_theta;
use gtdlab_core::learners::expected_direction;
use gtdlab_core::mdp::td_solution;
use gtdlab_core::{BenchmarkName, Matrix, Transition, TwinBuffers, Vector};
use proptest::prelude::*;

fn transition(ep: u64, phi: Vec<f64>, phi_next: Vec<f64>, reward: f64, rho: f64) -> Transition {
    Transition {
        phi: Vector::from_vec(phi),
        phi_next: Vector::from_vec(phi_next),
        reward,
        rho,
        discount: 0.9,
        episode_idx: ep,
        state: 0,
        next_state: 0,
    }
}

fn arb_transition() -> impl Strategy<Value = Transition> {
    (
        1u64..50,
        prop::collection::vec(-2.0..2.0f64, 3),
        prop::collection::vec(-2.0..2.0f64, 3),
        -1.0..1.0f64,
        0.0..3.0f64,
    )
        .prop_map(|(ep, p, q, r, rho)| transition(ep, p, q, r, rho))
}

fn brute_mean(items: &[&Transition]) -> (Matrix, Vector) {
    let n = items.len() as f64;
    let mut a = Matrix::zeros(3, 3);
    let mut b = Vector::zeros(3);
    for t in items {
        a += t.rho * &t.phi * t.td_gradient().transpose();
        b += t.rho * t.reward * &t.phi;
    }
    (a / n, b / n)
}

proptest! {
    #[test]
    fn buffers_split_by_episode_parity(ts in prop::collection::vec(arb_transition(), 0..60)) {
        let mut buf = TwinBuffers::new(3, 0);
        for t in &ts {
            buf.insert(t.clone());
        }
        prop_assert_eq!(buf.len1() + buf.len2(), ts.len());
        prop_assert!(buf.b1().iter().all(|t| t.episode_idx % 2 == 1));
        prop_assert!(buf.b2().iter().all(|t| t.episode_idx % 2 == 0));

        let odd: Vec<&Transition> = ts.iter().filter(|t| t.episode_idx % 2 == 1).collect();
        if let Some((a, b)) = buf.aggregate1().mean() {
            let (ea, eb) = brute_mean(&odd);
            prop_assert!((a - ea).norm() < 1e-9);
            prop_assert!((b - eb).norm() < 1e-9);
        } else {
            prop_assert!(odd.is_empty());
        }
    }

    #[test]
    fn neu_gradient_matches_finite_differences(
        which in 0usize..5,
        raw in prop::collection::vec(-3.0..3.0f64, 8),
    ) {
        let bm = BenchmarkName::ALL[which].build();
        let mats = bm.matrices().unwrap();
        let theta = Vector::from_iterator(bm.dim(), raw.into_iter().take(bm.dim()));
        let g = neu_grad(&theta, &mats);
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (neu(&p, &mats) - neu(&m, &mats)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g.norm()), "{} vs {}", fd, g[i]);
        }
        // With exact matrices in both slots the direction is half the gradient.
        let d = expected_direction(&theta, &mats.a, &mats.a, &mats.b);
        prop_assert!((d * 2.0 - &g).norm() <= 1e-9 * (1.0 + g.norm()));
    }
}

#[test]
fn tabular_walk_values_match_gamblers_ruin() {
    // Target policy steps right w.p. 0.6; reward -1 into the left end, +1 into
    // the right end, undiscounted. V(s) = P(right) - P(left) from state s.
    let r = 0.4f64 / 0.6;
    let bm = BenchmarkName::RwTab.build();
    let v = bm.true_values().unwrap();
    for s in 1..=5 {
        let p_right = (1.0 - r.powi(s as i32)) / (1.0 - r.powi(6));
        assert!((v[s] - (2.0 * p_right - 1.0)).abs() < 1e-12, "state {s}: {}", v[s]);
    }
    assert_eq!((v[0], v[6]), (0.0, 0.0));

    // Tabular features represent V exactly, so the TD fixed point is V.
    let theta = td_solution(&bm.matrices().unwrap()).unwrap();
    assert!(rmsve(&theta, &bm).unwrap() < 1e-10);
}

#[test]
fn baird_initial_error() {
    // Outer states read 2 + 1 = 3, the center 10 + 2 = 12; all true values are 0.
    let bm = BenchmarkName::Baird.build();
    let expected = ((6.0 * 9.0 + 144.0) / 7.0f64).sqrt();
    let got = rmsve(&baird_initial_theta(), &bm).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got}");
    assert!(bm.true_values().unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn boyan_values_are_linear() {
    // V(1) = -2, V(0) = 0 and V(i) = -3 + (V(i-1) + V(i-2)) / 2 give V(i) = -2i.
    let bm = BenchmarkName::Boyan.build();
    let v = bm.true_values().unwrap();
    for i in 0..13 {
        assert!((v[i] + 2.0 * i as f64).abs() < 1e-9, "{i}: {}", v[i]);
    }
    // The interpolating features span V, so TD recovers it on-policy.
    let theta = td_solution(&bm.matrices().unwrap()).unwrap();
    assert!(rmsve(&theta, &bm).unwrap() < 1e-9);
}
