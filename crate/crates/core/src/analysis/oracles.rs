//! Verification oracles: finite differences, exact-expectation identities and
//! Monte-Carlo checks of the sampling identities and the smoothness inequality.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::theory::{pair_gradient, sigma_v2_exact, ProblemConstants};
use super::{mspbe_equivalence_check, neu, neu_grad, AnalysisError};
use crate::buffers::TwinBuffers;
use crate::learners::impression_direction;
use crate::linalg::{spectral_norm, Matrix, Vector};
use crate::mdp::{ExpectedMatrices, FeatureMap, FeatureVariant, MdpModel, Policy, Simulator, Transition, TransitionDistribution};

/// Standard-normal vector scaled by `scale` around `center`.
pub fn random_theta<R: Rng + ?Sized>(center: &Vector, scale: f64, rng: &mut R) -> Vector {
    Vector::from_fn(center.len(), |i, _| {
        let z: f64 = StandardNormal.sample(rng);
        center[i] + scale * z
    })
}

/// Relative error between `neu_grad` and central finite differences.
pub fn gradient_check(theta: &Vector, mats: &ExpectedMatrices, h: f64) -> f64 {
    let analytic = neu_grad(theta, mats);
    let fd = Vector::from_fn(theta.len(), |i, _| {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += h;
        minus[i] -= h;
        (neu(&plus, mats) - neu(&minus, mats)) / (2.0 * h)
    });
    (fd - &analytic).norm() / analytic.norm().max(f64::MIN_POSITIVE)
}

/// `|N(theta) - MSPBE(theta)|` from exact expectations.
pub fn similarity_gap(
    theta: &Vector,
    mats: &ExpectedMatrices,
    dist: &TransitionDistribution,
) -> Result<f64, AnalysisError> {
    Ok(mspbe_equivalence_check(theta, mats, dist)?.abs_diff)
}

/// Three non-terminal states, each moving uniformly among the three or
/// terminating with probability 0.3; tabular features, rewards equal to the
/// destination index.
pub fn three_state_chain() -> (MdpModel, Policy, FeatureMap) {
    let n = 4;
    let mut p = Matrix::zeros(n, n);
    let mut r = Matrix::zeros(n, n);
    for s in 0..3 {
        for s2 in 0..3 {
            p[(s, s2)] = 0.7 / 3.0;
            r[(s, s2)] = s2 as f64;
        }
        p[(s, 3)] = 0.3;
    }
    p[(3, 3)] = 1.0;
    let start = Vector::from_vec(vec![0.5, 0.3, 0.2, 0.0]);
    let mdp = MdpModel::new(vec![p], vec![r], 0.9, start, vec![false, false, false, true])
        .expect("valid chain");
    let phi = Matrix::from_fn(n, 3, |s, j| if s == j { 1.0 } else { 0.0 });
    let features = FeatureMap::new(phi, FeatureVariant::Tabular).expect("finite");
    (mdp, Policy::uniform(n, 1), features)
}

#[derive(Debug, Clone, Serialize)]
pub struct IndependenceReport {
    /// `P(s1, s2)` over paired draws.
    pub joint: Vec<Vec<f64>>,
    pub max_deviation: f64,
    /// Every paired draw came from two different episodes.
    pub disjoint: bool,
}

/// Fills twin buffers with `n_episodes` episodes of [`three_state_chain`] and
/// tabulates the state pair of `n_draws` single-transition paired draws.
pub fn independence_check<R: Rng + ?Sized>(n_episodes: u64, n_draws: usize, rng: &mut R) -> IndependenceReport {
    let (mdp, pol, feat) = three_state_chain();
    let sim = Simulator::new(&mdp, &pol, &pol, &feat);
    let mut buffers = TwinBuffers::new(3, 1);
    for ep in 1..=n_episodes {
        for t in sim.episode(ep, rng).expect("terminates") {
            buffers.insert(t);
        }
    }
    let mut counts = [[0usize; 3]; 3];
    let mut disjoint = true;
    for _ in 0..n_draws {
        let pair = buffers.sample_pair(1, 1, rng).expect("warm");
        let (a, b) = (pair.batch1[0], pair.batch2[0]);
        disjoint &= a.episode_idx != b.episode_idx;
        counts[a.state][b.state] += 1;
    }
    let n = n_draws as f64;
    let joint: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|&c| c as f64 / n).collect()).collect();
    let p1: Vec<f64> = (0..3).map(|i| joint[i].iter().sum()).collect();
    let p2: Vec<f64> = (0..3).map(|j| (0..3).map(|i| joint[i][j]).sum()).collect();
    let mut max_deviation = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            max_deviation = max_deviation.max((joint[i][j] - p1[i] * p2[j]).abs());
        }
    }
    IndependenceReport { joint, max_deviation, disjoint }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AverageIdentityReport {
    pub m: usize,
    pub empirical: f64,
    pub predicted: f64,
    pub rel_error: f64,
}

/// `E||avg_m||^2` over `n_draws` averages of `m` independent single-pair
/// gradients, against `(1/m) E||g||^2 + (1 - 1/m) ||f'||^2` computed exactly.
pub fn average_identity_check<R: Rng + ?Sized>(
    dist: &TransitionDistribution,
    mats: &ExpectedMatrices,
    theta: &Vector,
    m: usize,
    n_draws: usize,
    rng: &mut R,
) -> AverageIdentityReport {
    let f_prime = mats.a.tr_mul(&mats.expected_update(theta));
    let second = sigma_v2_exact(dist, mats, theta) + f_prime.norm_squared();
    let mf = m as f64;
    let predicted = second / mf + (1.0 - 1.0 / mf) * f_prime.norm_squared();
    let mut total = 0.0;
    for _ in 0..n_draws {
        let mut avg = Vector::zeros(theta.len());
        for _ in 0..m {
            let ti = dist.sample(rng, 1);
            let tj = dist.sample(rng, 2);
            avg += pair_gradient(theta, &ti, &tj);
        }
        total += (avg / mf).norm_squared();
    }
    let empirical = total / n_draws as f64;
    AverageIdentityReport { m, empirical, predicted, rel_error: (empirical - predicted).abs() / predicted }
}

#[derive(Debug, Clone, Serialize)]
pub struct UnbiasednessReport {
    pub mean: Vec<f64>,
    pub expected: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Largest `|mean - expected| / stderr` over coordinates.
    pub max_z: f64,
    pub pass: bool,
}

fn sample_batch<R: Rng + ?Sized>(dist: &TransitionDistribution, m: usize, ep: u64, rng: &mut R) -> Vec<Transition> {
    (0..m).map(|_| dist.sample(rng, ep)).collect()
}

/// Mean Impression GTD direction over `n_pairs` independent batch pairs,
/// compared coordinate-wise against `A^T (A theta + b)` at `z_tol` standard
/// errors.
pub fn unbiasedness_check<R: Rng + ?Sized>(
    dist: &TransitionDistribution,
    mats: &ExpectedMatrices,
    theta: &Vector,
    m1: usize,
    m2: usize,
    n_pairs: usize,
    z_tol: f64,
    rng: &mut R,
) -> UnbiasednessReport {
    let d = theta.len();
    let mut sum = Vector::zeros(d);
    let mut sum_sq = Vector::zeros(d);
    for _ in 0..n_pairs {
        let b1 = sample_batch(dist, m1, 1, rng);
        let b2 = sample_batch(dist, m2, 2, rng);
        let r1: Vec<&Transition> = b1.iter().collect();
        let r2: Vec<&Transition> = b2.iter().collect();
        let dir = impression_direction(theta, &r1, &r2);
        sum_sq += dir.component_mul(&dir);
        sum += dir;
    }
    let n = n_pairs as f64;
    let mean = &sum / n;
    let expected = mats.a.tr_mul(&mats.expected_update(theta));
    let stderr = Vector::from_fn(d, |i, _| ((sum_sq[i] / n - mean[i] * mean[i]).max(0.0) * n / (n - 1.0) / n).sqrt());
    let mut max_z = 0.0f64;
    let mut pass = true;
    for i in 0..d {
        let gap = (mean[i] - expected[i]).abs();
        if stderr[i] > 0.0 {
            max_z = max_z.max(gap / stderr[i]);
            pass &= gap <= z_tol * stderr[i];
        } else {
            pass &= gap <= 1e-12;
        }
    }
    UnbiasednessReport {
        mean: mean.iter().cloned().collect(),
        expected: expected.iter().cloned().collect(),
        stderr: stderr.iter().cloned().collect(),
        max_z,
        pass,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LLambdaCheck {
    /// Monte-Carlo `E||A~1^T (A~2 theta + b~2)||^2`.
    pub lhs: f64,
    pub stderr: f64,
    /// `2L (f(theta) - f(theta*)) + lambda ||theta - theta*||^2 + sigma^2`
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LLambdaReport {
    pub checks: Vec<LLambdaCheck>,
    pub all_pass: bool,
}

/// Checks the smoothness inequality at each `theta`, drawing `n_mc` fresh
/// batch pairs per point. Uses the batch sizes stored in `constants`.
pub fn verify_l_lambda<R: Rng + ?Sized>(
    dist: &TransitionDistribution,
    mats: &ExpectedMatrices,
    constants: &ProblemConstants,
    thetas: &[Vector],
    n_mc: usize,
    z_tol: f64,
    rng: &mut R,
) -> LLambdaReport {
    let (m1, m2) = (constants.m1, constants.m2);
    let f_star = neu(&constants.theta_star, mats);
    let checks: Vec<LLambdaCheck> = thetas
        .iter()
        .map(|theta| {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n_mc {
                let b1 = sample_batch(dist, m1, 1, rng);
                let b2 = sample_batch(dist, m2, 2, rng);
                let r1: Vec<&Transition> = b1.iter().collect();
                let r2: Vec<&Transition> = b2.iter().collect();
                let v = impression_direction(theta, &r1, &r2).norm_squared();
                s += v;
                s2 += v * v;
            }
            let n = n_mc as f64;
            let lhs = s / n;
            let stderr = ((s2 / n - lhs * lhs).max(0.0) / (n - 1.0)).sqrt();
            let rhs = 2.0 * constants.l * (neu(theta, mats) - f_star)
                + constants.lambda * (theta - &constants.theta_star).norm_squared()
                + constants.sigma2;
            LLambdaCheck { lhs, stderr, rhs, pass: lhs <= rhs + z_tol * stderr + 1e-12 }
        })
        .collect();
    let all_pass = checks.iter().all(|c| c.pass);
    LLambdaReport { checks, all_pass }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContractionReport {
    pub observed_ratio: f64,
    pub predicted_ratio: f64,
    pub rel_error: f64,
    pub steps: usize,
}

/// Runs the exact-matrix Expected GTD iteration `theta -= alpha A^T (A theta + b)`
/// from `theta0` and compares the late per-step error ratio with
/// `||I - alpha A^T A||`.
pub fn expected_gtd_contraction(
    mats: &ExpectedMatrices,
    theta_star: &Vector,
    theta0: &Vector,
    alpha: f64,
    max_steps: usize,
) -> ContractionReport {
    let d = theta0.len();
    let iteration = Matrix::identity(d, d) - mats.a.tr_mul(&mats.a) * alpha;
    let predicted = spectral_norm(&iteration);
    let mut theta = theta0.clone();
    let mut err = (&theta - theta_star).norm();
    let mut ratio = f64::NAN;
    let mut steps = 0;
    while steps < max_steps {
        theta -= mats.a.tr_mul(&mats.expected_update(&theta)) * alpha;
        steps += 1;
        let e = (&theta - theta_star).norm();
        let r = e / err;
        err = e;
        let settled = (r - ratio).abs() < 1e-13;
        ratio = r;
        if settled || e < 1e-200 {
            break;
        }
    }
    ContractionReport {
        observed_ratio: ratio,
        predicted_ratio: predicted,
        rel_error: (ratio - predicted).abs() / predicted,
        steps,
    }
}
