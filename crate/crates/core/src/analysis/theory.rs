//! Smoothness constants for the NEU objective under independence sampling,
//! SGD rate predictions, batch-size thresholds and the `O(1/t)` bound.

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use super::AnalysisError;
use crate::buffers::TwinBuffers;
use crate::envs::Benchmark;
use crate::linalg::{min_singular_value, pseudo_solve, spectral_norm, Matrix, Vector};
use crate::mdp::{ExpectedMatrices, Transition, TransitionDistribution};

/// Problem-level constants for one (model, features, policies) instance and
/// batch sizes `(m1, m2)`.
///
/// `norm_sigma_a` is the Frobenius norm of the elementwise standard-deviation
/// matrix: it bounds `E||A~_m - A||^2 <= norm_sigma_a^2 / m` for the spectral
/// norm, which the smoothness constants rely on.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemConstants {
    pub m1: usize,
    pub m2: usize,
    /// `sigma_min(A)^2`
    pub mu: f64,
    pub norm_a: f64,
    pub norm_sigma_a: f64,
    pub norm_sigma_b: f64,
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
    pub lambda: f64,
    pub sigma2: f64,
    /// Single-pair gradient variance at `theta*` (an upper bound on the
    /// minimum variance).
    pub sigma_v2: f64,
    pub l_max: Option<f64>,
    #[serde(skip)]
    pub theta_star: Vector,
}

/// `(L1, L2, lambda, sigma^2)` from the norms.
pub fn l_lambda_terms(norm_a: f64, norm_sa: f64, norm_sb: f64, theta_star_norm: f64, m1: f64, m2: f64) -> (f64, f64, f64, f64) {
    let sa2 = norm_sa * norm_sa;
    let first = sa2 / m1 + norm_a * norm_a;
    let l1 = 4.0 * first;
    let l2 = sa2 / m2;
    let lambda = 2.0 * sa2 * sa2 / (m1 * m2);
    let sigma2 = 16.0 * first * (sa2 / m2 * theta_star_norm.powi(2) + norm_sb * norm_sb / m2);
    (l1, l2, lambda, sigma2)
}

/// Builds the constants. `theta*` is the minimum-norm solution of
/// `A theta + b = 0` (the exact solution when `A` is non-singular).
/// `sigma_v2` and `l_max` are left at zero / unset; see
/// [`ProblemConstants::with_sigma_v2`] and [`ProblemConstants::with_l_max`].
pub fn smoothness_constants(
    mats: &ExpectedMatrices,
    sigma_a: &Matrix,
    sigma_b: &Vector,
    m1: usize,
    m2: usize,
) -> ProblemConstants {
    let theta_star = pseudo_solve(&mats.a, &(-&mats.b));
    let smin = min_singular_value(&mats.a);
    let mu = if smin <= 1e-10 { 0.0 } else { smin * smin };
    let norm_a = spectral_norm(&mats.a);
    let norm_sigma_a = sigma_a.norm();
    let norm_sigma_b = sigma_b.norm();
    let (l1, l2, lambda, sigma2) =
        l_lambda_terms(norm_a, norm_sigma_a, norm_sigma_b, theta_star.norm(), m1 as f64, m2 as f64);
    ProblemConstants {
        m1,
        m2,
        mu,
        norm_a,
        norm_sigma_a,
        norm_sigma_b,
        l1,
        l2,
        l: l1 + l2,
        lambda,
        sigma2,
        sigma_v2: 0.0,
        l_max: None,
        theta_star,
    }
}

impl ProblemConstants {
    /// Everything exact for a benchmark: matrices, deviations, `sigma_v^2`
    /// at `theta*`, and `L_max` over the transition support.
    pub fn for_benchmark(benchmark: &Benchmark, m1: usize, m2: usize) -> Result<Self, AnalysisError> {
        let mats = benchmark.matrices()?;
        let (sa, sb) = benchmark.sigmas()?;
        let dist = benchmark.transition_distribution()?;
        let c = smoothness_constants(&mats, &sa, &sb, m1, m2);
        let sv = sigma_v2_exact(&dist, &mats, &c.theta_star);
        Ok(c.with_sigma_v2(sv).with_l_max(l_max_support(&dist)))
    }

    pub fn with_sigma_v2(mut self, sigma_v2: f64) -> Self {
        self.sigma_v2 = sigma_v2;
        self
    }

    pub fn with_l_max(mut self, l_max: f64) -> Self {
        self.l_max = Some(l_max);
        self
    }

    /// Same instance, different batch sizes.
    pub fn rebatch(&self, m1: usize, m2: usize) -> Self {
        let (l1, l2, lambda, sigma2) = l_lambda_terms(
            self.norm_a,
            self.norm_sigma_a,
            self.norm_sigma_b,
            self.theta_star.norm(),
            m1 as f64,
            m2 as f64,
        );
        Self { m1, m2, l1, l2, l: l1 + l2, lambda, sigma2, ..self.clone() }
    }
}

/// Linear-rate prediction `E||x_t - x*||^2 <= q^t E||x_0 - x*||^2 + bias`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePrediction {
    pub q: f64,
    pub bias: f64,
    pub alpha_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RateOutcome {
    Linear(RatePrediction),
    /// `lambda > L mu` (or the contraction factor left `[0, 1]`).
    NoGuarantee { lambda: f64, l_mu: f64 },
}

impl RateOutcome {
    pub fn linear(&self) -> Option<RatePrediction> {
        match self {
            RateOutcome::Linear(p) => Some(*p),
            RateOutcome::NoGuarantee { .. } => None,
        }
    }
}

/// Contraction factor `1 - (mu - lambda/L) alpha - mu^2 alpha (1/L - alpha)`.
pub fn contraction(mu: f64, lambda: f64, l: f64, alpha: f64) -> f64 {
    1.0 - (mu - lambda / l) * alpha - mu * mu * alpha * (1.0 / l - alpha)
}

/// SGD linear rate for batch size `m` under the constants' `L`, `lambda`,
/// `sigma^2`, `sigma_v^2`.
pub fn rate_predictor(c: &ProblemConstants, alpha: f64, m: usize) -> Result<RateOutcome, AnalysisError> {
    let alpha_max = 1.0 / c.l;
    if alpha > alpha_max * (1.0 + 1e-12) {
        return Err(AnalysisError::StepTooLarge { alpha, bound: alpha_max });
    }
    let l_mu = c.l * c.mu;
    if c.lambda > l_mu {
        return Ok(RateOutcome::NoGuarantee { lambda: c.lambda, l_mu });
    }
    let q = contraction(c.mu, c.lambda, c.l, alpha);
    if !(0.0..=1.0).contains(&q) {
        return Ok(RateOutcome::NoGuarantee { lambda: c.lambda, l_mu });
    }
    let m = m as f64;
    let denom = c.l * m * ((c.mu - c.lambda / c.l) + c.mu * c.mu * (1.0 / c.l - alpha));
    let bias = alpha * (m * (c.sigma2 - c.sigma_v2) + c.l * alpha * c.sigma_v2) / denom;
    Ok(RateOutcome::Linear(RatePrediction { q, bias, alpha_max }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BatchThreshold {
    /// Smallest `m = m1 = m2` with `lambda < L mu`.
    pub exact: usize,
    /// `ceil(||Sigma_A||^2 / (||A|| sqrt(2 mu)))`
    pub sufficient: usize,
}

/// Minimum common batch size for a linear-rate guarantee: the smallest
/// integer strictly above the positive root of
/// `(4||A||^2/||Sigma_A||^2) m^2 + 5m - 2||Sigma_A||^2/mu`.
pub fn batch_threshold(c: &ProblemConstants) -> Result<BatchThreshold, AnalysisError> {
    if c.mu <= 0.0 {
        return Err(AnalysisError::SingularA);
    }
    let s2 = c.norm_sigma_a * c.norm_sigma_a;
    if s2 == 0.0 {
        return Ok(BatchThreshold { exact: 1, sufficient: 1 });
    }
    let qa = 4.0 * c.norm_a * c.norm_a / s2;
    let qb = 5.0;
    let qc = -2.0 * s2 / c.mu;
    let root = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
    let exact = ((root.floor() as i64) + 1).max(1) as usize;
    let sufficient = (s2 / (c.norm_a * (2.0 * c.mu).sqrt())).ceil().max(1.0) as usize;
    Ok(BatchThreshold { exact, sufficient })
}

/// `max{2 f0 / (t alpha (2 - alpha L_max) mu) - sigma_v^2 / (m1 m2 mu), 0}`
pub fn one_over_t_bound(
    c: &ProblemConstants,
    alpha: f64,
    t: u64,
    f0: f64,
    m1: usize,
    m2: usize,
) -> Result<f64, AnalysisError> {
    if c.mu <= 0.0 {
        return Err(AnalysisError::SingularA);
    }
    let l_max = c.l_max.unwrap_or(0.0);
    if l_max > 0.0 && alpha > 2.0 / l_max * (1.0 + 1e-12) {
        return Err(AnalysisError::StepTooLarge { alpha, bound: 2.0 / l_max });
    }
    if t == 0 {
        return Ok(f64::INFINITY);
    }
    let lead = 2.0 * f0 / (t as f64 * alpha * (2.0 - alpha * l_max) * c.mu);
    let noise = c.sigma_v2 / ((m1 * m2) as f64 * c.mu);
    Ok((lead - noise).max(0.0))
}

/// Rate statement for one aggregate-matrix algorithm at `t` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgorithmRate {
    pub q: f64,
    pub alpha_max: f64,
    /// Per-step additive term of the recursion.
    pub additive: f64,
    /// Whether `t` is past the point where the variance term is below `epsilon`.
    pub condition_met: bool,
    pub admissible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerAlgorithmRates {
    pub expected_gtd: AlgorithmRate,
    pub atop_td: AlgorithmRate,
    pub r1_gtd: AlgorithmRate,
}

pub fn per_algorithm_rates(c: &ProblemConstants, t: u64, epsilon: f64, alpha: f64) -> PerAlgorithmRates {
    let (mu, a2, s2) = (c.mu, c.norm_a * c.norm_a, c.norm_sigma_a * c.norm_sigma_a);
    let t = t.max(1) as f64;
    let dv = c.sigma2 - c.sigma_v2;

    let exp_max = 1.0 / (4.0 * a2);
    let expected_gtd = AlgorithmRate {
        q: 1.0 - mu * alpha - mu * mu * alpha * (1.0 / (4.0 * a2 + 5.0 * epsilon) - alpha)
            + 2.0 * alpha / (4.0 * a2) * epsilon * epsilon,
        alpha_max: exp_max,
        additive: alpha / (4.0 * a2) * dv + 4.0 * alpha * alpha * c.sigma_v2 / (t * t),
        condition_met: 2.0 * s2 / t <= epsilon,
        admissible: alpha <= exp_max,
    };

    let big = (4.0 * a2).max(s2);
    let atop_td = AlgorithmRate {
        q: 1.0 - mu * alpha - mu * mu * alpha * (1.0 / (4.0 * a2 + s2 + 4.0 * epsilon) - alpha)
            + s2 / big * alpha * epsilon,
        alpha_max: 1.0 / big,
        additive: alpha / big * dv + alpha * alpha * c.sigma_v2 / t,
        condition_met: s2 / t <= epsilon,
        admissible: alpha <= 1.0 / big,
    };

    let r1 = 4.0 * (s2 + a2);
    let r1_gtd = AlgorithmRate {
        q: 1.0 - mu * alpha - mu * mu * alpha * (1.0 / (r1 + epsilon) - alpha) + s2 / r1 * alpha * epsilon,
        alpha_max: 1.0 / r1,
        additive: alpha / r1 * dv + alpha * alpha * c.sigma_v2 / t,
        condition_met: s2 / t <= epsilon,
        admissible: alpha <= 1.0 / r1,
    };
    PerAlgorithmRates { expected_gtd, atop_td, r1_gtd }
}

/// One row of the per-algorithm factor comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub algorithm: &'static str,
    pub batch: String,
    /// `L1 - 4||A||^2`
    pub l1_excess: f64,
    pub l2: f64,
    pub lambda: f64,
    pub bias: f64,
}

/// Factors for Impression GTD at `m1 = m2 = m` and for the aggregate-matrix
/// algorithms after `t` samples.
pub fn variance_table(norm_sigma_a: f64, sigma_v2: f64, alpha: f64, m: usize, t: u64) -> Vec<VarianceRow> {
    let s2 = norm_sigma_a * norm_sigma_a;
    let s4 = s2 * s2;
    let (m, t) = (m as f64, t as f64);
    let av = alpha * alpha * sigma_v2;
    vec![
        VarianceRow {
            algorithm: "impression-gtd",
            batch: format!("{}", m * m),
            l1_excess: 4.0 * s2 / m,
            l2: s2 / m,
            lambda: 2.0 * s4 / (m * m),
            bias: av / m,
        },
        VarianceRow {
            algorithm: "expected-gtd",
            batch: format!("{}", t * t / 4.0),
            l1_excess: 8.0 * s2 / t,
            l2: 2.0 * s2 / t,
            lambda: 8.0 * s4 / (t * t),
            bias: 4.0 * av / (t * t),
        },
        VarianceRow {
            algorithm: "atop-td",
            batch: format!("m1={t}, m2=1"),
            l1_excess: 4.0 * s2 / t,
            l2: s2,
            lambda: 2.0 * s4 / t,
            bias: av / t,
        },
        VarianceRow {
            algorithm: "r1-gtd",
            batch: format!("m1=1, m2={t}"),
            l1_excess: 4.0 * s2,
            l2: s2 / t,
            lambda: 2.0 * s4 / t,
            bias: av / t,
        },
    ]
}

/// Single-pair stochastic gradient `rho_i (gamma phi_i' - phi_i) phi_i^T rho_j delta_j phi_j`.
pub fn pair_gradient(theta: &Vector, ti: &Transition, tj: &Transition) -> Vector {
    let scale = ti.rho * tj.rho * tj.td_error(theta) * ti.phi.dot(&tj.phi);
    ti.td_gradient() * scale
}

/// Exact `E||g - f'||^2` of the single-pair gradient at `theta`, where
/// `f' = A^T (A theta + b)`.
pub fn sigma_v2_exact(dist: &TransitionDistribution, mats: &ExpectedMatrices, theta: &Vector) -> f64 {
    let support = dist.support();
    let d = theta.len();
    let mut m = Matrix::zeros(d, d);
    for (p, t) in &support {
        let s = t.rho * t.td_error(theta);
        m.ger(p * s * s, &t.phi, &t.phi, 1.0);
    }
    let second: f64 = support
        .iter()
        .map(|(p, t)| p * t.rho * t.rho * t.td_gradient().norm_squared() * t.phi.dot(&(&m * &t.phi)))
        .sum();
    let f_prime = mats.a.tr_mul(&mats.expected_update(theta));
    (second - f_prime.norm_squared()).max(0.0)
}

/// Monte-Carlo `E||g - f'||^2` at `theta*` from `n_samples` independent pairs.
pub fn sigma_v2_estimate<R: Rng + ?Sized>(
    benchmark: &Benchmark,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, AnalysisError> {
    let mats = benchmark.matrices()?;
    let dist = benchmark.transition_distribution()?;
    let theta = pseudo_solve(&mats.a, &(-&mats.b));
    let f_prime = mats.a.tr_mul(&mats.expected_update(&theta));
    let mut total = 0.0;
    for _ in 0..n_samples {
        let ti = dist.sample(rng, 1);
        let tj = dist.sample(rng, 2);
        total += (pair_gradient(&theta, &ti, &tj) - &f_prime).norm_squared();
    }
    Ok(total / n_samples as f64)
}

/// `L_ij = |phi_i^T phi_j| ||gamma phi_i' - phi_i|| ||gamma phi_j' - phi_j||`,
/// scaled by both importance ratios.
pub fn pair_lipschitz(ti: &Transition, tj: &Transition) -> f64 {
    ti.rho * tj.rho * ti.phi.dot(&tj.phi).abs() * ti.td_gradient().norm() * tj.td_gradient().norm()
}

/// Largest `L_ij` over `a x b`.
fn l_max_of(a: &[&Transition], b: &[&Transition]) -> f64 {
    let mut best = 0.0f64;
    for ti in a {
        for tj in b {
            best = best.max(pair_lipschitz(ti, tj));
        }
    }
    best
}

/// Largest `L_ij` over `i` in `B1`, `j` in `B2`. Repeated
/// `(state, next_state, rho)` triples are evaluated once.
pub fn l_max(buffers: &TwinBuffers) -> f64 {
    fn unique<'a>(it: impl Iterator<Item = &'a Transition>) -> Vec<&'a Transition> {
        let mut seen = HashMap::new();
        for t in it {
            seen.entry((t.state, t.next_state, t.rho.to_bits(), t.discount.to_bits())).or_insert(t);
        }
        seen.into_values().collect()
    }
    let a = unique(buffers.b1().iter());
    let b = unique(buffers.b2().iter());
    l_max_of(&a, &b)
}

/// Largest `L_ij` over every pair of support points of the sampling
/// distribution.
pub fn l_max_support(dist: &TransitionDistribution) -> f64 {
    let support: Vec<Transition> = dist.support().into_iter().map(|(_, t)| t).collect();
    let refs: Vec<&Transition> = support.iter().collect();
    l_max_of(&refs, &refs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(mu: f64, l: f64, lambda: f64, sigma2: f64, sigma_v2: f64) -> ProblemConstants {
        ProblemConstants {
            m1: 1,
            m2: 1,
            mu,
            norm_a: 1.0,
            norm_sigma_a: 0.0,
            norm_sigma_b: 0.0,
            l1: l,
            l2: 0.0,
            l,
            lambda,
            sigma2,
            sigma_v2,
            l_max: None,
            theta_star: Vector::zeros(1),
        }
    }

    #[test]
    fn one_step_exact_case() {
        let p = rate_predictor(&consts(1.0, 1.0, 0.0, 0.0, 0.0), 1.0, 1).unwrap().linear().unwrap();
        assert_eq!(p.q, 0.0);
        assert_eq!(p.bias, 0.0);
    }

    #[test]
    fn boundary_lambda_still_linear() {
        let (mu, l, alpha) = (0.5, 2.0, 0.25);
        let p = rate_predictor(&consts(mu, l, l * mu, 0.0, 0.0), alpha, 1).unwrap().linear().unwrap();
        let expected = 1.0 - mu * mu * alpha * (1.0 / l - alpha);
        assert!((p.q - expected).abs() < 1e-15 && p.q > 0.0 && p.q < 1.0);
    }

    #[test]
    fn too_large_step_and_no_guarantee() {
        let c = consts(0.5, 2.0, 0.0, 0.0, 0.0);
        assert!(matches!(rate_predictor(&c, 0.6, 1), Err(AnalysisError::StepTooLarge { .. })));
        let c = consts(0.5, 2.0, 1.5, 0.0, 0.0);
        assert!(matches!(rate_predictor(&c, 0.1, 1), Ok(RateOutcome::NoGuarantee { .. })));
    }

    #[test]
    fn zero_variance_constants() {
        let (l1, l2, lambda, sigma2) = l_lambda_terms(2.0, 0.0, 0.0, 3.0, 4.0, 4.0);
        assert_eq!((l1, l2, lambda, sigma2), (16.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_variance_threshold_is_one() {
        let c = consts(0.5, 2.0, 0.0, 0.0, 0.0);
        assert_eq!(batch_threshold(&c).unwrap(), BatchThreshold { exact: 1, sufficient: 1 });
    }

    #[test]
    fn bound_edge_cases() {
        let c = consts(0.5, 2.0, 0.0, 0.0, 1.0).with_l_max(1.0);
        assert_eq!(one_over_t_bound(&c, 1.0, 10, 0.0, 1, 1).unwrap(), 0.0);
        assert_eq!(one_over_t_bound(&c, 1.0, 1_000_000_000, 5.0, 1, 1).unwrap(), 0.0);
        assert!(one_over_t_bound(&c, 2.5, 10, 5.0, 1, 1).is_err());
    }

    #[test]
    fn orthogonal_pair_has_zero_lipschitz() {
        let mk = |phi: Vec<f64>| Transition {
            phi: Vector::from_vec(phi),
            phi_next: Vector::zeros(2),
            reward: 0.0,
            rho: 1.0,
            discount: 0.9,
            episode_idx: 0,
            state: 0,
            next_state: 0,
        };
        assert_eq!(pair_lipschitz(&mk(vec![1.0, 0.0]), &mk(vec![0.0, 1.0])), 0.0);
        // phi = (1, 1), phi' = 0: |2| * sqrt(2) * sqrt(2) = 4
        let t = mk(vec![1.0, 1.0]);
        assert!((pair_lipschitz(&t, &t) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn table_rows_match_lemma6_at_matching_batches() {
        let rows = variance_table(2.0, 1.0, 0.1, 8, 100);
        let (l1, l2, lambda, _) = l_lambda_terms(1.0, 2.0, 0.0, 0.0, 8.0, 8.0);
        assert!((rows[0].l1_excess - (l1 - 4.0)).abs() < 1e-12);
        assert!((rows[0].l2 - l2).abs() < 1e-12 && (rows[0].lambda - lambda).abs() < 1e-12);
        let (l1, l2, lambda, _) = l_lambda_terms(1.0, 2.0, 0.0, 0.0, 100.0, 1.0);
        assert!((rows[2].l1_excess - (l1 - 4.0)).abs() < 1e-12);
        assert!((rows[2].l2 - l2).abs() < 1e-12 && (rows[2].lambda - lambda).abs() < 1e-12);
    }
}
