//! Objectives and value-error metrics, theory constants and rate predictors,
//! series post-processing, and Monte-Carlo verification oracles.

pub mod oracles;
pub mod series;
pub mod theory;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::buffers::TwinBuffers;
use crate::envs::Benchmark;
use crate::linalg::{Matrix, Vector};
use crate::mdp::{ExpectedMatrices, MdpError, TransitionDistribution};

pub use series::{bias_subtracted_series, linear_rate_fit, LinearFit};
pub use theory::{
    batch_threshold, l_max, l_max_support, one_over_t_bound, pair_lipschitz, per_algorithm_rates,
    rate_predictor, sigma_v2_estimate, sigma_v2_exact, smoothness_constants, variance_table, AlgorithmRate,
    BatchThreshold, PerAlgorithmRates, ProblemConstants, RateOutcome, RatePrediction, VarianceRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("ill-conditioned preconditioner")]
    IllConditioned,
    #[error("step-size {alpha} exceeds the admissible bound {bound}")]
    StepTooLarge { alpha: f64, bound: f64 },
    #[error("strong quasi-convexity constant is zero (singular A)")]
    SingularA,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmsve,
    Rmspbe,
    Neu,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rmsve => "rmsve",
            Metric::Rmspbe => "rmspbe",
            Metric::Neu => "neu",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rmsve" => Ok(Metric::Rmsve),
            "rmspbe" => Ok(Metric::Rmspbe),
            "neu" => Ok(Metric::Neu),
            _ => Err(format!("unknown metric '{s}'")),
        }
    }
}

/// Root-mean-squared value error, uniform over the given states.
pub fn rmsve_against(theta: &Vector, phi: &Matrix, values: &Vector, states: &[usize]) -> f64 {
    let sq: f64 = states
        .iter()
        .map(|&s| {
            let e = values[s] - phi.row(s).dot(&theta.transpose());
            e * e
        })
        .sum();
    (sq / states.len() as f64).sqrt()
}

pub fn rmsve(theta: &Vector, benchmark: &Benchmark) -> Result<f64, AnalysisError> {
    let v = benchmark.true_values()?;
    Ok(rmsve_against(theta, benchmark.features.phi(), &v, &benchmark.mdp.non_terminal_states()))
}

fn c_inverse(c: &Matrix) -> Result<Matrix, AnalysisError> {
    let cond_ok = crate::linalg::min_singular_value(c) > 1e-12 * crate::linalg::spectral_norm(c).max(1.0);
    if !cond_ok {
        return Err(AnalysisError::IllConditioned);
    }
    c.clone().try_inverse().ok_or(AnalysisError::IllConditioned)
}

/// `(A theta + b)^T C^-1 (A theta + b)`
pub fn mspbe(theta: &Vector, mats: &ExpectedMatrices) -> Result<f64, AnalysisError> {
    let e = mats.expected_update(theta);
    let c_inv = c_inverse(&mats.c)?;
    Ok(e.dot(&(c_inv * &e)))
}

pub fn rmspbe(theta: &Vector, mats: &ExpectedMatrices) -> Result<f64, AnalysisError> {
    Ok(mspbe(theta, mats)?.max(0.0).sqrt())
}

/// Norm of the expected TD update, squared: `||A theta + b||^2`.
pub fn neu(theta: &Vector, mats: &ExpectedMatrices) -> f64 {
    mats.expected_update(theta).norm_squared()
}

/// `2 A^T (A theta + b)`
pub fn neu_grad(theta: &Vector, mats: &ExpectedMatrices) -> Vector {
    mats.a.tr_mul(&mats.expected_update(theta)) * 2.0
}

/// Pairwise empirical NEU over the two buffers: the mean over all
/// `(s1, s2) in B1 x B2` of `phi1^T phi2 rho1 delta1 rho2 delta2`.
/// `None` while either buffer is empty.
pub fn empirical_neu(theta: &Vector, buffers: &TwinBuffers) -> Option<f64> {
    let (n1, n2) = (buffers.len1(), buffers.len2());
    if n1 == 0 || n2 == 0 {
        return None;
    }
    let scaled2: Vec<(f64, &Vector)> =
        buffers.b2().iter().map(|t| (t.rho * t.td_error(theta), &t.phi)).collect();
    let mut total = 0.0;
    for t1 in buffers.b1() {
        let d1 = t1.rho * t1.td_error(theta);
        for (d2, phi2) in &scaled2 {
            total += t1.phi.dot(phi2) * d1 * d2;
        }
    }
    Some(total / (n1 * n2) as f64)
}

/// Exact `N(theta) = E[sim(s1, s2) rho1 delta1 rho2 delta2]` over two
/// independent transitions, with `sim(s1, s2) = phi1^T U phi2`.
pub fn similarity_objective(theta: &Vector, dist: &TransitionDistribution, u: &Matrix) -> f64 {
    let support = dist.support();
    let terms: Vec<(f64, Vector, f64)> = support
        .iter()
        .map(|(p, t)| (*p, u * &t.phi, t.rho * t.td_error(theta)))
        .collect();
    let mut total = 0.0;
    for (p1, t1) in &support {
        let d1 = t1.rho * t1.td_error(theta);
        for (p2, u_phi2, d2) in &terms {
            total += p1 * p2 * t1.phi.dot(u_phi2) * d1 * d2;
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// `N(theta)` with `sim = phi1^T C^-1 phi2`.
    pub n_preconditioned: f64,
    pub mspbe: f64,
    /// `N(theta)` with `sim = phi1^T phi2`.
    pub n_identity: f64,
    pub neu: f64,
    pub abs_diff: f64,
}

/// Compares the similarity objective against MSPBE (preconditioned
/// similarity) and NEU (dot-product similarity), all exact.
pub fn mspbe_equivalence_check(
    theta: &Vector,
    mats: &ExpectedMatrices,
    dist: &TransitionDistribution,
) -> Result<EquivalenceReport, AnalysisError> {
    let c_inv = c_inverse(&mats.c)?;
    let d = theta.len();
    let n_pre = similarity_objective(theta, dist, &c_inv);
    let n_id = similarity_objective(theta, dist, &Matrix::identity(d, d));
    let m = mspbe(theta, mats)?;
    Ok(EquivalenceReport {
        n_preconditioned: n_pre,
        mspbe: m,
        n_identity: n_id,
        neu: neu(theta, mats),
        abs_diff: (n_pre - m).abs(),
    })
}

/// Precomputed per-benchmark state for evaluating metrics repeatedly.
#[derive(Debug, Clone)]
pub struct Evaluator {
    phi: Matrix,
    values: Vector,
    states: Vec<usize>,
    mats: ExpectedMatrices,
    c_inv: Option<Matrix>,
}

impl Evaluator {
    pub fn new(benchmark: &Benchmark) -> Result<Self, AnalysisError> {
        let mats = benchmark.matrices()?;
        Ok(Self {
            phi: benchmark.features.phi().clone(),
            values: benchmark.true_values()?,
            states: benchmark.mdp.non_terminal_states(),
            c_inv: c_inverse(&mats.c).ok(),
            mats,
        })
    }

    pub fn matrices(&self) -> &ExpectedMatrices {
        &self.mats
    }

    pub fn rmsve(&self, theta: &Vector) -> f64 {
        rmsve_against(theta, &self.phi, &self.values, &self.states)
    }

    pub fn neu(&self, theta: &Vector) -> f64 {
        neu(theta, &self.mats)
    }

    /// NaN when `C` is singular.
    pub fn rmspbe(&self, theta: &Vector) -> f64 {
        match &self.c_inv {
            Some(ci) => {
                let e = self.mats.expected_update(theta);
                e.dot(&(ci * &e)).max(0.0).sqrt()
            }
            None => f64::NAN,
        }
    }

    pub fn metric(&self, metric: Metric, theta: &Vector) -> f64 {
        match metric {
            Metric::Rmsve => self.rmsve(theta),
            Metric::Rmspbe => self.rmspbe(theta),
            Metric::Neu => self.neu(theta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_mats(a: f64, b: f64, c: f64) -> ExpectedMatrices {
        ExpectedMatrices {
            a: Matrix::from_element(1, 1, a),
            b: Vector::from_element(1, b),
            c: Matrix::from_element(1, 1, c),
            d: Matrix::from_element(1, 1, a + c),
            occupancy: Vector::from_element(1, 1.0),
        }
    }

    #[test]
    fn scalar_rmspbe() {
        let m = scalar_mats(-1.0, 1.0, 2.0);
        let r = rmspbe(&Vector::zeros(1), &m).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmspbe(&Vector::from_element(1, 1.0), &m).unwrap(), 0.0);
    }

    #[test]
    fn singular_c_is_rejected() {
        let m = scalar_mats(-1.0, 1.0, 0.0);
        assert_eq!(rmspbe(&Vector::zeros(1), &m), Err(AnalysisError::IllConditioned));
    }

    #[test]
    fn tabular_offset_rmsve() {
        let phi = Matrix::identity(3, 3);
        let v = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let theta = v.add_scalar(0.25);
        assert!((rmsve_against(&theta, &phi, &v, &[0, 1, 2]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn metric_names() {
        for m in [Metric::Rmsve, Metric::Rmspbe, Metric::Neu] {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
        }
    }
}
