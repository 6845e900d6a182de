//! Linear policy-evaluation learners behind one stepping interface.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffers::{sample_uniform, Aggregate, BatchPair, TwinBuffers};
use crate::linalg::{Matrix, Vector};
use crate::mdp::Transition;

/// `||theta||` above which a run counts as diverged.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Td,
    MinibatchTd,
    Gtd,
    Gtd2,
    Tdc,
    Tdrc,
    Htd,
    Vtrace,
    ImpressionGtd,
    ExpectedGtd,
    AtopTd,
    R1Gtd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 12] = [
        Algorithm::Td,
        Algorithm::MinibatchTd,
        Algorithm::Gtd,
        Algorithm::Gtd2,
        Algorithm::Tdc,
        Algorithm::Tdrc,
        Algorithm::Htd,
        Algorithm::Vtrace,
        Algorithm::ImpressionGtd,
        Algorithm::ExpectedGtd,
        Algorithm::AtopTd,
        Algorithm::R1Gtd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Td => "td",
            Algorithm::MinibatchTd => "minibatch-td",
            Algorithm::Gtd => "gtd",
            Algorithm::Gtd2 => "gtd2",
            Algorithm::Tdc => "tdc",
            Algorithm::Tdrc => "tdrc",
            Algorithm::Htd => "htd",
            Algorithm::Vtrace => "vtrace",
            Algorithm::ImpressionGtd => "impression-gtd",
            Algorithm::ExpectedGtd => "expected-gtd",
            Algorithm::AtopTd => "atop-td",
            Algorithm::R1Gtd => "r1-gtd",
        }
    }

    fn has_helper(self) -> bool {
        matches!(
            self,
            Algorithm::Gtd | Algorithm::Gtd2 | Algorithm::Tdc | Algorithm::Tdrc | Algorithm::Htd
        )
    }

    fn has_aggregate(self) -> bool {
        matches!(self, Algorithm::AtopTd | Algorithm::R1Gtd)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown algorithm '{0}'")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub alpha: f64,
    /// Helper step-size; 0 means `eta * alpha`.
    pub beta: f64,
    pub eta: f64,
    /// l2 penalty on the TDRC helper.
    pub reg: f64,
    pub m1: usize,
    pub m2: usize,
    /// Importance-ratio cap for Vtrace.
    pub clip: f64,
    /// Average the update over both buffer orderings (Impression / Expected GTD).
    pub symmetric: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { alpha: 0.01, beta: 0.0, eta: 1.0, reg: 1.0, m1: 1, m2: 1, clip: 1.0, symmetric: false }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperparamError {
    #[error("alpha must be positive and finite, got {0}")]
    Alpha(f64),
    #[error("beta must be non-negative, got {0}")]
    Beta(f64),
    #[error("batch sizes must be at least 1")]
    Batch,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), HyperparamError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(HyperparamError::Alpha(self.alpha));
        }
        if !(self.beta >= 0.0) {
            return Err(HyperparamError::Beta(self.beta));
        }
        if self.m1 == 0 || self.m2 == 0 {
            return Err(HyperparamError::Batch);
        }
        Ok(())
    }

    pub fn helper_step(&self) -> f64 {
        if self.beta > 0.0 {
            self.beta
        } else {
            self.eta * self.alpha
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnerState {
    pub theta: Vector,
    /// `u` for GTD, `w` for GTD2/TDC/TDRC, `h` for HTD.
    pub helper: Option<Vector>,
    /// Running `A~`, `b~` over past transitions (A-top-TD, R1-GTD).
    pub aggregate: Option<Aggregate>,
    pub step_count: u64,
    pub diverged: bool,
}

impl LearnerState {
    pub fn new(algorithm: Algorithm, theta0: Vector) -> Self {
        let d = theta0.len();
        Self {
            helper: algorithm.has_helper().then(|| Vector::zeros(d)),
            aggregate: algorithm.has_aggregate().then(|| Aggregate::new(d)),
            theta: theta0,
            step_count: 0,
            diverged: false,
        }
    }

    fn check_divergence(&mut self) {
        if !self.theta.iter().all(|x| x.is_finite()) || self.theta.norm() > DIVERGENCE_NORM {
            self.diverged = true;
        }
    }

    fn helper_mut(&mut self) -> &mut Vector {
        self.helper.as_mut().expect("algorithm keeps a helper vector")
    }
}

/// Whether a step changed the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Updated,
    NotReady,
    Diverged,
}

/// Data available to a learner at one environment step.
pub struct StepInput<'a> {
    /// The transition just observed.
    pub transition: &'a Transition,
    pub buffers: &'a TwinBuffers,
    /// Single replay buffer for mini-batch TD.
    pub replay: &'a [Transition],
}

pub fn td_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) {
    let delta = t.td_error(&state.theta);
    state.theta.axpy(hp.alpha * t.rho * delta, &t.phi, 1.0);
}

pub fn vtrace_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) {
    let delta = t.td_error(&state.theta);
    state.theta.axpy(hp.alpha * t.rho.min(hp.clip) * delta, &t.phi, 1.0);
}

pub fn minibatch_td_step(state: &mut LearnerState, batch: &[&Transition], hp: &Hyperparams) {
    let mut update = Vector::zeros(state.theta.len());
    for t in batch {
        update.axpy(t.rho * t.td_error(&state.theta), &t.phi, 1.0);
    }
    state.theta.axpy(hp.alpha / batch.len() as f64, &update, 1.0);
}

pub fn gtd_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) {
    let delta = t.td_error(&state.theta);
    let u = state.helper.clone().expect("gtd helper");
    let g = t.td_gradient();
    state.theta.axpy(-hp.alpha * t.rho * t.phi.dot(&u), &g, 1.0);
    let beta = hp.helper_step();
    let target = &t.phi * (t.rho * delta);
    let helper = state.helper_mut();
    *helper += (target - &u) * beta;
}

pub fn gtd2_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) {
    let delta = t.td_error(&state.theta);
    let w = state.helper.clone().expect("gtd2 helper");
    let phi_w = t.phi.dot(&w);
    state.theta.axpy(-hp.alpha * t.rho * phi_w, &t.td_gradient(), 1.0);
    let beta = hp.helper_step();
    state.helper_mut().axpy(-beta * (phi_w - t.rho * delta), &t.phi, 1.0);
}

pub fn tdc_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) {
    let (delta, phi_w) = tdc_theta(state, t, hp);
    let beta = hp.helper_step();
    state.helper_mut().axpy(-beta * (phi_w - t.rho * delta), &t.phi, 1.0);
}

/// TDC weight update shared with TDRC; returns `(delta, phi^T w)` at the old state.
fn tdc_theta(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) -> (f64, f64) {
    let delta = t.td_error(&state.theta);
    let w = state.helper.as_ref().expect("tdc helper");
    let phi_w = t.phi.dot(w);
    let a = hp.alpha * t.rho;
    state.theta.axpy(a * delta, &t.phi, 1.0);
    state.theta.axpy(-a * t.discount * phi_w, &t.phi_next, 1.0);
    (delta, phi_w)
}

pub fn tdrc_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) {
    let (delta, phi_w) = tdc_theta(state, t, hp);
    let beta = hp.helper_step();
    let reg = hp.reg;
    let w = state.helper_mut();
    *w *= 1.0 - beta * reg;
    w.axpy(beta * (t.rho * delta - phi_w), &t.phi, 1.0);
}

/// Hybrid TD(0): a TD step plus a correction that vanishes when `rho = 1`.
pub fn htd_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) {
    let delta = t.td_error(&state.theta);
    let h = state.helper.clone().expect("htd helper");
    let neg_g = -t.td_gradient();
    let correction = (t.rho - 1.0) * neg_g.dot(&h);
    state.theta.axpy(hp.alpha * (t.rho * delta + correction), &t.phi, 1.0);
    let beta = hp.helper_step();
    let phi_h = t.phi.dot(&h);
    let w = state.helper_mut();
    w.axpy(beta * t.rho * delta, &t.phi, 1.0);
    w.axpy(-beta * phi_h, &neg_g, 1.0);
}

/// `(1/m) sum rho_j delta_j phi_j`
fn mean_td_update(batch: &[&Transition], theta: &Vector) -> Vector {
    let mut u = Vector::zeros(theta.len());
    for t in batch {
        u.axpy(t.rho * t.td_error(theta), &t.phi, 1.0);
    }
    u / batch.len() as f64
}

/// `(1/m1) sum_i rho_i (gamma phi_i' - phi_i) phi_i^T u_bar`, with `u_bar`
/// the mean TD update over `batch2`. This is the NEU descent direction's
/// negation; the step is `theta -= alpha * direction`.
pub fn impression_direction(theta: &Vector, batch1: &[&Transition], batch2: &[&Transition]) -> Vector {
    let u_bar = mean_td_update(batch2, theta);
    let mut dir = Vector::zeros(theta.len());
    for t in batch1 {
        dir.axpy(t.rho * t.phi.dot(&u_bar), &t.td_gradient(), 1.0);
    }
    dir / batch1.len() as f64
}

pub fn impression_gtd_step(state: &mut LearnerState, pair: &BatchPair<'_>, hp: &Hyperparams) {
    let mut dir = impression_direction(&state.theta, &pair.batch1, &pair.batch2);
    if hp.symmetric {
        dir += impression_direction(&state.theta, &pair.batch2, &pair.batch1);
        dir /= 2.0;
    }
    state.theta.axpy(-hp.alpha, &dir, 1.0);
}

/// `A1^T (A2 theta + b2)`
pub fn expected_direction(theta: &Vector, a1: &Matrix, a2: &Matrix, b2: &Vector) -> Vector {
    a1.tr_mul(&(a2 * theta + b2))
}

/// Full-buffer Expected GTD step. Returns false while either buffer is cold.
pub fn expected_gtd_step(state: &mut LearnerState, buffers: &TwinBuffers, hp: &Hyperparams) -> bool {
    if !buffers.is_warm() {
        return false;
    }
    let (Some((a1, b1)), Some((a2, b2))) = (buffers.aggregate1().mean(), buffers.aggregate2().mean())
    else {
        return false;
    };
    let mut dir = expected_direction(&state.theta, &a1, &a2, &b2);
    if hp.symmetric {
        dir += expected_direction(&state.theta, &a2, &a1, &b1);
        dir /= 2.0;
    }
    state.theta.axpy(-hp.alpha, &dir, 1.0);
    true
}

/// A-top-TD: `theta -= alpha A~^T rho delta phi`, with `A~` the average over
/// transitions seen before `t`. The current transition joins the aggregate
/// afterwards. Returns false when no prior transitions exist.
pub fn atop_td_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) -> bool {
    let agg = state.aggregate.as_mut().expect("atop-td aggregate");
    let prior = agg.mean();
    agg.add(t);
    let Some((a, _)) = prior else { return false };
    let delta = t.td_error(&state.theta);
    let dir = a.tr_mul(&(&t.phi * (t.rho * delta)));
    state.theta.axpy(-hp.alpha, &dir, 1.0);
    true
}

/// Rank-1 GTD: `theta -= alpha rho (gamma phi' - phi) phi^T (A~ theta + b~)`.
pub fn r1gtd_step(state: &mut LearnerState, t: &Transition, hp: &Hyperparams) -> bool {
    let agg = state.aggregate.as_mut().expect("r1-gtd aggregate");
    let prior = agg.mean();
    agg.add(t);
    let Some((a, b)) = prior else { return false };
    let v = a * &state.theta + b;
    let scale = t.rho * t.phi.dot(&v);
    state.theta.axpy(-hp.alpha * scale, &t.td_gradient(), 1.0);
    true
}

/// An algorithm, its hyperparameters and its evolving state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub algorithm: Algorithm,
    pub hp: Hyperparams,
    pub state: LearnerState,
}

impl Learner {
    pub fn new(algorithm: Algorithm, hp: Hyperparams, theta0: Vector) -> Self {
        Self { algorithm, hp, state: LearnerState::new(algorithm, theta0) }
    }

    pub fn theta(&self) -> &Vector {
        &self.state.theta
    }

    pub fn diverged(&self) -> bool {
        self.state.diverged
    }

    /// Advances by one environment step. Diverged learners are frozen.
    pub fn step<R: Rng + ?Sized>(&mut self, input: &StepInput<'_>, rng: &mut R) -> StepOutcome {
        if self.state.diverged {
            return StepOutcome::Diverged;
        }
        let hp = self.hp;
        let t = input.transition;
        let s = &mut self.state;
        let updated = match self.algorithm {
            Algorithm::Td => {
                td_step(s, t, &hp);
                true
            }
            Algorithm::Vtrace => {
                vtrace_step(s, t, &hp);
                true
            }
            Algorithm::Gtd => {
                gtd_step(s, t, &hp);
                true
            }
            Algorithm::Gtd2 => {
                gtd2_step(s, t, &hp);
                true
            }
            Algorithm::Tdc => {
                tdc_step(s, t, &hp);
                true
            }
            Algorithm::Tdrc => {
                tdrc_step(s, t, &hp);
                true
            }
            Algorithm::Htd => {
                htd_step(s, t, &hp);
                true
            }
            Algorithm::MinibatchTd => {
                let warm = input.replay.len() > input.buffers.warmup();
                match sample_uniform(input.replay, hp.m1, rng) {
                    Ok(batch) if warm => {
                        minibatch_td_step(s, &batch, &hp);
                        true
                    }
                    _ => false,
                }
            }
            Algorithm::ImpressionGtd => match input.buffers.sample_pair(hp.m1, hp.m2, rng) {
                Ok(pair) => {
                    impression_gtd_step(s, &pair, &hp);
                    true
                }
                Err(_) => false,
            },
            Algorithm::ExpectedGtd => expected_gtd_step(s, input.buffers, &hp),
            Algorithm::AtopTd => atop_td_step(s, t, &hp),
            Algorithm::R1Gtd => r1gtd_step(s, t, &hp),
        };
        if !updated {
            return StepOutcome::NotReady;
        }
        s.step_count += 1;
        s.check_divergence();
        if s.diverged {
            StepOutcome::Diverged
        } else {
            StepOutcome::Updated
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1(phi: f64, phi_next: f64, r: f64, gamma: f64) -> Transition {
        Transition {
            phi: Vector::from_element(1, phi),
            phi_next: Vector::from_element(1, phi_next),
            reward: r,
            rho: 1.0,
            discount: gamma,
            episode_idx: 0,
            state: 0,
            next_state: 0,
        }
    }

    fn hp(alpha: f64, beta: f64) -> Hyperparams {
        Hyperparams { alpha, beta, ..Hyperparams::default() }
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("q-learning".parse::<Algorithm>(), Err(UnknownAlgorithm("q-learning".into())));
    }

    #[test]
    fn td_hand_case() {
        let mut s = LearnerState::new(Algorithm::Td, Vector::zeros(1));
        td_step(&mut s, &t1(1.0, 0.0, 1.0, 0.9), &hp(0.5, 0.0));
        assert_eq!(s.theta[0], 0.5);
    }

    #[test]
    fn gtd_hand_case() {
        let mut s = LearnerState::new(Algorithm::Gtd, Vector::from_element(1, 1.0));
        s.helper = Some(Vector::from_element(1, 2.0));
        gtd_step(&mut s, &t1(1.0, 1.0, 0.0, 0.9), &hp(0.1, 0.5));
        assert!((s.theta[0] - 1.02).abs() < 1e-12);
        assert!((s.helper.unwrap()[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn gtd2_hand_case() {
        // delta = -0.1, phi^T w = 2: theta = 1 - 0.1 * (-0.1) * 2, w = 2 - 0.5 * (2 + 0.1)
        let mut s = LearnerState::new(Algorithm::Gtd2, Vector::from_element(1, 1.0));
        s.helper = Some(Vector::from_element(1, 2.0));
        gtd2_step(&mut s, &t1(1.0, 1.0, 0.0, 0.9), &hp(0.1, 0.5));
        assert!((s.theta[0] - 1.02).abs() < 1e-12);
        assert!((s.helper.unwrap()[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn tdc_hand_case() {
        // theta = 1 + 0.1 * (-0.1 - 0.9 * 2) = 0.81
        let mut s = LearnerState::new(Algorithm::Tdc, Vector::from_element(1, 1.0));
        s.helper = Some(Vector::from_element(1, 2.0));
        tdc_step(&mut s, &t1(1.0, 1.0, 0.0, 0.9), &hp(0.1, 0.5));
        assert!((s.theta[0] - 0.81).abs() < 1e-12);
        assert!((s.helper.unwrap()[0] - 0.95).abs() < 1e-12);
    }

    #[test]
    fn tdrc_hand_case() {
        // w = 2 (1 - 0.5 * 1) + 0.5 * (-0.1 - 2) = -0.05
        let mut s = LearnerState::new(Algorithm::Tdrc, Vector::from_element(1, 1.0));
        s.helper = Some(Vector::from_element(1, 2.0));
        tdrc_step(&mut s, &t1(1.0, 1.0, 0.0, 0.9), &hp(0.1, 0.5));
        assert!((s.theta[0] - 0.81).abs() < 1e-12);
        assert!((s.helper.unwrap()[0] + 0.05).abs() < 1e-12);
    }

    #[test]
    fn htd_hand_case() {
        // rho = 2, delta = -0.1, h = 2, phi - gamma phi' = 0.1:
        // theta = 1 + 0.1 * (2 * -0.1 + 1 * 0.1 * 2) = 1
        // h = 2 + 0.5 * (2 * -0.1 - 0.1 * 2) = 1.8
        let mut s = LearnerState::new(Algorithm::Htd, Vector::from_element(1, 1.0));
        s.helper = Some(Vector::from_element(1, 2.0));
        let mut t = t1(1.0, 1.0, 0.0, 0.9);
        t.rho = 2.0;
        htd_step(&mut s, &t, &hp(0.1, 0.5));
        assert!((s.theta[0] - 1.0).abs() < 1e-12);
        assert!((s.helper.unwrap()[0] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn vtrace_clips() {
        let mut t = t1(1.0, 0.0, 1.0, 0.9);
        t.rho = 7.0;
        let mut s = LearnerState::new(Algorithm::Vtrace, Vector::zeros(1));
        vtrace_step(&mut s, &t, &hp(0.5, 0.0));
        assert_eq!(s.theta[0], 0.5);
    }

    #[test]
    fn impression_hand_case() {
        let a = Transition {
            phi: Vector::from_vec(vec![1.0, 0.0]),
            phi_next: Vector::from_vec(vec![0.0, 1.0]),
            reward: 0.0,
            rho: 1.0,
            discount: 0.9,
            episode_idx: 1,
            state: 0,
            next_state: 1,
        };
        let b = Transition {
            phi: Vector::from_vec(vec![1.0, 0.0]),
            phi_next: Vector::zeros(2),
            reward: 1.0,
            episode_idx: 2,
            ..a.clone()
        };
        let mut s = LearnerState::new(Algorithm::ImpressionGtd, Vector::zeros(2));
        let pair = BatchPair { batch1: vec![&a], batch2: vec![&b] };
        impression_gtd_step(&mut s, &pair, &hp(1.0, 0.0));
        assert!((s.theta[0] - 1.0).abs() < 1e-12 && (s.theta[1] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn aggregate_learners_skip_first_step() {
        let t = t1(1.0, 0.0, 1.0, 0.9);
        for alg in [Algorithm::AtopTd, Algorithm::R1Gtd] {
            let mut s = LearnerState::new(alg, Vector::zeros(1));
            let f = if alg == Algorithm::AtopTd { atop_td_step } else { r1gtd_step };
            assert!(!f(&mut s, &t, &hp(0.5, 0.0)));
            assert_eq!(s.theta[0], 0.0);
            // A~ = [-1], b~ = [1]; delta = 1.
            assert!(f(&mut s, &t, &hp(0.5, 0.0)));
            assert!((s.theta[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_flag_freezes() {
        let t = t1(1.0, 1.0, 1e9, 0.9);
        let buffers = TwinBuffers::new(1, 0);
        let input = StepInput { transition: &t, buffers: &buffers, replay: &[] };
        let mut l = Learner::new(Algorithm::Td, hp(1.0, 0.0), Vector::zeros(1));
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        assert_eq!(l.step(&input, &mut rng), StepOutcome::Diverged);
        let before = l.theta().clone();
        assert_eq!(l.step(&input, &mut rng), StepOutcome::Diverged);
        assert_eq!(l.theta(), &before);
    }
}
