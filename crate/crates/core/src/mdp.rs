//! Finite MDPs, policies, linear features, episode simulation and the exact
//! model-level quantities (true values, occupancy, `A`, `b`, `C`, `D`,
//! elementwise standard deviations of the sampled `A`/`b` terms).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{max_abs, min_singular_value, Matrix, Vector};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Hard cap on episode length for episodic models.
pub const DEFAULT_STEP_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid features: {0}")]
    InvalidFeatures(String),
    #[error("non-contractive chain")]
    NonContractive,
    #[error("no unique TD solution")]
    NoUniqueSolution,
    #[error("occupancy solve did not converge")]
    OccupancyFailed,
    #[error("non-terminating episode (exceeded {0} steps)")]
    NonTerminating(usize),
}

pub type Result<T> = std::result::Result<T, MdpError>;

/// A finite MDP. Terminal states are absorbing with zero reward.
#[derive(Debug, Clone)]
pub struct MdpModel {
    n_states: usize,
    n_actions: usize,
    /// `transition[a][(s, s')] = P(s' | s, a)`
    transition: Vec<Matrix>,
    /// `reward[a][(s, s')] = r(s, a, s')`
    reward: Vec<Matrix>,
    gamma: f64,
    start_dist: Vector,
    terminals: Vec<bool>,
}

impl MdpModel {
    /// Validates and builds a model.
    ///
    /// `gamma` may equal 1 only for episodic models (at least one terminal),
    /// where the value system restricted to non-terminal states is still
    /// solvable as long as every policy of interest terminates.
    pub fn new(
        transition: Vec<Matrix>,
        reward: Vec<Matrix>,
        gamma: f64,
        start_dist: Vector,
        terminals: Vec<bool>,
    ) -> Result<Self> {
        let n_actions = transition.len();
        if n_actions == 0 {
            return Err(MdpError::InvalidModel("no actions".into()));
        }
        let n_states = start_dist.len();
        if terminals.len() != n_states {
            return Err(MdpError::InvalidModel("terminal mask length mismatch".into()));
        }
        if reward.len() != n_actions {
            return Err(MdpError::InvalidModel("reward tensor has wrong action count".into()));
        }
        let episodic = terminals.iter().any(|&t| t);
        let gamma_ok = gamma > 0.0 && (gamma < 1.0 || (gamma == 1.0 && episodic));
        if !gamma_ok {
            return Err(MdpError::InvalidModel(format!("discount {gamma} out of range")));
        }
        for (a, (p, r)) in transition.iter().zip(&reward).enumerate() {
            if p.shape() != (n_states, n_states) || r.shape() != (n_states, n_states) {
                return Err(MdpError::InvalidModel(format!("action {a}: tensor shape mismatch")));
            }
            for s in 0..n_states {
                let row = p.row(s);
                if row.iter().any(|&x| !(0.0..=1.0 + STOCHASTIC_TOL).contains(&x)) {
                    return Err(MdpError::InvalidModel(format!("P(.|{s},{a}) has invalid entries")));
                }
                if (row.sum() - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(MdpError::InvalidModel(format!("P(.|{s},{a}) does not sum to 1")));
                }
                if terminals[s] {
                    if (p[(s, s)] - 1.0).abs() > STOCHASTIC_TOL || r[(s, s)] != 0.0 {
                        return Err(MdpError::InvalidModel(format!(
                            "terminal state {s} must self-loop with zero reward"
                        )));
                    }
                }
                if r.row(s).iter().any(|x| !x.is_finite()) {
                    return Err(MdpError::InvalidModel("non-finite reward".into()));
                }
            }
        }
        if start_dist.iter().any(|&x| x < 0.0) || (start_dist.sum() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(MdpError::InvalidModel("start distribution is not a distribution".into()));
        }
        Ok(Self { n_states, n_actions, transition, reward, gamma, start_dist, terminals })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn start_dist(&self) -> &Vector {
        &self.start_dist
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminals[s]
    }

    pub fn terminals(&self) -> &[bool] {
        &self.terminals
    }

    pub fn is_episodic(&self) -> bool {
        self.terminals.iter().any(|&t| t)
    }

    pub fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| !self.terminals[s]).collect()
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[a][(s, next)]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward[a][(s, next)]
    }

    /// State-to-state kernel under `policy`.
    pub fn policy_transition(&self, policy: &Policy) -> Matrix {
        let mut p = Matrix::zeros(self.n_states, self.n_states);
        for a in 0..self.n_actions {
            for s in 0..self.n_states {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                for s2 in 0..self.n_states {
                    p[(s, s2)] += pa * self.transition[a][(s, s2)];
                }
            }
        }
        p
    }

    /// Expected one-step reward under `policy`.
    pub fn policy_reward(&self, policy: &Policy) -> Vector {
        Vector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions)
                .map(|a| {
                    let pa = policy.prob(s, a);
                    if pa == 0.0 {
                        return 0.0;
                    }
                    pa * (0..self.n_states)
                        .map(|s2| self.transition[a][(s, s2)] * self.reward[a][(s, s2)])
                        .sum::<f64>()
                })
                .sum()
        })
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(MdpError::InvalidPolicy("policy shape does not match model".into()));
        }
        Ok(())
    }

    fn check_features(&self, features: &FeatureMap) -> Result<()> {
        if features.n_states() != self.n_states {
            return Err(MdpError::InvalidFeatures("feature rows do not match state count".into()));
        }
        for s in 0..self.n_states {
            if self.terminals[s] && features.phi().row(s).iter().any(|&x| x != 0.0) {
                return Err(MdpError::InvalidFeatures(format!(
                    "terminal state {s} must have zero features"
                )));
            }
        }
        Ok(())
    }
}

/// Stochastic policy `pi(a|s)` stored as a states x actions matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Matrix,
}

impl Policy {
    pub fn new(probs: Matrix) -> Result<Self> {
        for s in 0..probs.nrows() {
            let row = probs.row(s);
            if row.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(MdpError::InvalidPolicy(format!("row {s} has negative entries")));
            }
            if (row.sum() - 1.0).abs() > STOCHASTIC_TOL {
                return Err(MdpError::InvalidPolicy(format!("row {s} does not sum to 1")));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { probs: Matrix::from_element(n_states, n_actions, 1.0 / n_actions as f64) }
    }

    /// Same action distribution in every state.
    pub fn stationary(n_states: usize, action_probs: &[f64]) -> Result<Self> {
        let probs = Matrix::from_fn(n_states, action_probs.len(), |_, a| action_probs[a]);
        Self::new(probs)
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureVariant {
    Tabular,
    Inverted,
    Dependent,
    Interpolated,
    Baird,
}

/// Per-state feature vectors, one row per state.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    phi: Matrix,
    variant: FeatureVariant,
}

impl FeatureMap {
    pub fn new(phi: Matrix, variant: FeatureVariant) -> Result<Self> {
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(MdpError::InvalidFeatures("non-finite feature entry".into()));
        }
        Ok(Self { phi, variant })
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn of(&self, s: usize) -> Vector {
        self.phi.row(s).transpose()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_states(&self) -> usize {
        self.phi.nrows()
    }

    pub fn variant(&self) -> FeatureVariant {
        self.variant
    }

    /// Value estimate `phi(s)^T theta` for every state.
    pub fn values(&self, theta: &Vector) -> Vector {
        &self.phi * theta
    }
}

/// One observed transition `(phi, r, phi')` plus its importance ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub phi: Vector,
    pub phi_next: Vector,
    pub reward: f64,
    /// `pi(a|s) / pi_b(a|s)`
    pub rho: f64,
    /// Discount applied to the successor; the successor features are zero
    /// when the transition enters a terminal state.
    pub discount: f64,
    pub episode_idx: u64,
    pub state: usize,
    pub next_state: usize,
}

impl Transition {
    /// `r + gamma phi'^T theta - phi^T theta`
    pub fn td_error(&self, theta: &Vector) -> f64 {
        self.reward + self.discount * self.phi_next.dot(theta) - self.phi.dot(theta)
    }

    /// `gamma phi' - phi`
    pub fn td_gradient(&self) -> Vector {
        &self.phi_next * self.discount - &self.phi
    }
}

/// `A = E[phi (gamma phi' - phi)^T]`, `b = E[phi r]`, `C = E[phi phi^T]`,
/// `D = gamma E[phi phi'^T]`, with states weighted by `occupancy` and
/// transitions following the target policy.
#[derive(Debug, Clone)]
pub struct ExpectedMatrices {
    pub a: Matrix,
    pub b: Vector,
    pub c: Matrix,
    pub d: Matrix,
    pub occupancy: Vector,
}

impl ExpectedMatrices {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Expected TD update `A theta + b`.
    pub fn expected_update(&self, theta: &Vector) -> Vector {
        &self.a * theta + &self.b
    }
}

/// Solves `(I - gamma P_pi) V = r_pi` on the non-terminal states.
pub fn true_values(mdp: &MdpModel, policy: &Policy) -> Result<Vector> {
    mdp.check_policy(policy)?;
    let nt = mdp.non_terminal_states();
    let p = mdp.policy_transition(policy);
    let r = mdp.policy_reward(policy);
    let k = nt.len();
    let mut lhs = Matrix::identity(k, k);
    let mut rhs = Vector::zeros(k);
    for (i, &s) in nt.iter().enumerate() {
        rhs[i] = r[s];
        for (j, &s2) in nt.iter().enumerate() {
            lhs[(i, j)] -= mdp.gamma * p[(s, s2)];
        }
    }
    let sol = lhs.clone().lu().solve(&rhs).ok_or(MdpError::NonContractive)?;
    let residual = max_abs(&(&lhs * &sol - &rhs));
    if !sol.iter().all(|x| x.is_finite()) || residual > 1e-10 * (1.0 + max_abs(&rhs)) {
        return Err(MdpError::NonContractive);
    }
    let mut v = Vector::zeros(mdp.n_states);
    for (i, &s) in nt.iter().enumerate() {
        v[s] = sol[i];
    }
    Ok(v)
}

/// State-weighting distribution induced by `policy`: normalized expected
/// visit counts from the start distribution for episodic models, the
/// stationary distribution otherwise. Terminal entries are zero.
pub fn occupancy(mdp: &MdpModel, policy: &Policy) -> Result<Vector> {
    mdp.check_policy(policy)?;
    let p = mdp.policy_transition(policy);
    let n = mdp.n_states;
    let d = if mdp.is_episodic() {
        let nt = mdp.non_terminal_states();
        let k = nt.len();
        // visits^T = start^T (I - P_nt)^-1
        let mut lhs = Matrix::identity(k, k);
        let mut rhs = Vector::zeros(k);
        for (i, &s) in nt.iter().enumerate() {
            rhs[i] = mdp.start_dist[s];
            for (j, &s2) in nt.iter().enumerate() {
                lhs[(i, j)] -= p[(s2, s)];
            }
        }
        let visits = lhs.lu().solve(&rhs).ok_or(MdpError::OccupancyFailed)?;
        let mut d = Vector::zeros(n);
        for (i, &s) in nt.iter().enumerate() {
            d[s] = visits[i];
        }
        d
    } else {
        // (P^T - I) d = 0 with the last equation replaced by sum(d) = 1.
        let mut lhs = p.transpose() - Matrix::identity(n, n);
        for j in 0..n {
            lhs[(n - 1, j)] = 1.0;
        }
        let mut rhs = Vector::zeros(n);
        rhs[n - 1] = 1.0;
        lhs.lu().solve(&rhs).ok_or(MdpError::OccupancyFailed)?
    };
    let total = d.sum();
    if !total.is_finite() || total <= 0.0 || d.iter().any(|&x| x < -1e-9) {
        return Err(MdpError::OccupancyFailed);
    }
    Ok(d.map(|x| x.max(0.0)) / total)
}

/// Exact `A`, `b`, `C`, `D` under behavior-policy state weighting with
/// target-policy transitions (the importance-ratio-corrected expectation).
pub fn expected_matrices(
    mdp: &MdpModel,
    target: &Policy,
    behavior: &Policy,
    features: &FeatureMap,
) -> Result<ExpectedMatrices> {
    mdp.check_policy(target)?;
    mdp.check_features(features)?;
    let occ = occupancy(mdp, behavior)?;
    let phi = features.phi();
    let weighted = Matrix::from_diagonal(&occ);
    let p = mdp.policy_transition(target);
    let r = mdp.policy_reward(target);
    let c = phi.transpose() * &weighted * phi;
    let d = phi.transpose() * &weighted * &p * phi * mdp.gamma;
    let a = &d - &c;
    let b = phi.transpose() * weighted * r;
    Ok(ExpectedMatrices { a, b, c, d, occupancy: occ })
}

/// TD (LSTD) fixed point: solves `A theta + b = 0`.
pub fn td_solution(mats: &ExpectedMatrices) -> Result<Vector> {
    if min_singular_value(&mats.a) <= 1e-10 {
        return Err(MdpError::NoUniqueSolution);
    }
    let theta = mats.a.clone().lu().solve(&(-&mats.b)).ok_or(MdpError::NoUniqueSolution)?;
    Ok(theta)
}

/// One outcome `(s, a, s')` of the behavior-sampled transition distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    pub rho: f64,
}

/// Enumerated distribution of single transitions: `s ~ d_b`, `a ~ pi_b(.|s)`,
/// `s' ~ P(.|s, a)`, each tagged with its importance ratio.
#[derive(Debug, Clone)]
pub struct TransitionDistribution {
    outcomes: Vec<Outcome>,
    cumulative: Vec<f64>,
    features: FeatureMap,
    gamma: f64,
}

impl TransitionDistribution {
    pub fn new(
        mdp: &MdpModel,
        target: &Policy,
        behavior: &Policy,
        features: &FeatureMap,
    ) -> Result<Self> {
        mdp.check_policy(target)?;
        mdp.check_features(features)?;
        let occ = occupancy(mdp, behavior)?;
        let mut outcomes = Vec::new();
        for s in mdp.non_terminal_states() {
            if occ[s] == 0.0 {
                continue;
            }
            for a in 0..mdp.n_actions {
                let pb = behavior.prob(s, a);
                if pb == 0.0 {
                    continue;
                }
                let rho = target.prob(s, a) / pb;
                for s2 in 0..mdp.n_states {
                    let pt = mdp.transition[a][(s, s2)];
                    if pt == 0.0 {
                        continue;
                    }
                    outcomes.push(Outcome {
                        prob: occ[s] * pb * pt,
                        state: s,
                        action: a,
                        next_state: s2,
                        reward: mdp.reward[a][(s, s2)],
                        rho,
                    });
                }
            }
        }
        let mut acc = 0.0;
        let cumulative = outcomes
            .iter()
            .map(|o| {
                acc += o.prob;
                acc
            })
            .collect();
        Ok(Self { outcomes, cumulative, features: features.clone(), gamma: mdp.gamma })
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    /// Materializes an outcome as a transition record.
    pub fn transition(&self, o: &Outcome, episode_idx: u64) -> Transition {
        Transition {
            phi: self.features.of(o.state),
            phi_next: self.features.of(o.next_state),
            reward: o.reward,
            rho: o.rho,
            discount: self.gamma,
            episode_idx,
            state: o.state,
            next_state: o.next_state,
        }
    }

    /// All support points as transitions, paired with their probabilities.
    pub fn support(&self) -> Vec<(f64, Transition)> {
        self.outcomes.iter().map(|o| (o.prob, self.transition(o, 0))).collect()
    }

    /// Draws one outcome index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap_or(&1.0);
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.outcomes.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, episode_idx: u64) -> Transition {
        let i = self.sample_index(rng);
        self.transition(&self.outcomes[i], episode_idx)
    }
}

/// Elementwise standard deviations of the importance-weighted sample terms
/// `rho phi(i) (gamma phi'(j) - phi(j))` and `rho phi(i) r`.
pub fn sigma_matrices(
    mdp: &MdpModel,
    target: &Policy,
    behavior: &Policy,
    features: &FeatureMap,
) -> Result<(Matrix, Vector)> {
    let dist = TransitionDistribution::new(mdp, target, behavior, features)?;
    let d = features.dim();
    let mut m1 = Matrix::zeros(d, d);
    let mut m2 = Matrix::zeros(d, d);
    let mut v1 = Vector::zeros(d);
    let mut v2 = Vector::zeros(d);
    for (p, t) in dist.support() {
        let sample_a = (&t.phi * t.td_gradient().transpose()) * t.rho;
        let sample_b = &t.phi * (t.rho * t.reward);
        m1 += &sample_a * p;
        m2 += sample_a.map(|x| x * x) * p;
        v1 += &sample_b * p;
        v2 += sample_b.map(|x| x * x) * p;
    }
    let sigma_a = Matrix::from_fn(d, d, |i, j| (m2[(i, j)] - m1[(i, j)].powi(2)).max(0.0).sqrt());
    let sigma_b = Vector::from_fn(d, |i, _| (v2[i] - v1[i].powi(2)).max(0.0).sqrt());
    Ok((sigma_a, sigma_b))
}

/// Episode generator following the behavior policy.
///
/// Episodic models run until a terminal state (erroring past `step_cap`);
/// models without terminals are truncated after `horizon` steps.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub mdp: &'a MdpModel,
    pub behavior: &'a Policy,
    pub target: &'a Policy,
    pub features: &'a FeatureMap,
    pub horizon: Option<usize>,
    pub step_cap: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(
        mdp: &'a MdpModel,
        behavior: &'a Policy,
        target: &'a Policy,
        features: &'a FeatureMap,
    ) -> Self {
        Self { mdp, behavior, target, features, horizon: None, step_cap: DEFAULT_STEP_CAP }
    }

    pub fn with_horizon(mut self, horizon: Option<usize>) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn episode<R: Rng + ?Sized>(&self, episode_idx: u64, rng: &mut R) -> Result<Vec<Transition>> {
        let mdp = self.mdp;
        let mut s = categorical(mdp.start_dist.iter().cloned(), rng);
        let limit = match (mdp.is_episodic(), self.horizon) {
            (false, Some(h)) => h.min(self.step_cap),
            _ => self.step_cap,
        };
        let mut out = Vec::new();
        while !mdp.terminals[s] {
            if out.len() >= limit {
                if mdp.is_episodic() || self.horizon.is_none() {
                    return Err(MdpError::NonTerminating(self.step_cap));
                }
                break;
            }
            let a = categorical((0..mdp.n_actions).map(|a| self.behavior.prob(s, a)), rng);
            let s2 = categorical(mdp.transition[a].row(s).iter().cloned(), rng);
            out.push(Transition {
                phi: self.features.of(s),
                phi_next: self.features.of(s2),
                reward: mdp.reward[a][(s, s2)],
                rho: self.target.prob(s, a) / self.behavior.prob(s, a),
                discount: mdp.gamma,
                episode_idx,
                state: s,
                next_state: s2,
            });
            s = s2;
        }
        Ok(out)
    }
}

/// Seeded single-episode convenience wrapper around [`Simulator::episode`].
pub fn sample_episode(
    mdp: &MdpModel,
    behavior: &Policy,
    target: &Policy,
    features: &FeatureMap,
    horizon: Option<usize>,
    seed: u64,
) -> Result<Vec<Transition>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Simulator::new(mdp, behavior, target, features).with_horizon(horizon).episode(0, &mut rng)
}

fn categorical<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two non-terminal states swapping with probability 1/2, reward 1 on
    /// every move, no terminals.
    fn symmetric_chain(reward: f64) -> MdpModel {
        let p = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let r = Matrix::from_element(2, 2, reward);
        MdpModel::new(vec![p], vec![r], 0.9, Vector::from_vec(vec![1.0, 0.0]), vec![false, false])
            .unwrap()
    }

    fn self_loop() -> (MdpModel, Policy, FeatureMap) {
        let mdp = MdpModel::new(
            vec![Matrix::from_element(1, 1, 1.0)],
            vec![Matrix::from_element(1, 1, 1.0)],
            0.5,
            Vector::from_element(1, 1.0),
            vec![false],
        )
        .unwrap();
        let pol = Policy::uniform(1, 1);
        let feat = FeatureMap::new(Matrix::from_element(1, 1, 1.0), FeatureVariant::Tabular).unwrap();
        (mdp, pol, feat)
    }

    #[test]
    fn rejects_bad_rows_and_discounts() {
        let p = Matrix::from_row_slice(1, 1, &[0.9]);
        let r = Matrix::zeros(1, 1);
        let err = MdpModel::new(vec![p], vec![r.clone()], 0.9, Vector::from_element(1, 1.0), vec![false]);
        assert!(matches!(err, Err(MdpError::InvalidModel(_))));
        let p = Matrix::from_element(1, 1, 1.0);
        let err = MdpModel::new(vec![p], vec![r], 1.0, Vector::from_element(1, 1.0), vec![false]);
        assert!(matches!(err, Err(MdpError::InvalidModel(_))));
    }

    #[test]
    fn terminal_must_be_absorbing() {
        let p = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.5]);
        let r = Matrix::zeros(2, 2);
        let err = MdpModel::new(vec![p], vec![r], 0.9, Vector::from_vec(vec![1.0, 0.0]), vec![false, true]);
        assert!(err.is_err());
    }

    #[test]
    fn policy_rows_must_sum_to_one() {
        assert!(Policy::new(Matrix::from_row_slice(1, 2, &[0.3, 0.3])).is_err());
        assert!(Policy::new(Matrix::from_row_slice(1, 2, &[-0.1, 1.1])).is_err());
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let mdp = symmetric_chain(0.0);
        let v = true_values(&mdp, &Policy::uniform(2, 1)).unwrap();
        assert_eq!(v, Vector::zeros(2));
    }

    #[test]
    fn constant_reward_values() {
        let mdp = symmetric_chain(1.0);
        let v = true_values(&mdp, &Policy::uniform(2, 1)).unwrap();
        for s in 0..2 {
            assert!((v[s] - 10.0).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_chain_occupancy_is_uniform() {
        let d = occupancy(&symmetric_chain(0.0), &Policy::uniform(2, 1)).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tabular_on_policy_c_is_diagonal_occupancy() {
        let mdp = symmetric_chain(1.0);
        let pol = Policy::uniform(2, 1);
        let feat = FeatureMap::new(Matrix::identity(2, 2), FeatureVariant::Tabular).unwrap();
        let m = expected_matrices(&mdp, &pol, &pol, &feat).unwrap();
        assert!((&m.c - Matrix::from_diagonal(&m.occupancy)).abs().max() < 1e-15);
        assert!((&m.a - (&m.d - &m.c)).abs().max() < 1e-12);
    }

    #[test]
    fn zero_b_gives_zero_solution() {
        let mdp = symmetric_chain(0.0);
        let pol = Policy::uniform(2, 1);
        let feat = FeatureMap::new(Matrix::identity(2, 2), FeatureVariant::Tabular).unwrap();
        let m = expected_matrices(&mdp, &pol, &pol, &feat).unwrap();
        assert_eq!(td_solution(&m).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn singular_a_has_no_unique_solution() {
        let m = ExpectedMatrices {
            a: Matrix::zeros(2, 2),
            b: Vector::zeros(2),
            c: Matrix::identity(2, 2),
            d: Matrix::identity(2, 2),
            occupancy: Vector::from_vec(vec![0.5, 0.5]),
        };
        assert_eq!(td_solution(&m), Err(MdpError::NoUniqueSolution));
    }

    #[test]
    fn deterministic_self_loop_has_no_variance() {
        let (mdp, pol, feat) = self_loop();
        let (sa, sb) = sigma_matrices(&mdp, &pol, &pol, &feat).unwrap();
        assert_eq!(sa[(0, 0)], 0.0);
        assert_eq!(sb[0], 0.0);
    }

    #[test]
    fn episodes_are_deterministic_per_seed() {
        let mdp = symmetric_chain(1.0);
        let pol = Policy::uniform(2, 1);
        let feat = FeatureMap::new(Matrix::identity(2, 2), FeatureVariant::Tabular).unwrap();
        let a = sample_episode(&mdp, &pol, &pol, &feat, Some(20), 7).unwrap();
        let b = sample_episode(&mdp, &pol, &pol, &feat, Some(20), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|t| t.rho == 1.0));
    }

    #[test]
    fn continuing_model_without_horizon_errors() {
        let mdp = symmetric_chain(1.0);
        let pol = Policy::uniform(2, 1);
        let feat = FeatureMap::new(Matrix::identity(2, 2), FeatureVariant::Tabular).unwrap();
        let mut sim = Simulator::new(&mdp, &pol, &pol, &feat);
        sim.step_cap = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sim.episode(0, &mut rng), Err(MdpError::NonTerminating(50)));
    }
}
