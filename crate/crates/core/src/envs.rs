//! The benchmark problems: Boyan chain, five-state random walk with three
//! feature representations, and Baird's star counterexample.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::linalg::{Matrix, Vector};
use crate::mdp::{
    expected_matrices, sigma_matrices, true_values, ExpectedMatrices, FeatureMap, FeatureVariant,
    MdpError, MdpModel, Policy, Result, Simulator, Transition, TransitionDistribution,
};

/// Episode truncation for Baird, which has no terminal state.
pub const BAIRD_HORIZON: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkName {
    Boyan,
    RwTab,
    RwInv,
    RwDep,
    Baird,
}

impl BenchmarkName {
    pub const ALL: [BenchmarkName; 5] = [
        BenchmarkName::Boyan,
        BenchmarkName::RwTab,
        BenchmarkName::RwInv,
        BenchmarkName::RwDep,
        BenchmarkName::Baird,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkName::Boyan => "boyan",
            BenchmarkName::RwTab => "rw-tab",
            BenchmarkName::RwInv => "rw-inv",
            BenchmarkName::RwDep => "rw-dep",
            BenchmarkName::Baird => "baird",
        }
    }

    pub fn build(self) -> Benchmark {
        match self {
            BenchmarkName::Boyan => boyan_chain(),
            BenchmarkName::RwTab => random_walk(FeatureVariant::Tabular),
            BenchmarkName::RwInv => random_walk(FeatureVariant::Inverted),
            BenchmarkName::RwDep => random_walk(FeatureVariant::Dependent),
            BenchmarkName::Baird => baird(),
        }
        .expect("built-in benchmark is valid")
    }
}

impl fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchmarkName {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| MdpError::InvalidModel(format!("unknown benchmark '{s}'")))
    }
}

/// An evaluation problem: model, features, target and behavior policies.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: BenchmarkName,
    pub mdp: MdpModel,
    pub features: FeatureMap,
    pub target: Policy,
    pub behavior: Policy,
    /// Truncation length for models without terminal states.
    pub episode_horizon: Option<usize>,
}

impl Benchmark {
    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn true_values(&self) -> Result<Vector> {
        true_values(&self.mdp, &self.target)
    }

    pub fn matrices(&self) -> Result<ExpectedMatrices> {
        expected_matrices(&self.mdp, &self.target, &self.behavior, &self.features)
    }

    pub fn sigmas(&self) -> Result<(Matrix, Vector)> {
        sigma_matrices(&self.mdp, &self.target, &self.behavior, &self.features)
    }

    pub fn transition_distribution(&self) -> Result<TransitionDistribution> {
        TransitionDistribution::new(&self.mdp, &self.target, &self.behavior, &self.features)
    }

    pub fn simulator(&self) -> Simulator<'_> {
        Simulator::new(&self.mdp, &self.behavior, &self.target, &self.features)
            .with_horizon(self.episode_horizon)
    }

    pub fn episode<R: Rng + ?Sized>(&self, episode_idx: u64, rng: &mut R) -> Result<Vec<Transition>> {
        self.simulator().episode(episode_idx, rng)
    }
}

pub fn by_name(name: &str) -> Result<Benchmark> {
    Ok(name.parse::<BenchmarkName>()?.build())
}

/// 13-state Boyan chain. State `i` (index `i`) steps to `i-1` or `i-2`, state
/// 1 steps to 0 with reward -2, state 0 exits to the terminal (index 13).
/// Undiscounted, so `V(i) = -2i` and the interpolating features are exact.
pub fn boyan_chain() -> Result<Benchmark> {
    let n = 14;
    let term = 13;
    let mut p = Matrix::zeros(n, n);
    let mut r = Matrix::zeros(n, n);
    for i in 2..=12 {
        p[(i, i - 1)] = 0.5;
        p[(i, i - 2)] = 0.5;
        r[(i, i - 1)] = -3.0;
        r[(i, i - 2)] = -3.0;
    }
    p[(1, 0)] = 1.0;
    r[(1, 0)] = -2.0;
    p[(0, term)] = 1.0;
    p[(term, term)] = 1.0;
    let mut start = Vector::zeros(n);
    start[12] = 1.0;
    let mut terminals = vec![false; n];
    terminals[term] = true;
    let mdp = MdpModel::new(vec![p], vec![r], 1.0, start, terminals)?;

    let mut phi = Matrix::zeros(n, 4);
    for s in 0..=12usize {
        let k = s / 4;
        let frac = (s % 4) as f64 / 4.0;
        phi[(s, k)] = 1.0 - frac;
        if frac > 0.0 {
            phi[(s, k + 1)] = frac;
        }
    }
    let features = FeatureMap::new(phi, FeatureVariant::Interpolated)?;
    let policy = Policy::uniform(n, 1);
    Ok(Benchmark {
        name: BenchmarkName::Boyan,
        mdp,
        features,
        target: policy.clone(),
        behavior: policy,
        episode_horizon: None,
    })
}

/// Five-state random walk (indices 1..=5) between terminals 0 and 6, starting
/// in the center. Entering the right terminal pays +1, the left -1.
/// Target moves left with probability 0.4, behavior is uniform.
pub fn random_walk(representation: FeatureVariant) -> Result<Benchmark> {
    let n = 7;
    let (left, right) = (0usize, 1usize);
    let mut p_left = Matrix::zeros(n, n);
    let mut p_right = Matrix::zeros(n, n);
    let mut r_left = Matrix::zeros(n, n);
    let mut r_right = Matrix::zeros(n, n);
    for s in 1..=5 {
        p_left[(s, s - 1)] = 1.0;
        p_right[(s, s + 1)] = 1.0;
    }
    for t in [0, 6] {
        p_left[(t, t)] = 1.0;
        p_right[(t, t)] = 1.0;
    }
    r_left[(1, 0)] = -1.0;
    r_right[(5, 6)] = 1.0;
    let mut start = Vector::zeros(n);
    start[3] = 1.0;
    let mut terminals = vec![false; n];
    terminals[0] = true;
    terminals[6] = true;
    let mdp = MdpModel::new(vec![p_left, p_right], vec![r_left, r_right], 1.0, start, terminals)?;

    let phi = match representation {
        FeatureVariant::Tabular => {
            Matrix::from_fn(n, 5, |s, j| if s >= 1 && s <= 5 && j == s - 1 { 1.0 } else { 0.0 })
        }
        FeatureVariant::Inverted => Matrix::from_fn(n, 5, |s, j| {
            if (1..=5).contains(&s) && j != s - 1 {
                0.5
            } else {
                0.0
            }
        }),
        FeatureVariant::Dependent => {
            let rows: [[f64; 3]; 5] =
                [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]];
            let mut phi = Matrix::zeros(n, 3);
            for (i, row) in rows.iter().enumerate() {
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                for j in 0..3 {
                    phi[(i + 1, j)] = row[j] / norm;
                }
            }
            phi
        }
        other => {
            return Err(MdpError::InvalidFeatures(format!(
                "random walk has no {other:?} representation"
            )))
        }
    };
    let name = match representation {
        FeatureVariant::Tabular => BenchmarkName::RwTab,
        FeatureVariant::Inverted => BenchmarkName::RwInv,
        _ => BenchmarkName::RwDep,
    };
    let features = FeatureMap::new(phi, representation)?;
    let mut target = Matrix::zeros(n, 2);
    let mut behavior = Matrix::zeros(n, 2);
    for s in 0..n {
        target[(s, left)] = 0.4;
        target[(s, right)] = 0.6;
        behavior[(s, left)] = 0.5;
        behavior[(s, right)] = 0.5;
    }
    Ok(Benchmark {
        name,
        mdp,
        features,
        target: Policy::new(target)?,
        behavior: Policy::new(behavior)?,
        episode_horizon: None,
    })
}

/// Seven-state Baird star. Action 0 ("dash") jumps uniformly to one of states
/// 0..6 (the outer states), action 1 ("solid") jumps to state 6 (the center).
pub fn baird() -> Result<Benchmark> {
    let n = 7;
    let dash = Matrix::from_fn(n, n, |_, s2| if s2 < 6 { 1.0 / 6.0 } else { 0.0 });
    let solid = Matrix::from_fn(n, n, |_, s2| if s2 == 6 { 1.0 } else { 0.0 });
    let zero = Matrix::zeros(n, n);
    let start = Vector::from_element(n, 1.0 / n as f64);
    let mdp = MdpModel::new(vec![dash, solid], vec![zero.clone(), zero], 0.9, start, vec![false; n])?;
    let mut phi = Matrix::zeros(n, 8);
    for i in 0..6 {
        phi[(i, i)] = 2.0;
        phi[(i, 7)] = 1.0;
    }
    phi[(6, 6)] = 1.0;
    phi[(6, 7)] = 2.0;
    let features = FeatureMap::new(phi, FeatureVariant::Baird)?;
    Ok(Benchmark {
        name: BenchmarkName::Baird,
        mdp,
        features,
        target: Policy::stationary(n, &[0.0, 1.0])?,
        behavior: Policy::stationary(n, &[6.0 / 7.0, 1.0 / 7.0])?,
        episode_horizon: Some(BAIRD_HORIZON),
    })
}

/// Conventional starting weights for Baird's counterexample.
pub fn baird_initial_theta() -> Vector {
    Vector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for b in BenchmarkName::ALL {
            assert_eq!(b.as_str().parse::<BenchmarkName>().unwrap(), b);
        }
        assert!(by_name("cartpole").is_err());
    }

    #[test]
    fn boyan_rewards_and_anchors() {
        let b = boyan_chain().unwrap();
        assert_eq!(b.mdp.reward(1, 0, 0), -2.0);
        assert_eq!(b.mdp.reward(5, 0, 3), -3.0);
        assert_eq!(b.features.of(12), Vector::from_vec(vec![0.0, 0.0, 0.0, 1.0]));
        assert_eq!(b.features.of(0), Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        assert_eq!(b.features.of(2), Vector::from_vec(vec![0.5, 0.5, 0.0, 0.0]));
        assert_eq!(b.mdp.non_terminal_states().len(), 13);
    }

    #[test]
    fn random_walk_shapes() {
        assert!(random_walk(FeatureVariant::Baird).is_err());
        let inv = random_walk(FeatureVariant::Inverted).unwrap();
        assert_eq!(inv.features.of(1), Vector::from_vec(vec![0.0, 0.5, 0.5, 0.5, 0.5]));
        let dep = random_walk(FeatureVariant::Dependent).unwrap();
        assert_eq!(dep.dim(), 3);
        let h = 1.0 / 2f64.sqrt();
        assert_eq!(dep.features.of(2), Vector::from_vec(vec![h, h, 0.0]));
    }

    #[test]
    fn baird_ratios() {
        let b = baird().unwrap();
        assert_eq!(b.mdp.gamma(), 0.9);
        let max_rho = (0..7)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| b.target.prob(s, a) / b.behavior.prob(s, a))
            .fold(0.0, f64::max);
        assert!((max_rho - 7.0).abs() < 1e-12);
    }
}
