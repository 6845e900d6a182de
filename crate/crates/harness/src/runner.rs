//! Seeded multi-run orchestration and per-step aggregation.

use std::collections::VecDeque;

use gtdlab_core::envs::baird_initial_theta;
use gtdlab_core::analysis::AnalysisError;
use gtdlab_core::{
    Algorithm, Benchmark, BenchmarkName, Evaluator, Learner, MdpError, Metric, StepInput, Transition,
    TwinBuffers, Vector,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{AlgorithmSpec, ExperimentConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// One algorithm's curves for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub label: String,
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub steps: Vec<usize>,
    /// `values[run][k]`; NaN once the run has diverged.
    pub values: Vec<Vec<f64>>,
    pub diverged: Vec<bool>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Runs contributing to `mean[k]`.
    pub n_valid: Vec<usize>,
    /// Runs flagged as diverged by step `steps[k]`.
    pub n_diverged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub benchmark: BenchmarkName,
    pub steps: Vec<usize>,
    /// Algorithm-major, then metric, in config order.
    pub series: Vec<RunSeries>,
}

impl ExperimentResult {
    pub fn get(&self, label: &str, metric: Metric) -> Option<&RunSeries> {
        self.series.iter().find(|s| s.label == label && s.metric == metric)
    }
}

/// Steps at which metrics are recorded: `0, k, 2k, ...` strictly below
/// `n_steps`, and always step 0.
pub fn record_steps(n_steps: usize, every: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..n_steps).step_by(every.max(1)).collect();
    if steps.is_empty() {
        steps.push(0);
    }
    steps
}

pub fn initial_theta(benchmark: &Benchmark) -> Vector {
    match benchmark.name {
        BenchmarkName::Baird => baird_initial_theta(),
        _ => Vector::zeros(benchmark.dim()),
    }
}

/// Endless stream of behavior transitions, episode by episode. Episode
/// indices start at 1.
pub struct TransitionStream<'a> {
    benchmark: &'a Benchmark,
    rng: ChaCha8Rng,
    queue: VecDeque<Transition>,
    next_episode: u64,
}

impl<'a> TransitionStream<'a> {
    pub fn new(benchmark: &'a Benchmark, seed: u64) -> Self {
        Self { benchmark, rng: ChaCha8Rng::seed_from_u64(seed), queue: VecDeque::new(), next_episode: 1 }
    }

    pub fn next_transition(&mut self) -> Result<Transition, MdpError> {
        while self.queue.is_empty() {
            let ep = self.benchmark.episode(self.next_episode, &mut self.rng)?;
            self.next_episode += 1;
            self.queue.extend(ep);
        }
        Ok(self.queue.pop_front().expect("non-empty"))
    }
}

struct Trace {
    /// `values[metric][k]`
    values: Vec<Vec<f64>>,
    diverged_at: Option<usize>,
}

fn uses_buffers(a: Algorithm) -> bool {
    matches!(a, Algorithm::ImpressionGtd | Algorithm::ExpectedGtd)
}

fn run_one(
    benchmark: &Benchmark,
    evaluator: &Evaluator,
    config: &ExperimentConfig,
    spec: &AlgorithmSpec,
    algo_index: usize,
    run: usize,
    steps: &[usize],
) -> Result<Trace, MdpError> {
    let seed = config.base_seed.wrapping_add(run as u64);
    let mut stream = TransitionStream::new(benchmark, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(algo_index as u64 + 1);

    let mut learner = Learner::new(spec.algorithm, spec.hp, initial_theta(benchmark));
    let mut buffers = TwinBuffers::new(benchmark.dim(), spec.warmup);
    let mut replay: Vec<Transition> = Vec::new();
    let keep_buffers = uses_buffers(spec.algorithm);
    let keep_replay = spec.algorithm == Algorithm::MinibatchTd;

    let mut values = vec![Vec::with_capacity(steps.len()); config.metrics.len()];
    let mut diverged_at = None;
    let record = |learner: &Learner, values: &mut Vec<Vec<f64>>| {
        for (mi, &m) in config.metrics.iter().enumerate() {
            let v = if learner.diverged() { f64::NAN } else { evaluator.metric(m, learner.theta()) };
            values[mi].push(v);
        }
    };

    let mut next = 0;
    for step in 0..=config.n_steps {
        if step > 0 {
            let t = stream.next_transition()?;
            if keep_buffers {
                buffers.insert(t.clone());
            }
            if keep_replay {
                replay.push(t.clone());
            }
            learner.step(&StepInput { transition: &t, buffers: &buffers, replay: &replay }, &mut rng);
            if diverged_at.is_none() && learner.diverged() {
                diverged_at = Some(step);
            }
        }
        if next < steps.len() && steps[next] == step {
            record(&learner, &mut values);
            next += 1;
            if next == steps.len() {
                break;
            }
        }
    }
    Ok(Trace { values, diverged_at })
}

/// Mean and standard error (sample std over `sqrt(n)`) of the finite values.
pub fn mean_stderr(xs: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = xs.into_iter().filter(|x| x.is_finite()).collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 1);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt(), n)
}

/// Runs every `(run, algorithm)` job on `jobs` threads (0 = rayon default)
/// and reduces in a fixed order, so the result does not depend on `jobs`.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult, RunError> {
    let benchmark = config.benchmark.build();
    let evaluator = Evaluator::new(&benchmark)?;
    let steps = record_steps(config.n_steps, config.record_every);

    let job_list: Vec<(usize, usize)> = (0..config.algorithms.len())
        .flat_map(|a| (0..config.n_runs).map(move |r| (a, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let traces: Vec<Trace> = pool.install(|| {
        job_list
            .par_iter()
            .map(|&(a, r)| run_one(&benchmark, &evaluator, config, &config.algorithms[a], a, r, &steps))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut series = Vec::new();
    for (a, spec) in config.algorithms.iter().enumerate() {
        let runs = &traces[a * config.n_runs..(a + 1) * config.n_runs];
        for (mi, &metric) in config.metrics.iter().enumerate() {
            let values: Vec<Vec<f64>> = runs.iter().map(|t| t.values[mi].clone()).collect();
            let diverged: Vec<bool> = runs.iter().map(|t| t.diverged_at.is_some()).collect();
            let mut mean = Vec::with_capacity(steps.len());
            let mut stderr = Vec::with_capacity(steps.len());
            let mut n_valid = Vec::with_capacity(steps.len());
            let mut n_diverged = Vec::with_capacity(steps.len());
            for (k, &step) in steps.iter().enumerate() {
                let (m, se, n) = mean_stderr(values.iter().map(|v| v[k]));
                mean.push(m);
                stderr.push(se);
                n_valid.push(n);
                n_diverged.push(runs.iter().filter(|t| t.diverged_at.is_some_and(|d| d <= step)).count());
            }
            series.push(RunSeries {
                label: spec.label.clone(),
                algorithm: spec.algorithm,
                metric,
                steps: steps.clone(),
                values,
                diverged,
                mean,
                stderr,
                n_valid,
                n_diverged,
            });
        }
    }
    Ok(ExperimentResult { name: config.name.clone(), benchmark: config.benchmark, steps, series })
}
