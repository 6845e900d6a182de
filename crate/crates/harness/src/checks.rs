//! Numbered verification checks: exact-expectation and Monte-Carlo oracles
//! for the theory, and rank-order checks on the built-in figures.

use std::fmt;
use std::time::{Duration, Instant};

use gtdlab_core::analysis::oracles::{
    average_identity_check, expected_gtd_contraction, gradient_check, independence_check, random_theta,
    unbiasedness_check, verify_l_lambda,
};
use gtdlab_core::analysis::{
    batch_threshold, linear_rate_fit, mspbe_equivalence_check, neu, one_over_t_bound, rate_predictor,
    series::middle_half, bias_subtracted_series, RateOutcome,
};
use gtdlab_core::linalg::{pseudo_solve, spectral_norm};
use gtdlab_core::{
    Algorithm, Benchmark, BenchmarkName, Hyperparams, Learner, Metric, ProblemConstants, StepInput,
    TwinBuffers, Vector,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::figures;
use crate::runner::{initial_theta, run_experiment, ExperimentResult, TransitionStream};

#[derive(Debug, Clone)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {}: {} [{:.2}s]",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(id: u8, name: &'static str, f: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (pass, detail) = f();
    Check { id, name, pass, detail, elapsed: start.elapsed() }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn benchmarks() -> Vec<Benchmark> {
    BenchmarkName::ALL.iter().map(|b| b.build()).collect()
}

/// Analytic NEU gradient against central differences: 20 points per benchmark.
pub fn gradient_oracle(seed: u64) -> Check {
    timed(1, "neu gradient vs finite differences", || {
        let mut r = rng(seed, 1);
        let mut worst = 0.0f64;
        for bm in benchmarks() {
            let mats = bm.matrices().expect("matrices");
            for _ in 0..20 {
                let theta = random_theta(&Vector::zeros(bm.dim()), 1.0, &mut r);
                worst = worst.max(gradient_check(&theta, &mats, 1e-5));
            }
        }
        (worst < 1e-6, format!("max relative error {worst:.3e} (< 1e-6)"))
    })
}

/// Similarity objective with preconditioned similarity equals MSPBE, exactly.
pub fn mspbe_equivalence(seed: u64) -> Check {
    timed(2, "similarity objective equals MSPBE", || {
        let mut r = rng(seed, 2);
        let mut worst = 0.0f64;
        let mut used = Vec::new();
        for bm in benchmarks() {
            let mats = bm.matrices().expect("matrices");
            let dist = bm.transition_distribution().expect("distribution");
            let mut ok = true;
            for _ in 0..20 {
                let theta = random_theta(&Vector::zeros(bm.dim()), 1.0, &mut r);
                match mspbe_equivalence_check(&theta, &mats, &dist) {
                    Ok(rep) => worst = worst.max(rep.abs_diff),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                used.push(bm.name.as_str());
            }
        }
        (worst < 1e-10 && !used.is_empty(), format!("max |N - MSPBE| {worst:.3e} (< 1e-10) on {}", used.join(", ")))
    })
}

/// Paired draws from the twin buffers factorize over states.
pub fn independence(seed: u64) -> Check {
    timed(3, "twin-buffer draws are independent", || {
        let rep = independence_check(2000, 100_000, &mut rng(seed, 3));
        (
            rep.max_deviation < 0.01 && rep.disjoint,
            format!("max |P(s1,s2) - P(s1)P(s2)| {:.4} (< 0.01), episodes disjoint: {}", rep.max_deviation, rep.disjoint),
        )
    })
}

/// Second moment of an m-average matches the variance decomposition.
pub fn average_identity(seed: u64) -> Check {
    timed(4, "second moment of batch-averaged gradients", || {
        let bm = BenchmarkName::Boyan.build();
        let mats = bm.matrices().expect("matrices");
        let dist = bm.transition_distribution().expect("distribution");
        let mut r = rng(seed, 4);
        let theta = random_theta(&Vector::zeros(bm.dim()), 1.0, &mut r);
        let mut pass = true;
        let mut parts = Vec::new();
        for m in [1, 8, 32] {
            let rep = average_identity_check(&dist, &mats, &theta, m, 100_000, &mut r);
            pass &= rep.rel_error < 0.02;
            parts.push(format!("m={m}: {:.2}%", 100.0 * rep.rel_error));
        }
        (pass, format!("relative error {} (< 2%)", parts.join(", ")))
    })
}

/// Mean Impression GTD direction matches the NEU gradient direction.
pub fn unbiasedness(seed: u64) -> Check {
    timed(5, "impression gtd direction is unbiased", || {
        let bm = BenchmarkName::RwTab.build();
        let mats = bm.matrices().expect("matrices");
        let dist = bm.transition_distribution().expect("distribution");
        let mut r = rng(seed, 5);
        let mut worst = 0.0f64;
        let mut pass = true;
        for _ in 0..5 {
            let theta = random_theta(&Vector::zeros(bm.dim()), 1.0, &mut r);
            let rep = unbiasedness_check(&dist, &mats, &theta, 1, 1, 100_000, 3.0, &mut r);
            worst = worst.max(rep.max_z);
            pass &= rep.pass;
        }
        (pass, format!("max |z| {worst:.2} (<= 3) over 5 points on rw-tab"))
    })
}

/// The L-lambda smoothness inequality at 100 points per non-singular benchmark.
pub fn smoothness(seed: u64) -> Check {
    timed(6, "L-lambda expected smoothness", || {
        let mut r = rng(seed, 6);
        let mut pass = true;
        let mut worst = f64::NEG_INFINITY;
        let mut used = Vec::new();
        for bm in benchmarks() {
            let c = ProblemConstants::for_benchmark(&bm, 1, 1).expect("constants");
            if c.mu <= 1e-12 {
                continue;
            }
            used.push(bm.name.as_str());
            let mats = bm.matrices().expect("matrices");
            let dist = bm.transition_distribution().expect("distribution");
            let thetas: Vec<Vector> =
                (0..100).map(|_| random_theta(&c.theta_star, 1.0 + c.theta_star.norm(), &mut r)).collect();
            let rep = verify_l_lambda(&dist, &mats, &c, &thetas, 1000, 3.0, &mut r);
            pass &= rep.all_pass;
            for ch in &rep.checks {
                worst = worst.max(ch.lhs / ch.rhs);
            }
        }
        (pass, format!("max lhs/rhs {worst:.3} on {}", used.join(", ")))
    })
}

/// Minimum observed NEU against the O(1/t) bound on rw-tab, 10 seeds.
pub fn one_over_t(seed: u64) -> Check {
    timed(7, "O(1/t) bound on rw-tab", || {
        let bm = BenchmarkName::RwTab.build();
        let mats = bm.matrices().expect("matrices");
        let c = ProblemConstants::for_benchmark(&bm, 1, 1).expect("constants");
        let l_max = c.l_max.expect("support bound");
        let alpha = 1.0 / l_max;
        let hp = Hyperparams { alpha, m1: 1, m2: 1, ..Hyperparams::default() };
        let theta0 = initial_theta(&bm);
        let f0 = neu(&theta0, &mats);
        let (mut checked, mut violated) = (0usize, 0usize);
        let mut first_violation: Option<(u64, f64, f64)> = None;
        for run in 0..10u64 {
            let mut stream = TransitionStream::new(&bm, seed + run);
            let mut r = rng(seed + run, 1);
            let mut learner = Learner::new(Algorithm::ImpressionGtd, hp, theta0.clone());
            let mut buffers = TwinBuffers::new(bm.dim(), 1);
            let mut best = f0;
            for _ in 0..2000 {
                let t = stream.next_transition().expect("episode");
                buffers.insert(t.clone());
                learner.step(&StepInput { transition: &t, buffers: &buffers, replay: &[] }, &mut r);
                best = best.min(neu(learner.theta(), &mats));
                let k = learner.state.step_count;
                if k > 0 && k % 10 == 0 {
                    let bound = one_over_t_bound(&c, alpha, k, f0, 1, 1).expect("admissible step-size");
                    checked += 1;
                    if best > bound {
                        violated += 1;
                        first_violation.get_or_insert((k, best, bound));
                    }
                }
            }
        }
        let detail = match first_violation {
            Some((k, best, bound)) => format!(
                "alpha = 1/L_max = {alpha:.4}: {violated}/{checked} recorded points above the bound, first at t={k} (min NEU {best:.3e} > bound {bound:.3e})"
            ),
            None => format!("alpha = 1/L_max = {alpha:.4}: all {checked} recorded points within the bound"),
        };
        (violated == 0, detail)
    })
}

/// Exact Expected GTD iteration contracts at `||I - alpha A^T A||` on Boyan.
pub fn contraction(_seed: u64) -> Check {
    timed(8, "expected gtd contraction factor", || {
        let bm = BenchmarkName::Boyan.build();
        let mats = bm.matrices().expect("matrices");
        let theta_star = pseudo_solve(&mats.a, &(-&mats.b));
        let alpha = 1.0 / spectral_norm(&mats.a).powi(2);
        let rep = expected_gtd_contraction(&mats, &theta_star, &initial_theta(&bm), alpha, 200_000);
        (
            rep.rel_error < 0.01,
            format!(
                "observed ratio {:.6} vs predicted {:.6} (rel error {:.2e}, < 1%) after {} steps",
                rep.observed_ratio, rep.predicted_ratio, rep.rel_error, rep.steps
            ),
        )
    })
}

fn with_algorithms(mut c: ExperimentConfig, labels: &[&str]) -> ExperimentConfig {
    c.algorithms.retain(|a| labels.contains(&a.label.as_str()));
    assert_eq!(c.algorithms.len(), labels.len(), "missing labels in {}", c.name);
    c
}

fn builtin(name: &str) -> ExperimentConfig {
    figures::figure(name).expect("built-in figure").expect("valid config")
}

fn mean_at(res: &ExperimentResult, label: &str, step: usize) -> f64 {
    let s = res.get(label, Metric::Rmsve).expect("series");
    let k = s.steps.iter().position(|&x| x == step).expect("recorded step");
    s.mean[k]
}

/// Impression GTD on Baird drives RMSVE towards zero at a linear rate, and
/// plain TD diverges.
pub fn baird_linear_rate(seed: u64, jobs: usize) -> Check {
    timed(9, "baird linear rate and TD divergence", || {
        let mut cfg = with_algorithms(builtin("baird"), &["impression-gtd"]);
        cfg.base_seed = seed;
        let res = run_experiment(&cfg, jobs).expect("run");
        let s = &res.series[0];
        let initial = s.mean[0];
        let reached = s.mean.iter().position(|&v| v < 0.05 * initial).map(|k| s.steps[k]);
        let fit = linear_rate_fit(&s.mean, middle_half(s.mean.len()));
        let r2 = fit.map_or(f64::NAN, |f| f.r_squared);

        let mut td = cfg.clone();
        td.algorithms[0].algorithm = Algorithm::Td;
        td.algorithms[0].label = "td".into();
        td.algorithms[0].hp = Hyperparams { alpha: BAIRD_TD_ALPHA, ..Hyperparams::default() };
        td.n_runs = 10;
        let td_res = run_experiment(&td, jobs).expect("run");
        let td_div = td_res.series[0].diverged.iter().filter(|&&d| d).count();

        let pass = reached.is_some() && r2 > 0.95 && td_div > 0;
        (
            pass,
            format!(
                "rmsve {initial:.3} -> {:.3e}, below 5% at step {}; log-linear R^2 {r2:.4} (> 0.95); td alpha {BAIRD_TD_ALPHA} diverged in {td_div}/10 runs",
                s.mean.last().copied().unwrap_or(f64::NAN),
                reached.map_or("never".into(), |k| k.to_string()),
            ),
        )
    })
}

/// Step-size for the plain-TD divergence run on Baird.
pub const BAIRD_TD_ALPHA: f64 = 0.1;

/// Rank orders of the final curves in the built-in comparison figures.
pub fn rank_orders(seed: u64, jobs: usize) -> Check {
    timed(10, "figure rank orders", || {
        let mut parts = Vec::new();
        let mut pass = true;

        let mut boyan = with_algorithms(builtin("boyan-compare"), &["td", "impression-gtd"]);
        boyan.base_seed = seed;
        let r = run_experiment(&boyan, jobs).expect("run");
        let (im, td) = (mean_at(&r, "impression-gtd", 2000), mean_at(&r, "td", 2000));
        let ok = im < td;
        pass &= ok;
        parts.push(format!("(a) boyan@2000 imgtd {im:.4} < td {td:.4}: {ok}"));

        let mut tab = with_algorithms(builtin("rw-tab-compare"), &["td", "tdrc", "vtrace", "impression-gtd"]);
        tab.base_seed = seed;
        let r = run_experiment(&tab, jobs).expect("run");
        let (im, td, tdrc) =
            (mean_at(&r, "impression-gtd", 6000), mean_at(&r, "td", 6000), mean_at(&r, "tdrc", 6000));
        let ok = im < td && im < tdrc;
        pass &= ok;
        parts.push(format!("(b) rw-tab@6000 imgtd {im:.4} < td {td:.4}, tdrc {tdrc:.4}: {ok}"));

        let plateau = |label: &str| {
            let s = r.get(label, Metric::Rmsve).expect("series");
            let tail = &s.mean[s.mean.len() * 9 / 10..];
            tail.iter().sum::<f64>() / tail.len() as f64
        };
        let (vt, tdp) = (plateau("vtrace"), plateau("td"));
        let ok = vt > tdp;
        pass &= ok;
        parts.push(format!("(d) rw-tab plateau vtrace {vt:.4} > td {tdp:.4}: {ok}"));

        let mut inv = with_algorithms(builtin("rw-inv-rmsve"), &["gtd2", "tdc", "tdrc", "td", "gtd", "htd", "vtrace", "impression-gtd"]);
        inv.base_seed = seed;
        let r = run_experiment(&inv, jobs).expect("run");
        let at: Vec<(String, f64)> =
            r.series.iter().map(|s| (s.label.clone(), mean_at(&r, &s.label, 6000))).collect();
        let get = |l: &str| at.iter().find(|(n, _)| n == l).map(|(_, v)| *v).expect("label");
        let (g2, tdc, tdrc, im) = (get("gtd2"), get("tdc"), get("tdrc"), get("impression-gtd"));
        let lowest = at.iter().all(|(n, v)| n == "impression-gtd" || im < *v);
        let ok = g2 < tdrc && tdc < tdrc && lowest;
        pass &= ok;
        parts.push(format!(
            "(c) rw-inv@6000 gtd2 {g2:.4}, tdc {tdc:.4} < tdrc {tdrc:.4}; imgtd {im:.4} lowest: {ok}"
        ));
        (pass, parts.join("; "))
    })
}

/// R^2 of a log-linear fit to the bias-subtracted Boyan curves.
pub fn boyan_replot(seed: u64, jobs: usize) -> Check {
    timed(11, "boyan bias-subtracted linear rate", || {
        let mut cfg = with_algorithms(builtin("boyan-linear-rate"), &["td", "impression-gtd m=128"]);
        cfg.base_seed = seed;
        let bias = cfg.plot.bias_subtract.expect("replot config subtracts a bias");
        let r = run_experiment(&cfg, jobs).expect("run");
        let r2 = |label: &str| {
            let s = r.get(label, Metric::Rmsve).expect("series");
            let y = bias_subtracted_series(&s.mean, bias.tail, bias.discount);
            linear_rate_fit(&y, middle_half(y.len())).map_or(f64::NAN, |f| f.r_squared)
        };
        let (im, td) = (r2("impression-gtd m=128"), r2("td"));
        (im - td >= 0.1, format!("R^2 imgtd m=128 {im:.4} vs td {td:.4} (gap >= 0.1)"))
    })
}

/// Batch threshold implies a linear rate; m = 1 on rw-tab has no guarantee.
pub fn rate_consistency(_seed: u64) -> Check {
    timed(12, "rate predictor self-consistency", || {
        let mut pass = true;
        let mut parts = Vec::new();
        for bm in benchmarks() {
            let c1 = ProblemConstants::for_benchmark(&bm, 1, 1).expect("constants");
            let Ok(th) = batch_threshold(&c1) else { continue };
            let c = c1.rebatch(th.exact, th.exact);
            let q = rate_predictor(&c, 1.0 / c.l, th.exact).ok().and_then(|o| o.linear()).map(|p| p.q);
            let ok = q.is_some_and(|q| q > 0.0 && q < 1.0);
            pass &= ok;
            parts.push(format!("{} m={} q={}", bm.name, th.exact, q.map_or("none".into(), |q| format!("{q:.6}"))));
        }
        let tab = ProblemConstants::for_benchmark(&BenchmarkName::RwTab.build(), 1, 1).expect("constants");
        let no_guarantee = matches!(rate_predictor(&tab, 1.0 / tab.l, 1), Ok(RateOutcome::NoGuarantee { .. }));
        pass &= no_guarantee && tab.lambda > tab.l * tab.mu;
        parts.push(format!("rw-tab m=1 lambda {:.3} > L mu {:.3e}: no guarantee {no_guarantee}", tab.lambda, tab.l * tab.mu));
        (pass, parts.join("; "))
    })
}

/// The fast oracle checks (everything except the multi-run experiments).
pub fn oracle_suite(seed: u64) -> Vec<Check> {
    vec![
        gradient_oracle(seed),
        mspbe_equivalence(seed),
        independence(seed),
        average_identity(seed),
        unbiasedness(seed),
        smoothness(seed),
        contraction(seed),
        rate_consistency(seed),
    ]
}
