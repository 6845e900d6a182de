//! The `gtdlab` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::builder::PossibleValuesParser;
use clap::{Parser, Subcommand};
use gtdlab_core::analysis::{batch_threshold, rate_predictor, RateOutcome};
use gtdlab_core::{BenchmarkName, ProblemConstants};
use serde::Serialize;

use crate::checks::oracle_suite;
use crate::config::{load_config, ExperimentConfig};
use crate::figures;
use crate::output::{emit_csv, emit_svg};
use crate::runner::run_experiment;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gtdlab", version, about = "Policy-evaluation experiments and rate theory", arg_required_else_help = true)]
struct Cli {
    /// Base seed; run i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of independent runs (overrides the config).
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, env = "GTDLAB_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Number of environment steps (overrides the config).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run a built-in figure config.
    Figure {
        #[arg(value_parser = PossibleValuesParser::new(figures::names()), required_unless_present = "list")]
        name: Option<String>,
        /// Number of environment steps (overrides the config).
        #[arg(long)]
        steps: Option<usize>,
        /// List the built-in figures.
        #[arg(long)]
        list: bool,
        /// Print the figure's TOML config instead of running it.
        #[arg(long, conflicts_with = "list")]
        print_config: bool,
    },
    /// Print smoothness constants and the predicted rate for a benchmark.
    Constants {
        #[arg(value_parser = PossibleValuesParser::new(BenchmarkName::ALL.map(|b| b.as_str())))]
        benchmark: String,
        #[arg(long, default_value_t = 1)]
        m1: usize,
        #[arg(long, default_value_t = 1)]
        m2: usize,
        /// Step-size for the rate prediction; defaults to 1/L.
        #[arg(long)]
        alpha: Option<f64>,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Run the Monte-Carlo and exact oracles and report pass/fail.
    Verify,
}

/// Runs the CLI against `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    let jobs = cli.jobs.unwrap_or(0);
    match cli.command {
        Command::Run { config, steps } => {
            let cfg = load_config(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            execute(cfg, cli.seed, cli.runs, cli.out, steps, jobs, out)
        }
        Command::Figure { name, steps, list, print_config } => {
            if list {
                for n in figures::names() {
                    writeln!(out, "{n}").map_err(runtime)?;
                }
                return Ok(EXIT_OK);
            }
            let name = name.expect("clap requires a name");
            if print_config {
                write!(out, "{}", figures::source(&name).expect("validated name")).map_err(runtime)?;
                return Ok(EXIT_OK);
            }
            let cfg = figures::figure(&name).expect("validated name").map_err(runtime)?;
            execute(cfg, cli.seed, cli.runs, cli.out, steps, jobs, out)
        }
        Command::Constants { benchmark, m1, m2, alpha, json } => {
            if m1 == 0 || m2 == 0 {
                return Err(Failure::Usage("batch sizes must be at least 1".into()));
            }
            constants(&benchmark, m1, m2, alpha, json, out)
        }
        Command::Verify => {
            let checks = oracle_suite(cli.seed.unwrap_or(0));
            for c in &checks {
                writeln!(out, "{c}").map_err(runtime)?;
            }
            Ok(if checks.iter().all(|c| c.pass) { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

fn execute(
    mut cfg: ExperimentConfig,
    seed: Option<u64>,
    runs: Option<usize>,
    out_dir: Option<PathBuf>,
    steps: Option<usize>,
    jobs: usize,
    out: &mut dyn Write,
) -> Result<i32, Failure> {
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(r) = runs {
        if r == 0 {
            return Err(Failure::Usage("--runs must be at least 1".into()));
        }
        cfg.n_runs = r;
    }
    if let Some(d) = out_dir {
        cfg.out_dir = d;
    }
    if let Some(n) = steps {
        cfg.n_steps = n;
    }
    let result = run_experiment(&cfg, jobs).map_err(runtime)?;
    let csv_path = cfg.out_dir.join(format!("{}.csv", cfg.name));
    emit_csv(&result, &csv_path).map_err(runtime)?;
    writeln!(out, "{}", csv_path.display()).map_err(runtime)?;
    for p in emit_svg(&result, &cfg.metrics, &cfg.plot, &cfg.out_dir).map_err(runtime)? {
        writeln!(out, "{}", p.display()).map_err(runtime)?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ConstantsReport<'a> {
    benchmark: &'a str,
    constants: &'a ProblemConstants,
    alpha: f64,
    rate: Option<RateOutcome>,
    batch_threshold: Option<gtdlab_core::analysis::BatchThreshold>,
}

fn constants(name: &str, m1: usize, m2: usize, alpha: Option<f64>, json: bool, out: &mut dyn Write) -> Result<i32, Failure> {
    let bm: BenchmarkName = name.parse().map_err(|e: gtdlab_core::MdpError| Failure::Usage(e.to_string()))?;
    let bm = bm.build();
    let c = ProblemConstants::for_benchmark(&bm, m1, m2).map_err(runtime)?;
    let alpha = alpha.unwrap_or(1.0 / c.l);
    let rate = rate_predictor(&c, alpha, m1.min(m2));
    let threshold = batch_threshold(&c).ok();
    if json {
        let report = ConstantsReport {
            benchmark: name,
            constants: &c,
            alpha,
            rate: rate.as_ref().ok().copied(),
            batch_threshold: threshold,
        };
        let text = serde_json::to_string_pretty(&report).map_err(runtime)?;
        writeln!(out, "{text}").map_err(runtime)?;
        return Ok(EXIT_OK);
    }
    let mut lines = vec![
        format!("benchmark     {name}"),
        format!("m1, m2        {m1}, {m2}"),
        format!("mu            {:e}", c.mu),
        format!("||A||         {:e}", c.norm_a),
        format!("||Sigma_A||   {:e}", c.norm_sigma_a),
        format!("||Sigma_b||   {:e}", c.norm_sigma_b),
        format!("L1            {:e}", c.l1),
        format!("L2            {:e}", c.l2),
        format!("L             {:e}", c.l),
        format!("lambda        {:e}", c.lambda),
        format!("sigma^2       {:e}", c.sigma2),
        format!("sigma_v^2     {:e}", c.sigma_v2),
    ];
    if let Some(l) = c.l_max {
        lines.push(format!("L_max         {l:e}"));
    }
    if let Some(t) = threshold {
        lines.push(format!("batch needed  {} (sufficient {})", t.exact, t.sufficient));
    }
    lines.push(format!("alpha         {alpha:e}"));
    match rate {
        Ok(RateOutcome::Linear(p)) => {
            lines.push(format!("q             {:e}", p.q));
            lines.push(format!("bias          {:e}", p.bias));
        }
        Ok(RateOutcome::NoGuarantee { lambda, l_mu }) => {
            lines.push(format!("q             none (lambda {lambda:e} > L mu {l_mu:e})"));
        }
        Err(e) => lines.push(format!("q             none ({e})")),
    }
    for l in lines {
        writeln!(out, "{l}").map_err(runtime)?;
    }
    Ok(EXIT_OK)
}
