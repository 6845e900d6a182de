//! Experiment configuration files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use gtdlab_core::{Algorithm, BenchmarkName, Hyperparams, Metric};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.into(), message: message.into() }
    }
}

/// Post-processing for the SVG only; CSV output is always raw.
#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub title: Option<String>,
    #[serde(default)]
    pub log_y: bool,
    /// Subtract a tail-mean bias estimate from each curve before plotting.
    pub bias_subtract: Option<BiasSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    /// Number of recorded points in the tail window.
    pub tail: usize,
    #[serde(default = "one")]
    pub discount: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSpec {
    pub algorithm: Algorithm,
    pub label: String,
    pub hp: Hyperparams,
    /// Buffers must strictly exceed this size before replay-based learners update.
    pub warmup: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub benchmark: BenchmarkName,
    pub algorithms: Vec<AlgorithmSpec>,
    pub n_runs: usize,
    pub n_steps: usize,
    pub metrics: Vec<Metric>,
    pub base_seed: u64,
    pub record_every: usize,
    pub out_dir: PathBuf,
    pub plot: PlotSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    benchmark: String,
    #[serde(default = "default_runs")]
    n_runs: usize,
    n_steps: usize,
    #[serde(default = "default_metrics")]
    metrics: Vec<String>,
    warmup: Option<usize>,
    #[serde(default)]
    base_seed: u64,
    #[serde(default = "default_record_every")]
    record_every: usize,
    out_dir: Option<PathBuf>,
    #[serde(default)]
    plot: PlotSpec,
    #[serde(default)]
    algorithms: Vec<RawAlgorithm>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlgorithm {
    name: String,
    label: Option<String>,
    alpha: Option<f64>,
    beta: Option<f64>,
    eta: Option<f64>,
    reg: Option<f64>,
    /// Sets both `m1` and `m2`.
    m: Option<usize>,
    m1: Option<usize>,
    m2: Option<usize>,
    clip: Option<f64>,
    symmetric: Option<bool>,
    warmup: Option<usize>,
}

fn default_runs() -> usize {
    100
}

fn default_record_every() -> usize {
    10
}

fn default_metrics() -> Vec<String> {
    vec!["rmsve".into()]
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    parse_config(&text, fallback)
}

/// Parses and validates a config document. `fallback_name` names the
/// experiment when the document has no `name` key.
pub fn parse_config(text: &str, fallback_name: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;

    let benchmark: BenchmarkName = raw
        .benchmark
        .parse()
        .map_err(|_| ConfigError::invalid("benchmark", format!("unknown benchmark '{}'", raw.benchmark)))?;
    if raw.n_runs == 0 {
        return Err(ConfigError::invalid("n_runs", "must be at least 1"));
    }
    if raw.record_every == 0 {
        return Err(ConfigError::invalid("record_every", "must be at least 1"));
    }
    if raw.algorithms.is_empty() {
        return Err(ConfigError::invalid("algorithms", "at least one [[algorithms]] table is required"));
    }
    let mut metrics = Vec::with_capacity(raw.metrics.len());
    for (i, m) in raw.metrics.iter().enumerate() {
        metrics.push(m.parse::<Metric>().map_err(|e| ConfigError::invalid(format!("metrics[{i}]"), e))?);
    }
    if metrics.is_empty() {
        return Err(ConfigError::invalid("metrics", "at least one metric is required"));
    }

    let mut algorithms: Vec<AlgorithmSpec> = Vec::with_capacity(raw.algorithms.len());
    for (i, a) in raw.algorithms.into_iter().enumerate() {
        let key = format!("algorithms[{i}]");
        let algorithm: Algorithm =
            a.name.parse().map_err(|e| ConfigError::invalid(format!("{key}.name"), format!("{e}")))?;
        let d = Hyperparams::default();
        let hp = Hyperparams {
            alpha: a.alpha.unwrap_or(d.alpha),
            beta: a.beta.unwrap_or(d.beta),
            eta: a.eta.unwrap_or(d.eta),
            reg: a.reg.unwrap_or(d.reg),
            m1: a.m1.or(a.m).unwrap_or(d.m1),
            m2: a.m2.or(a.m).unwrap_or(d.m2),
            clip: a.clip.unwrap_or(d.clip),
            symmetric: a.symmetric.unwrap_or(d.symmetric),
        };
        hp.validate().map_err(|e| ConfigError::invalid(key.clone(), e.to_string()))?;
        let label = a.label.unwrap_or_else(|| algorithm.as_str().to_string());
        if label.contains(',') || label.contains('"') || label.contains('\n') {
            return Err(ConfigError::invalid(format!("{key}.label"), "must not contain commas, quotes or newlines"));
        }
        if algorithms.iter().any(|s| s.label == label) {
            return Err(ConfigError::invalid(
                format!("{key}.label"),
                format!("duplicate label '{label}'; give each entry a distinct label"),
            ));
        }
        let warmup = a.warmup.or(raw.warmup).unwrap_or(hp.m2);
        algorithms.push(AlgorithmSpec { algorithm, label, hp, warmup });
    }

    if let Some(b) = raw.plot.bias_subtract {
        if b.tail == 0 {
            return Err(ConfigError::invalid("plot.bias_subtract.tail", "must be at least 1"));
        }
    }

    Ok(ExperimentConfig {
        name: raw.name.unwrap_or_else(|| fallback_name.to_string()),
        benchmark,
        algorithms,
        n_runs: raw.n_runs,
        n_steps: raw.n_steps,
        metrics,
        base_seed: raw.base_seed,
        record_every: raw.record_every,
        out_dir: raw.out_dir.unwrap_or_else(|| PathBuf::from("out")),
        plot: raw.plot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
benchmark = "boyan"
n_steps = 100
[[algorithms]]
name = "td"
"#;

    #[test]
    fn defaults_applied() {
        let c = parse_config(MINIMAL, "x").unwrap();
        assert_eq!(c.n_runs, 100);
        assert_eq!(c.record_every, 10);
        assert_eq!(c.metrics, vec![Metric::Rmsve]);
        assert_eq!(c.name, "x");
        assert_eq!(c.algorithms[0].warmup, 1);
        assert_eq!(c.algorithms[0].hp, Hyperparams::default());
    }

    #[test]
    fn batch_shorthand_and_warmup_default() {
        let c = parse_config(
            "benchmark = \"rw-tab\"\nn_steps = 1\n[[algorithms]]\nname = \"impression-gtd\"\nm = 32\n",
            "x",
        )
        .unwrap();
        assert_eq!((c.algorithms[0].hp.m1, c.algorithms[0].hp.m2, c.algorithms[0].warmup), (32, 32, 32));
    }

    #[test]
    fn unknown_algorithm_names_the_key() {
        let err = parse_config(&MINIMAL.replace("\"td\"", "\"sarsa\""), "x").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("algorithms[0].name"), "{msg}");
        assert!(msg.contains("sarsa"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config(&format!("{MINIMAL}gamma = 0.5\n"), "x").unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = parse_config(&format!("colour = 1\n{MINIMAL}"), "x").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn bad_values_rejected() {
        assert!(parse_config(&MINIMAL.replace("boyan", "mountain-car"), "x").is_err());
        assert!(parse_config(&format!("n_runs = 0\n{MINIMAL}"), "x").is_err());
        assert!(parse_config(&format!("metrics = [\"mse\"]\n{MINIMAL}"), "x").is_err());
        assert!(parse_config(&format!("{MINIMAL}alpha = -1.0\n"), "x").is_err());
        let dup = format!("{MINIMAL}[[algorithms]]\nname = \"td\"\n");
        assert!(parse_config(&dup, "x").unwrap_err().to_string().contains("duplicate"));
    }
}
