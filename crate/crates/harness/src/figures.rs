//! Built-in experiment configs, one per reproduced figure.

use crate::config::{parse_config, ConfigError, ExperimentConfig};

macro_rules! figure {
    ($name:literal) => {
        ($name, include_str!(concat!("../configs/", $name, ".toml")))
    };
}

pub const FIGURES: [(&str, &str); 16] = [
    figure!("boyan-compare"),
    figure!("boyan-batch"),
    figure!("boyan-stepsize"),
    figure!("boyan-linear-rate"),
    figure!("rw-tab-compare"),
    figure!("rw-tab-batch"),
    figure!("rw-tab-stepsize"),
    figure!("rw-inv-pbe"),
    figure!("rw-inv-rmsve"),
    figure!("rw-inv-batch"),
    figure!("rw-inv-stepsize"),
    figure!("rw-dep-pbe"),
    figure!("rw-dep-rmsve"),
    figure!("rw-dep-batch"),
    figure!("rw-dep-stepsize"),
    figure!("baird"),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    FIGURES.iter().map(|(n, _)| *n)
}

/// The TOML source of a built-in figure.
pub fn source(name: &str) -> Option<&'static str> {
    FIGURES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn figure(name: &str) -> Option<Result<ExperimentConfig, ConfigError>> {
    source(name).map(|s| parse_config(s, name))
}
