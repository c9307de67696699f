//! Config-driven experiments: mixtures of mechanisms, estimator sweeps and
//! CSV results.

pub mod config;
pub mod output;
pub mod run;

pub use config::{
    AlphabetSpec, DataSpec, EstimationSpec, EstimatorKind, ExperimentConfig, Family, MechanismSpec, MetricKind,
    PostSpec, RunSpec, Validated,
};
pub use output::{aggregate, emit_aggregate_csv, emit_csv, parse_csv, to_csv_string, AggregateRow, Stat, HEADER};
pub use run::{allocate, load_population, run, run_cell, run_validated, simulate, Population};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub n: u64,
    pub trial: u32,
    pub estimator: String,
    pub post: String,
    pub metric: String,
    pub value: f64,
    /// EM iterations; blank for closed-form estimators
    pub iterations: Option<usize>,
    pub wall_ms: u64,
}

/// Bundled mixture configurations, by name.
pub const PRESETS: [(&str, &str); 10] = [
    ("rappor-high-privacy", include_str!("../../presets/rappor-high-privacy.toml")),
    ("rappor-low-privacy", include_str!("../../presets/rappor-low-privacy.toml")),
    ("krr-linear", include_str!("../../presets/krr-linear.toml")),
    ("krr-planar", include_str!("../../presets/krr-planar.toml")),
    ("geometric-linear", include_str!("../../presets/geometric-linear.toml")),
    ("geometric-planar", include_str!("../../presets/geometric-planar.toml")),
    ("geometric-krr-linear", include_str!("../../presets/geometric-krr-linear.toml")),
    ("geometric-krr-planar", include_str!("../../presets/geometric-krr-planar.toml")),
    ("shokri-linear", include_str!("../../presets/shokri-linear.toml")),
    ("shokri-planar", include_str!("../../presets/shokri-planar.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("no preset named {name:?}")))
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(preset_text(name)?)
}
