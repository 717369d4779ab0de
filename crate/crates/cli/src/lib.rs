//! Configuration-driven runner for the cloaklab experiment suites.
//!
//! Exit status: 0 when every verdict passes, 1 on a failed verdict, 2 on a
//! parse error, 3 on a validation error, 4 on a numerical or output failure.

pub mod config;
pub mod suites;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use config::{Experiment, ExperimentConfig, Suite};
use suites::Verdict;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] cloaklab::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) => 4,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub suite: String,
    pub verdicts: Vec<Verdict>,
    pub runtime_seconds: f64,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub suite: Option<Suite>,
    pub out: Option<PathBuf>,
}

/// Loads, validates and runs a configuration, writing the CSV files and
/// `summary.json` into the output directory.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<Summary, CliError> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(s) = overrides.suite {
        cfg.suite = s;
    }
    if let Some(o) = &overrides.out {
        cfg.output_dir = o.clone();
    }
    let exp = Experiment::new(cfg)?;
    run_experiment(&exp)
}

pub fn run_experiment(exp: &Experiment) -> Result<Summary, CliError> {
    let start = Instant::now();
    log::info!(
        "suite {} with {} eps values, h = {}",
        exp.suite.name(),
        exp.eps_list.len(),
        exp.h
    );
    let out = suites::run_suite(exp, exp.suite)?;
    std::fs::create_dir_all(&exp.output_dir)?;
    for (name, body) in &out.files {
        std::fs::write(exp.output_dir.join(name), body)?;
    }
    for v in &out.verdicts {
        log::info!(
            "{} {}: {} (tolerance {})",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.value,
            v.tolerance
        );
    }
    let summary = Summary {
        suite: exp.suite.name().to_string(),
        verdicts: out.verdicts,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.into()))?;
    std::fs::write(exp.output_dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}
