//! Experiment config files.
//!
//! ```json
//! {
//!   "format": "multimix-experiments",
//!   "version": 1,
//!   "out": "cw.csv",
//!   "experiments": [
//!     {
//!       "name": "curie-weiss-gaps",
//!       "seeds": [1],
//!       "sweep": { "n": [5, 7, 9], "beta": [1.5] },
//!       "accept": [{ "metric": "n3_lambda3", "min": 50 }]
//!     }
//!   ]
//! }
//! ```
//!
//! Sweep grids and scalar `params` default to the catalog entry's values;
//! unknown keys are rejected. `model` names an `ising v1` file, resolved
//! relative to the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::catalog;
use crate::record::ResultRow;
use crate::{BenchError, Result};

pub const FORMAT: &str = "multimix-experiments";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub experiments: Vec<ExperimentConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Catalog entry to run.
    pub name: String,
    #[serde(default)]
    pub model: Option<PathBuf>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub accept: Vec<Predicate>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantifier {
    #[default]
    All,
    Majority,
    Any,
}

/// Bounds on every row of one metric, optionally restricted to rows whose
/// parameters match `where`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub metric: String,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default, rename = "where")]
    pub filter: BTreeMap<String, f64>,
    #[serde(default)]
    pub quantifier: Quantifier,
}

/// Outcome of one predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub experiment: String,
    pub metric: String,
    pub pass: bool,
    pub matched: usize,
    pub satisfied: usize,
}

impl Predicate {
    fn holds(&self, v: f64) -> bool {
        self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }

    /// Evaluate against the rows of one experiment. A predicate matching no
    /// rows fails.
    pub fn evaluate(&self, experiment: &str, rows: &[ResultRow]) -> Check {
        let matching: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.experiment == experiment && r.metric == self.metric)
            .filter(|r| self.filter.iter().all(|(k, v)| r.param(k) == Some(*v)))
            .collect();
        let satisfied = matching.iter().filter(|r| self.holds(r.value)).count();
        let matched = matching.len();
        let pass = matched > 0
            && match self.quantifier {
                Quantifier::All => satisfied == matched,
                Quantifier::Majority => 2 * satisfied > matched,
                Quantifier::Any => satisfied > 0,
            };
        Check { experiment: experiment.into(), metric: self.metric.clone(), pass, matched, satisfied }
    }
}

/// A parsed and validated config with model paths resolved.
#[derive(Debug, Clone)]
pub struct Config {
    pub out: Option<PathBuf>,
    pub experiments: Vec<ExperimentConfig>,
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let file: ConfigFile =
            serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        if file.format != FORMAT || file.version != 1 {
            return Err(BenchError::Config(format!(
                "expected format {FORMAT} version 1, got {} version {}",
                file.format, file.version
            )));
        }
        let mut experiments = file.experiments;
        for e in &mut experiments {
            validate(e)?;
            if let Some(m) = &e.model {
                let path = base.join(m);
                if !path.is_file() {
                    return Err(BenchError::Config(format!(
                        "{}: model file {} not found",
                        e.name,
                        path.display()
                    )));
                }
                e.model = Some(path);
            }
        }
        Ok(Config { out: file.out.map(|o| base.join(o)), experiments })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }
}

fn validate(e: &ExperimentConfig) -> Result<()> {
    let entry = catalog::lookup(&e.name)
        .ok_or_else(|| BenchError::Config(format!("unknown experiment `{}`", e.name)))?;
    if e.seeds.is_empty() {
        return Err(BenchError::Config(format!("{}: seed list is empty", e.name)));
    }
    for (k, grid) in &e.sweep {
        if !entry.sweep.iter().any(|(name, _)| name == k) {
            return Err(BenchError::Config(format!("{}: unknown sweep axis `{k}`", e.name)));
        }
        if grid.is_empty() {
            return Err(BenchError::Config(format!("{}: sweep `{k}` is empty", e.name)));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(BenchError::Config(format!("{}: sweep `{k}` has a non-finite value", e.name)));
        }
    }
    for k in e.params.keys() {
        if !entry.params.iter().any(|(name, _)| name == k) {
            return Err(BenchError::Config(format!("{}: unknown parameter `{k}`", e.name)));
        }
    }
    if e.model.is_some() && !entry.uses_model {
        return Err(BenchError::Config(format!("{} does not take a model file", e.name)));
    }
    for p in &e.accept {
        if p.min.is_none() && p.max.is_none() {
            return Err(BenchError::Config(format!("{}: predicate on {} has no bound", e.name, p.metric)));
        }
    }
    Ok(())
}
