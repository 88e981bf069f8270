//! Execution of a config file.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use multimix::ising::IsingModel;
use multimix::rng::derive_seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{self, Point, Setup};
use crate::config::{Check, Config};
use crate::record::{write_csv_atomic, ResultRow};
use crate::{BenchError, Result};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's output path.
    pub out: Option<PathBuf>,
    /// Replaces every configured seed `s` by `derive_seed(seed, s)`.
    pub seed: Option<u64>,
    /// Append per-task wall-clock seconds to the CSV.
    pub timings: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub experiment: String,
    pub metric: String,
    pub pass: bool,
    pub matched: usize,
    pub satisfied: usize,
}

impl From<&Check> for CheckSummary {
    fn from(c: &Check) -> Self {
        CheckSummary {
            experiment: c.experiment.clone(),
            metric: c.metric.clone(),
            pass: c.pass,
            matched: c.matched,
            satisfied: c.satisfied,
        }
    }
}

/// What `experiment run` prints on stdout.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub out: Option<String>,
    pub rows: usize,
    pub checks: Vec<CheckSummary>,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub checks: Vec<Check>,
    pub out: Option<PathBuf>,
}

impl RunReport {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            out: self.out.as_ref().map(|p| p.display().to_string()),
            rows: self.rows.len(),
            checks: self.checks.iter().map(CheckSummary::from).collect(),
            failed: self.failed(),
        }
    }
}

fn load_model(path: &Path) -> Result<IsingModel> {
    let f = fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    Ok(IsingModel::read_text(BufReader::new(f))?)
}

/// Run every task of every experiment in `config` and collect rows in
/// config order, then sweep order, then seed order. Does not write output.
pub fn run(config: &Config, opts: &RunOptions) -> Result<(Vec<ResultRow>, Vec<Check>)> {
    let mut setups = Vec::new();
    let mut tasks: Vec<(usize, Point)> = Vec::new();
    for (i, e) in config.experiments.iter().enumerate() {
        let entry = catalog::lookup(&e.name)
            .ok_or_else(|| BenchError::Config(format!("unknown experiment `{}`", e.name)))?;
        let model = e.model.as_deref().map(load_model).transpose()?;
        let seeds: Vec<u64> = match opts.seed {
            Some(base) => e.seeds.iter().map(|&s| derive_seed(base, s)).collect(),
            None => e.seeds.clone(),
        };
        setups.push((entry, Setup::new(entry, &e.params, model)));
        tasks.extend(catalog::expand(entry, &e.sweep, &seeds).into_iter().map(|p| (i, p)));
    }

    // indexed collect keeps task order regardless of scheduling
    let results: Vec<Result<Vec<ResultRow>>> = tasks
        .par_iter()
        .map(|(i, point)| {
            let (entry, setup) = &setups[*i];
            let start = Instant::now();
            let metrics = (entry.run)(setup, point)?;
            let runtime = start.elapsed().as_secs_f64();
            Ok(metrics
                .into_iter()
                .map(|m| ResultRow {
                    experiment: entry.name.to_string(),
                    parameters: point.values.clone(),
                    seed: Some(point.seed),
                    metric: m.name.to_string(),
                    value: m.value,
                    stderr: m.stderr,
                    runtime,
                })
                .collect())
        })
        .collect();

    let mut per_experiment: Vec<Vec<ResultRow>> = vec![Vec::new(); setups.len()];
    for ((i, _), r) in tasks.iter().zip(results) {
        per_experiment[*i].extend(r?);
    }
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, ((entry, setup), mut exp_rows)) in setups.iter().zip(per_experiment).enumerate() {
        if let Some(summarize) = entry.summarize {
            let extra = summarize(setup, &exp_rows)?;
            exp_rows.extend(extra);
        }
        if let Some(r) = exp_rows.iter().find(|r| r.value.is_nan()) {
            return Err(BenchError::Core(multimix::Error::Numeric(format!(
                "{} produced NaN for {} at {}",
                r.experiment,
                r.metric,
                r.parameter_text()
            ))));
        }
        let e = &config.experiments[i];
        checks.extend(e.accept.iter().map(|p| p.evaluate(&e.name, &exp_rows)));
        rows.extend(exp_rows);
    }
    Ok((rows, checks))
}

/// Load, run, write the CSV atomically and evaluate acceptance predicates.
/// Failed predicates are reported in the returned checks, not as an error,
/// so the CSV is always written first.
pub fn run_config(path: &Path, opts: &RunOptions) -> Result<RunReport> {
    let config = Config::load(path)?;
    let (rows, checks) = run(&config, opts)?;
    let out = opts.out.clone().or(config.out.clone());
    if let Some(p) = &out {
        write_csv_atomic(p, &rows, opts.timings)?;
    }
    Ok(RunReport { rows, checks, out })
}
