//! Experiment runner behind the `multimix` command-line tool.
//!
//! A config file lists named experiments from the [`catalog`], each with its
//! seeds, sweep grids and acceptance predicates. [`runner::run_config`]
//! executes every (experiment, sweep point, seed) task on the worker pool,
//! orders the rows deterministically and writes one CSV atomically.

pub mod catalog;
pub mod config;
pub mod record;
pub mod runner;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] multimix::Error),

    #[error("{0} acceptance predicate(s) failed")]
    Acceptance(usize),

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl BenchError {
    /// Process exit code: 2 for unparsable input, 3 for capacity limits,
    /// 1 for failed acceptance predicates and 4 for any other failure.
    pub fn exit_code(&self) -> i32 {
        use multimix::Error as E;
        match self {
            BenchError::Config(_) => 2,
            BenchError::Io { .. } => 2,
            BenchError::Acceptance(_) => 1,
            BenchError::Core(e) => match e {
                E::Parse(_) | E::Parameter(_) | E::DimensionMismatch(..) | E::Io(_) => 2,
                E::Capacity(_) => 3,
                _ => 4,
            },
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        BenchError::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
