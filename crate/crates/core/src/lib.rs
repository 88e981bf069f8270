//! # multimix
//!
//! Sampling multimodal distributions with Markov chains started from data.
//!
//! The crate is organised around small, exactly solvable instances:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`measures`] | finite distributions, sample sets, TV / χ² / KL / Rényi divergences |
//! | [`spectral`] | Glauber generators, eigendecomposition, higher-order gaps, eigenfunction balance |
//! | [`ising`] | Ising, Curie–Weiss, mean-field Potts and low-rank Ising models with Glauber dynamics |
//! | [`langevin`] | Gaussian-type mixtures, exact and perturbed scores, Langevin Monte Carlo |
//! | [`hs`] | Hubbard–Stratonovich mixture decomposition of low-rank spin models |
//! | [`ple`] | constrained pseudolikelihood fitting and the learn-then-sample pipeline |
//!
//! Every random routine takes an explicit seed and uses ChaCha20 streams, so
//! runs are reproducible bit for bit regardless of thread count.

use thiserror::Error;

pub mod hs;
pub mod ising;
pub mod langevin;
pub mod measures;
pub mod ple;
pub mod rng;
pub mod spectral;

pub use measures::{
    chi2_divergence, empirical_tv_continuous, kl_divergence, renyi_divergence, tv_distance,
    DivergenceReport, ExtReal, FiniteDistribution, ProductSpace, SampleSet,
};

/// Errors shared by every module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("support error: {0}")]
    Support(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unsupported on this input: {0}")]
    Capability(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Numerically stable `ln(1 + e^z)`.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
