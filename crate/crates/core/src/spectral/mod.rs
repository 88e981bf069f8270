//! Exact spectral analysis of Glauber dynamics on finite product spaces.
//!
//! The Glauber generator `𝓛 = Σᵢ (Eᵢ − I)` is reversible with respect to `π`,
//! so `A = D^{1/2}(−𝓛)D^{−1/2}` with `D = diag(π)` is symmetric. We
//! eigendecompose `A` and recover π-orthonormal eigenfunctions
//! `fᵢ = D^{−1/2}vᵢ`.
//!
//! Within a degenerate eigenspace the returned basis is arbitrary. Balance
//! values and χ² trajectories only depend on projections onto whole
//! eigenspaces, so they are basis independent whenever `k` does not split a
//! degenerate cluster.

mod balance;
mod lanczos;

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::measures::{parse_floats, parse_header, FiniteDistribution, ProductSpace};
use crate::{Error, Result};

pub use balance::{minimal_balanced_initialization, BalancedInit};
pub use lanczos::eigendecompose_iterative;

/// Largest state space eigendecomposed densely (14 spins).
pub const DENSE_LIMIT: usize = 1 << 14;

/// The symmetrized Glauber generator, stored sparsely.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    space: ProductSpace,
    stationary: FiniteDistribution,
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    // off-diagonal transition rates of −𝓛, aligned with `cols`
    rates: Vec<f64>,
}

/// Build the Glauber generator of `pi` on `space`.
pub fn build_glauber_generator(
    space: &ProductSpace,
    pi: &FiniteDistribution,
) -> Result<GeneratorMatrix> {
    if pi.len() != space.size() {
        return Err(Error::DimensionMismatch(pi.len(), space.size()));
    }
    if let Some(x) = pi.probs().iter().position(|p| *p <= 0.0) {
        return Err(Error::Support(format!("stationary measure vanishes at state {x}")));
    }
    let m = space.size();
    let n = space.sites();
    let a = space.alphabet();
    let p = pi.probs();
    let nnz = m * n * (a - 1);
    let mut diag = vec![0.0; m];
    let mut row_ptr = Vec::with_capacity(m + 1);
    let mut cols = Vec::with_capacity(nnz);
    let mut vals = Vec::with_capacity(nnz);
    let mut rates = Vec::with_capacity(nnz);
    row_ptr.push(0);
    let mut fiber = vec![0usize; a];
    for x in 0..m {
        for i in 0..n {
            for (letter, y) in fiber.iter_mut().enumerate() {
                *y = space.with_digit(x, i, letter);
            }
            let z: f64 = fiber.iter().map(|&y| p[y]).sum();
            diag[x] += 1.0 - p[x] / z;
            for &y in fiber.iter().filter(|&&y| y != x) {
                cols.push(y as u32);
                vals.push(-(p[x] * p[y]).sqrt() / z);
                rates.push(p[y] / z);
            }
        }
        row_ptr.push(cols.len());
    }
    Ok(GeneratorMatrix {
        space: *space,
        stationary: pi.clone(),
        diag,
        row_ptr,
        cols,
        vals,
        rates,
    })
}

impl GeneratorMatrix {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn space(&self) -> &ProductSpace {
        &self.space
    }

    pub fn stationary(&self) -> &FiniteDistribution {
        &self.stationary
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = self.diag[r] * x[r];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *out = acc;
        }
    }

    /// Transitions `(y, rate)` out of state `x` under `−𝓛`.
    pub fn transitions(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[x]..self.row_ptr[x + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.rates[range])
            .map(|(&y, &r)| (y as usize, r))
    }

    /// Upper bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_upper(&self) -> f64 {
        (0..self.size())
            .map(|r| {
                let off: f64 = self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum();
                self.diag[r] + off
            })
            .fold(0.0, f64::max)
    }

    /// Lower bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.size())
            .map(|r| {
                let off: f64 = self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum();
                self.diag[r] - off
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn check_dense(&self) -> Result<()> {
        if self.size() > DENSE_LIMIT {
            Err(Error::Capacity(format!(
                "{} states exceeds the dense limit {DENSE_LIMIT}",
                self.size()
            )))
        } else {
            Ok(())
        }
    }

    /// The symmetric matrix `A` as a dense matrix.
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        let m = self.size();
        let mut a = DMatrix::zeros(m, m);
        for r in 0..m {
            a[(r, r)] = self.diag[r];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                a[(r, self.cols[k] as usize)] += self.vals[k];
            }
        }
        Ok(a)
    }

    /// The generator `𝓛` itself (rows sum to zero), so that `exp(t𝓛)` is the
    /// continuous-time transition matrix.
    pub fn generator_dense(&self) -> Result<DMatrix<f64>> {
        self.check_dense()?;
        let m = self.size();
        let mut l = DMatrix::zeros(m, m);
        for x in 0..m {
            let mut out = 0.0;
            for (y, r) in self.transitions(x) {
                l[(x, y)] += r;
                out += r;
            }
            l[(x, x)] -= out;
        }
        Ok(l)
    }

    /// One discrete Glauber step, `P = I + 𝓛/n`.
    pub fn discrete_kernel_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.space.sites() as f64;
        let mut p = self.generator_dense()? / n;
        for x in 0..self.size() {
            p[(x, x)] += 1.0;
        }
        Ok(p)
    }
}

/// Eigenvalues of `−𝓛` in ascending order with π-orthonormal eigenfunctions.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenfunctions: DMatrix<f64>,
    stationary: FiniteDistribution,
    complete: bool,
}

/// First `k_max` eigenpairs of `−𝓛`.
///
/// Chains up to [`DENSE_LIMIT`] states are solved densely; larger chains use
/// Lanczos and yield a partial spectrum.
pub fn eigendecompose(g: &GeneratorMatrix, k_max: usize) -> Result<Spectrum> {
    let m = g.size();
    if k_max == 0 || k_max > m {
        return Err(Error::Parameter(format!("k_max = {k_max} outside 1..={m}")));
    }
    if m > DENSE_LIMIT {
        return eigendecompose_iterative(g, k_max);
    }
    let eig = g.dense()?.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order[..k_max].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m, k_max);
    for (c, &i) in order[..k_max].iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    Ok(Spectrum::from_symmetric(eigenvalues, vectors, g.stationary().clone(), k_max == m))
}

impl Spectrum {
    /// Convert eigenvectors of `A` into normalized eigenfunctions.
    pub(crate) fn from_symmetric(
        eigenvalues: Vec<f64>,
        mut vectors: DMatrix<f64>,
        stationary: FiniteDistribution,
        complete: bool,
    ) -> Self {
        let m = vectors.nrows();
        for (r, p) in stationary.probs().iter().enumerate() {
            let s = 1.0 / p.sqrt();
            for c in 0..vectors.ncols() {
                vectors[(r, c)] *= s;
            }
        }
        for c in 0..vectors.ncols() {
            let mut col = vectors.column_mut(c);
            let max = col.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let lead = col.iter().position(|v| v.abs() >= max * (1.0 - 1e-9)).unwrap_or(0);
            if col[lead] < 0.0 {
                col.neg_mut();
            }
        }
        if vectors.ncols() > 0 && eigenvalues[0].abs() < 1e-8 {
            vectors.set_column(0, &DVector::from_element(m, 1.0));
        }
        Spectrum { eigenvalues, eigenfunctions: vectors, stationary, complete }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `m × k` matrix whose column `i` is `f_{i+1}`.
    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn eigenfunction(&self, i: usize) -> Vec<f64> {
        self.eigenfunctions.column(i).iter().copied().collect()
    }

    pub fn stationary(&self) -> &FiniteDistribution {
        &self.stationary
    }

    /// Number of computed eigenpairs.
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of states.
    pub fn states(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Replace the eigenfunction basis, keeping eigenvalues. Used to check
    /// that derived quantities do not depend on the basis chosen inside a
    /// degenerate eigenspace.
    pub fn with_eigenfunctions(&self, eigenfunctions: DMatrix<f64>) -> Result<Self> {
        if eigenfunctions.shape() != self.eigenfunctions.shape() {
            return Err(Error::DimensionMismatch(
                eigenfunctions.ncols(),
                self.eigenfunctions.ncols(),
            ));
        }
        Ok(Spectrum { eigenfunctions, ..self.clone() })
    }

    /// `Cᵢ = E_{μ₀} fᵢ` for every computed eigenfunction.
    pub fn coefficients(&self, mu0: &FiniteDistribution) -> Result<Vec<f64>> {
        if mu0.len() != self.states() {
            return Err(Error::DimensionMismatch(mu0.len(), self.states()));
        }
        let mu = DVector::from_column_slice(mu0.probs());
        Ok((self.eigenfunctions.transpose() * mu).iter().copied().collect())
    }

    /// `spectrum v1 <m> <k>`, then eigenvalues, then the eigenfunction matrix
    /// row by row.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "spectrum v1 {} {}", self.states(), self.len())?;
        for l in &self.eigenvalues {
            writeln!(w, "{l}")?;
        }
        for r in 0..self.states() {
            let row: Vec<String> =
                self.eigenfunctions.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Eigenvalues and eigenfunction matrix read back from a spectrum file.
pub fn read_spectrum_text<R: BufRead>(r: R) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))??;
    let dims = parse_header(&header, "spectrum", 2)?;
    let (m, k) = (dims[0], dims[1]);
    let mut eigenvalues = Vec::with_capacity(k);
    for _ in 0..k {
        let line = lines.next().ok_or_else(|| Error::Parse("missing eigenvalue".into()))??;
        eigenvalues.push(
            line.trim().parse().map_err(|_| Error::Parse(format!("bad eigenvalue `{line}`")))?,
        );
    }
    let mut f = DMatrix::zeros(m, k);
    for r in 0..m {
        let line = lines.next().ok_or_else(|| Error::Parse("missing row".into()))??;
        let row = parse_floats(&line)?;
        if row.len() != k {
            return Err(Error::Parse(format!("row {r} has {} entries", row.len())));
        }
        for (c, v) in row.into_iter().enumerate() {
            f[(r, c)] = v;
        }
    }
    Ok((eigenvalues, f))
}

/// `λ_{k+1}`, the spectral gap after eigenvalue `k`.
pub fn higher_order_gap(s: &Spectrum, k: usize) -> Result<f64> {
    if k == 0 || k >= s.states() {
        return Err(Error::Parameter(format!("k = {k} outside 1..{}", s.states())));
    }
    s.eigenvalues.get(k).copied().ok_or_else(|| {
        Error::Capability(format!("only {} eigenvalues were computed", s.len()))
    })
}

/// Projection of an initialization onto the slow eigenfunctions.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceStatistic {
    pub k: usize,
    pub value: f64,
    /// `C₂, …, C_k`.
    pub coefficients: Vec<f64>,
}

/// `‖(E_{μ₀}f₂, …, E_{μ₀}f_k)‖`. For `k = 1` the vector is empty and the
/// value is 0.
pub fn balance_statistic(
    s: &Spectrum,
    mu0: &FiniteDistribution,
    k: usize,
) -> Result<BalanceStatistic> {
    if k == 0 {
        return Err(Error::Parameter("k must be positive".into()));
    }
    if k > s.len() {
        return Err(Error::Capability(format!(
            "balance at k = {k} needs {k} eigenfunctions, have {}",
            s.len()
        )));
    }
    let c = s.coefficients(mu0)?;
    let coefficients = c[1..k].to_vec();
    let value = coefficients.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(BalanceStatistic { k, value, coefficients })
}

fn require_complete(s: &Spectrum) -> Result<()> {
    if s.is_complete() {
        Ok(())
    } else {
        Err(Error::Capability(format!(
            "exact evolution needs the full spectrum; {} of {} eigenpairs available",
            s.len(),
            s.states()
        )))
    }
}

/// `χ²(μ_t ‖ π) = Σ_{i≥2} e^{−2λᵢt} Cᵢ²` at each time.
pub fn chi2_trajectory(s: &Spectrum, mu0: &FiniteDistribution, times: &[f64]) -> Result<Vec<f64>> {
    require_complete(s)?;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::Parameter(format!("negative time {t}")));
    }
    let c = s.coefficients(mu0)?;
    Ok(times
        .iter()
        .map(|&t| {
            s.eigenvalues[1..]
                .iter()
                .zip(&c[1..])
                .map(|(l, ci)| (-2.0 * l * t).exp() * ci * ci)
                .sum()
        })
        .collect())
}

/// The law `μ₀ e^{t𝓛}` by spectral expansion.
pub fn evolve(s: &Spectrum, mu0: &FiniteDistribution, t: f64) -> Result<FiniteDistribution> {
    require_complete(s)?;
    if !(t >= 0.0) {
        return Err(Error::Parameter(format!("negative time {t}")));
    }
    let c = s.coefficients(mu0)?;
    let decayed = DVector::from_iterator(
        c.len(),
        c.iter().zip(&s.eigenvalues).map(|(ci, l)| ci * (-l * t).exp()),
    );
    let density = &s.eigenfunctions * decayed;
    let weights: Vec<f64> = density
        .iter()
        .zip(s.stationary.probs())
        .map(|(h, p)| (h * p).max(0.0))
        .collect();
    FiniteDistribution::from_weights(weights)
}

/// Outcome of checking `χ²(μ_t) ≤ ε² + e^{−α(t−t₀)} χ²(μ_{t₀})`.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub t0: f64,
    pub t: f64,
    pub lhs: f64,
    pub bound: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub holds: bool,
}

pub fn verify_balance_contraction(
    s: &Spectrum,
    mu0: &FiniteDistribution,
    k: usize,
    t0: f64,
    t: f64,
) -> Result<ContractionReport> {
    if !(t0 >= 0.0 && t >= t0) {
        return Err(Error::Parameter(format!("need t ≥ t0 ≥ 0, got t0 = {t0}, t = {t}")));
    }
    let epsilon = balance_statistic(s, mu0, k)?.value;
    let alpha = higher_order_gap(s, k)?;
    let chi = chi2_trajectory(s, mu0, &[t0, t])?;
    let bound = epsilon * epsilon + (-alpha * (t - t0)).exp() * chi[0];
    Ok(ContractionReport {
        t0,
        t,
        lhs: chi[1],
        bound,
        epsilon,
        alpha,
        holds: chi[1] <= bound + 1e-9,
    })
}
