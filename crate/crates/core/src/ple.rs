//! Constrained pseudolikelihood estimation of Ising models and the
//! learn-then-sample pipeline.
//!
//! The estimator minimizes the negative pseudolikelihood
//! `(1/m) Σ_samples Σᵢ softplus(−2xᵢ(J_{i,∼i}·x_{∼i} + bᵢ))` over symmetric `J`
//! with zero diagonal and `maxᵢ Σ_{j≠i}|Jᵢⱼ| + |bᵢ| ≤ R`, using monotone
//! accelerated projected gradient.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;

use crate::ising::{glauber_terminal, sample_exact, IsingModel};
use crate::measures::{FiniteDistribution, ProductSpace, SampleSet};
use crate::spectral::{balance_statistic, eigendecompose, evolve};
use crate::{sigmoid, softplus, tv_distance, Error, Result};

/// Largest system certified by exact evolution.
pub const MAX_EXACT_CERTIFY: usize = 10;

/// Largest system certified by Monte Carlo.
pub const MAX_MONTE_CARLO_CERTIFY: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PleConfig {
    /// Row-ℓ₁ budget `R`.
    pub radius: f64,
    /// Initial step; defaults to `0.5/(n + 1)`, the inverse of the largest
    /// sample second moment.
    pub step: Option<f64>,
    pub max_iters: usize,
    /// Threshold on the norm of the projected-gradient mapping.
    pub tolerance: f64,
    pub seed: u64,
}

impl PleConfig {
    pub fn new(radius: f64) -> Self {
        PleConfig { radius, step: None, max_iters: 5000, tolerance: 1e-6, seed: 0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Parameter(format!("constraint radius {}", self.radius)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Parameter(format!("tolerance {}", self.tolerance)));
        }
        if let Some(s) = self.step {
            if !(s > 0.0) {
                return Err(Error::Parameter(format!("step {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: IsingModel,
    pub objective: f64,
    /// Conditional KL to the truth, when the truth is known.
    pub eps_hat: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
}

/// Distinct configurations with their empirical frequencies.
struct Data {
    configs: Vec<Vec<f64>>,
    weights: Vec<f64>,
    n: usize,
}

impl Data {
    fn new(samples: &SampleSet<Vec<i8>>) -> Self {
        let mut counts: BTreeMap<&[i8], usize> = BTreeMap::new();
        for p in samples.points() {
            *counts.entry(p.as_slice()).or_insert(0) += 1;
        }
        let total = samples.len() as f64;
        let (configs, weights) = counts
            .into_iter()
            .map(|(x, c)| (x.iter().map(|&s| s as f64).collect(), c as f64 / total))
            .unzip();
        Data { configs, weights, n: samples.dim() }
    }
}

#[derive(Clone)]
struct Params {
    j: DMatrix<f64>,
    b: DVector<f64>,
}

impl Params {
    fn zeros(n: usize) -> Self {
        Params { j: DMatrix::zeros(n, n), b: DVector::zeros(n) }
    }

    fn axpy(&self, a: f64, other: &Params) -> Params {
        Params { j: &self.j + &other.j * a, b: &self.b + &other.b * a }
    }

    fn sub(&self, other: &Params) -> Params {
        self.axpy(-1.0, other)
    }

    fn dot(&self, other: &Params) -> f64 {
        self.j.dot(&other.j) + self.b.dot(&other.b)
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

fn local_fields(p: &Params, x: &[f64], z: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        let mut acc = p.b[i];
        for k in 0..n {
            if k != i {
                acc += p.j[(i, k)] * x[k];
            }
        }
        z[i] = acc;
    }
}

fn objective(data: &Data, p: &Params) -> f64 {
    let mut z = vec![0.0; data.n];
    let mut total = 0.0;
    for (x, w) in data.configs.iter().zip(&data.weights) {
        local_fields(p, x, &mut z);
        total += w * x.iter().zip(&z).map(|(xi, zi)| softplus(-2.0 * xi * zi)).sum::<f64>();
    }
    total
}

/// Objective and gradient over symmetric zero-diagonal `J`.
fn objective_grad(data: &Data, p: &Params) -> (f64, Params) {
    let n = data.n;
    let mut z = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut total = 0.0;
    let mut grad = Params::zeros(n);
    for (x, w) in data.configs.iter().zip(&data.weights) {
        local_fields(p, x, &mut z);
        for i in 0..n {
            let u = -2.0 * x[i] * z[i];
            total += w * softplus(u);
            g[i] = -2.0 * x[i] * sigmoid(u) * w;
        }
        for i in 0..n {
            grad.b[i] += g[i];
            for k in 0..n {
                if k != i {
                    grad.j[(i, k)] += g[i] * x[k];
                }
            }
        }
    }
    grad.j = (&grad.j + grad.j.transpose()) * 0.5;
    (total, grad)
}

/// Euclidean projection of `v` onto the ℓ₁ ball of radius `r`.
fn project_l1(v: &mut [f64], r: f64) {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total <= r {
        return;
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumulative += uj;
        let t = (cumulative - r) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - theta).max(0.0);
    }
}

fn project_rows(p: &Params, r: f64) -> Params {
    let n = p.b.len();
    let mut out = p.clone();
    let mut row = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            row[k] = if k == i { p.b[i] } else { p.j[(i, k)] };
        }
        project_l1(&mut row, r);
        for k in 0..n {
            if k == i {
                out.b[i] = row[k];
                out.j[(i, i)] = 0.0;
            } else {
                out.j[(i, k)] = row[k];
            }
        }
    }
    out
}

fn project_symmetric(p: &Params) -> Params {
    let mut j = (&p.j + p.j.transpose()) * 0.5;
    j.fill_diagonal(0.0);
    Params { j, b: p.b.clone() }
}

fn max_row_norm(p: &Params) -> f64 {
    let n = p.b.len();
    (0..n)
        .map(|i| (0..n).filter(|&k| k != i).map(|k| p.j[(i, k)].abs()).sum::<f64>() + p.b[i].abs())
        .fold(0.0, f64::max)
}

/// Projection onto symmetric zero-diagonal parameters with row-ℓ₁ norms at
/// most `r`, by Dykstra's alternating projections, finished by a uniform
/// rescale if rounding left the iterate marginally outside.
fn project_feasible(p: &Params, r: f64) -> Params {
    let mut x = project_symmetric(p);
    if max_row_norm(&x) <= r {
        return x;
    }
    let n = p.b.len();
    let mut pp = Params::zeros(n);
    let mut qq = Params::zeros(n);
    for _ in 0..2000 {
        let y = project_rows(&x.axpy(1.0, &pp), r);
        pp = x.axpy(1.0, &pp).sub(&y);
        let next = project_symmetric(&y.axpy(1.0, &qq));
        qq = y.axpy(1.0, &qq).sub(&next);
        let change = next.sub(&x).norm();
        x = next;
        if change < 1e-14 * (1.0 + x.norm()) {
            break;
        }
    }
    let worst = max_row_norm(&x);
    if worst > r {
        let s = r / worst;
        x.j *= s;
        x.b *= s;
    }
    x
}

/// Negative pseudolikelihood averaged over samples.
pub fn pseudolikelihood_loss(m: &IsingModel, samples: &SampleSet<Vec<i8>>) -> Result<f64> {
    if samples.dim() != m.n() {
        return Err(Error::DimensionMismatch(samples.dim(), m.n()));
    }
    let data = Data::new(samples);
    Ok(objective(&data, &Params { j: m.coupling().clone(), b: m.field().clone() }))
}

/// Gradient of [`pseudolikelihood_loss`] with respect to `(J, b)` over
/// symmetric zero-diagonal `J`.
pub fn pseudolikelihood_gradient(
    m: &IsingModel,
    samples: &SampleSet<Vec<i8>>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if samples.dim() != m.n() {
        return Err(Error::DimensionMismatch(samples.dim(), m.n()));
    }
    let data = Data::new(samples);
    let mut j = m.coupling().clone();
    j.fill_diagonal(0.0);
    let (_, g) = objective_grad(&data, &Params { j, b: m.field().clone() });
    Ok((g.j, g.b))
}

/// Fit `(J, b)` by constrained pseudolikelihood.
pub fn fit(samples: &SampleSet<Vec<i8>>, cfg: &PleConfig) -> Result<FitReport> {
    cfg.validate()?;
    let data = Data::new(samples);
    let n = data.n;
    let mut lipschitz = 1.0 / cfg.step.unwrap_or(0.5 / (n as f64 + 1.0));
    let mut x = Params::zeros(n);
    let mut fx = objective(&data, &x);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let (fy, gy) = objective_grad(&data, &y);
        let (z, fz) = loop {
            let z = project_feasible(&y.axpy(-1.0 / lipschitz, &gy), cfg.radius);
            let d = z.sub(&y);
            let fz = objective(&data, &z);
            let dd = d.dot(&d);
            // slack covers rounding in the summed objective
            if dd == 0.0 || fz <= fy + gy.dot(&d) + 0.5 * lipschitz * dd + 1e-12 * fy.abs().max(1.0) {
                break (z, fz);
            }
            lipschitz *= 2.0;
        };
        let previous = x.clone();
        if fz <= fx {
            x = z.clone();
            fx = fz;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = x.axpy(t / t_next, &z.sub(&x)).axpy((t - 1.0) / t_next, &x.sub(&previous));
        t = t_next;
        trace.push(fx);

        let (_, gx) = objective_grad(&data, &x);
        let mapped = project_feasible(&x.axpy(-1.0 / lipschitz, &gx), cfg.radius);
        if x.sub(&mapped).norm() * lipschitz < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(FitReport {
        model: IsingModel::new(x.j, x.b)?,
        objective: fx,
        eps_hat: None,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// `KL(Bern(p) ‖ Bern(q))` for `p = σ(2a)`, `q = σ(2b)`, from local fields.
fn binary_kl_from_fields(a: f64, b: f64) -> f64 {
    // ln p = −softplus(−2a), ln(1−p) = −softplus(2a)
    let p = sigmoid(2.0 * a);
    let kl = p * (softplus(-2.0 * b) - softplus(-2.0 * a))
        + (1.0 - p) * (softplus(2.0 * b) - softplus(2.0 * a));
    kl.max(0.0)
}

fn conditional_kl_at(truth: &IsingModel, fitted: &IsingModel, x: &[i8]) -> f64 {
    (0..truth.n())
        .map(|i| binary_kl_from_fields(truth.local_field(x, i), fitted.local_field(x, i)))
        .sum::<f64>()
        / truth.n() as f64
}

/// `(1/n) Σᵢ E KL(truth(Xᵢ|X_{∼i}) ‖ fitted(Xᵢ|X_{∼i}))` averaged over
/// evaluation samples.
pub fn conditional_kl_diagnostic(
    truth: &IsingModel,
    fitted: &IsingModel,
    eval_samples: &SampleSet<Vec<i8>>,
) -> Result<f64> {
    if truth.n() != fitted.n() {
        return Err(Error::DimensionMismatch(truth.n(), fitted.n()));
    }
    if eval_samples.dim() != truth.n() {
        return Err(Error::DimensionMismatch(eval_samples.dim(), truth.n()));
    }
    let total: f64 = eval_samples.points().iter().map(|x| conditional_kl_at(truth, fitted, x)).sum();
    Ok(total / eval_samples.len() as f64)
}

/// The same average under an exact distribution on `{±1}ⁿ`.
pub fn conditional_kl_under(
    truth: &IsingModel,
    fitted: &IsingModel,
    weights: &FiniteDistribution,
) -> Result<f64> {
    if truth.n() != fitted.n() {
        return Err(Error::DimensionMismatch(truth.n(), fitted.n()));
    }
    let space = truth.space()?;
    if weights.len() != space.size() {
        return Err(Error::DimensionMismatch(weights.len(), space.size()));
    }
    Ok(weights
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(x, p)| p * conditional_kl_at(truth, fitted, &space.spins(x)))
        .sum())
}

/// Laws of discrete Glauber paths `X⁽⁰⁾, …, X⁽ᵗ⁾` compared exactly.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PathComparison {
    pub kl: f64,
    pub tv: f64,
    pub paths: usize,
}

/// Enumerate all `steps`-step discrete Glauber paths of chains `a` and `b`
/// started from `init_a` and `init_b`, and compare the two path laws.
pub fn compare_path_laws(
    a: &IsingModel,
    b: &IsingModel,
    init_a: &FiniteDistribution,
    init_b: &FiniteDistribution,
    steps: usize,
) -> Result<PathComparison> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(a.n(), b.n()));
    }
    let space = a.space()?;
    if init_a.len() != space.size() || init_b.len() != space.size() {
        return Err(Error::DimensionMismatch(init_a.len(), space.size()));
    }
    let n = a.n();
    let count = space.size() as f64 * ((n + 1) as f64).powi(steps as i32);
    if count > 5e7 {
        return Err(Error::Capacity(format!("{count:.3e} paths")));
    }
    // Transition rows: next state and probability under each chain.
    let row = |m: &IsingModel, x: usize| -> Vec<(usize, f64)> {
        let spins = space.spins(x);
        let mut stay = 0.0;
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let up = m.conditional_prob(&spins, i);
            let flip = if spins[i] == 1 { 1.0 - up } else { up };
            out.push((x ^ (1 << i), flip / n as f64));
            stay += (1.0 - flip) / n as f64;
        }
        out.push((x, stay));
        out
    };
    let rows_a: Vec<Vec<(usize, f64)>> = (0..space.size()).map(|x| row(a, x)).collect();
    let rows_b: Vec<Vec<(usize, f64)>> = (0..space.size()).map(|x| row(b, x)).collect();

    struct Acc {
        kl: f64,
        tv: f64,
        paths: usize,
    }
    fn walk(
        x: usize,
        pa: f64,
        pb: f64,
        left: usize,
        ra: &[Vec<(usize, f64)>],
        rb: &[Vec<(usize, f64)>],
        acc: &mut Acc,
    ) {
        if left == 0 {
            acc.paths += 1;
            acc.tv += 0.5 * (pa - pb).abs();
            if pa > 0.0 {
                acc.kl += if pb > 0.0 { pa * (pa / pb).ln() } else { f64::INFINITY };
            }
            return;
        }
        for (k, &(y, qa)) in ra[x].iter().enumerate() {
            let qb = rb[x][k].1;
            walk(y, pa * qa, pb * qb, left - 1, ra, rb, acc);
        }
    }
    let mut acc = Acc { kl: 0.0, tv: 0.0, paths: 0 };
    for x in 0..space.size() {
        let (pa, pb) = (init_a.prob(x), init_b.prob(x));
        if pa > 0.0 || pb > 0.0 {
            walk(x, pa, pb, steps, &rows_a, &rows_b, &mut acc);
        }
    }
    Ok(PathComparison { kl: acc.kl.max(0.0), tv: acc.tv.min(1.0), paths: acc.paths })
}

/// Exact TV between `μ₀ e^{T𝓛_fitted}` and `π` for `n ≤ 10`.
pub fn certify_terminal_tv(
    fitted: &IsingModel,
    target: &FiniteDistribution,
    mu0: &FiniteDistribution,
    horizon: f64,
) -> Result<f64> {
    if fitted.n() > MAX_EXACT_CERTIFY {
        return Err(Error::Capacity(format!(
            "exact certification limited to {MAX_EXACT_CERTIFY} spins"
        )));
    }
    let g = fitted.generator()?;
    let s = eigendecompose(&g, g.size())?;
    tv_distance(&evolve(&s, mu0, horizon)?, target)
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnReport {
    pub n: usize,
    pub m_fit: usize,
    pub m_init: usize,
    pub horizon: f64,
    /// TV between the terminal law and `π`.
    pub tv: f64,
    /// False when `tv` is a Monte Carlo estimate.
    pub exact: bool,
    pub eps_hat: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Balance of `μ₀` against the fitted chain's second eigenfunction.
    pub balance_k2: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
}

/// Learn `truth` from `m_fit` samples, start the fitted chain from the
/// empirical measure of `m_init` fresh samples, run for continuous time
/// `horizon` and measure the TV to the true `π`.
pub fn learn_and_sample(
    truth: &IsingModel,
    m_fit: usize,
    m_init: usize,
    cfg: &PleConfig,
    horizon: f64,
) -> Result<LearnReport> {
    let n = truth.n();
    if n > MAX_MONTE_CARLO_CERTIFY {
        return Err(Error::Capacity(format!("{n} spins exceeds {MAX_MONTE_CARLO_CERTIFY}")));
    }
    if m_fit == 0 || m_init == 0 {
        return Err(Error::Parameter("sample sizes must be positive".into()));
    }
    let fit_samples = sample_exact(truth, m_fit, crate::rng::derive_seed(cfg.seed, 1))?;
    let init_samples = sample_exact(truth, m_init, crate::rng::derive_seed(cfg.seed, 2))?;
    let report = fit(&fit_samples, cfg)?;
    let pi = truth.exact_distribution()?;
    let eps_hat = conditional_kl_under(truth, &report.model, &pi)?;
    let mu0 = init_samples.empirical()?;

    let (tv, exact, balance_k2, lambda2, lambda3) = if n <= MAX_EXACT_CERTIFY {
        let g = report.model.generator()?;
        let s = eigendecompose(&g, g.size())?;
        let tv = tv_distance(&evolve(&s, &mu0, horizon)?, &pi)?;
        let bal = balance_statistic(&s, &mu0, 2)?.value;
        (tv, true, Some(bal), Some(s.eigenvalues()[1]), Some(s.eigenvalues()[2]))
    } else {
        let tv = monte_carlo_terminal_tv(&report.model, &init_samples, &pi, horizon, cfg.seed)?;
        (tv, false, None, None, None)
    };
    Ok(LearnReport {
        n,
        m_fit,
        m_init,
        horizon,
        tv,
        exact,
        eps_hat,
        objective: report.objective,
        iterations: report.iterations,
        converged: report.converged,
        balance_k2,
        lambda2,
        lambda3,
    })
}

/// Histogram TV of terminal states of 20 chains per init sample.
fn monte_carlo_terminal_tv(
    model: &IsingModel,
    init: &SampleSet<Vec<i8>>,
    pi: &FiniteDistribution,
    horizon: f64,
    seed: u64,
) -> Result<f64> {
    const REPLICAS: usize = 20;
    let space = ProductSpace::binary(model.n())?;
    let chains = init.len() * REPLICAS;
    let terminal: Vec<usize> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = crate::rng::stream(crate::rng::derive_seed(seed, 3), c as u64);
            let x = glauber_terminal(model, &init.points()[c % init.len()], horizon, &mut rng)?;
            space.index_of_spins(&x)
        })
        .collect::<Result<_>>()?;
    let empirical = FiniteDistribution::empirical(space.size(), &terminal)?;
    tv_distance(&empirical, pi)
}

/// Sample `count` states of `dist` by inverse CDF.
pub fn draw_states(dist: &FiniteDistribution, count: usize, seed: u64) -> Result<Vec<usize>> {
    let sampler = dist.sampler()?;
    let mut rng = crate::rng::seeded(seed);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}
