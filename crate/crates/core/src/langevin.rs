//! Continuous mixtures with exact scores, perturbed scores and Langevin Monte
//! Carlo from data-based initialization.
//!
//! Components are full-covariance Gaussians and softplus-smoothed Gaussians.
//! A smoothed component has potential
//! `V(x) = Σₖ ½pₖzₖ² + γ·ln(2 + 2cosh zₖ) + const` with `z = x − μ`, whose
//! Hessian lies between `min p` and `max p + γ/2`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::measures::SampleSet;
use crate::{Error, Result};

/// Coordinates beyond this magnitude abort a chain.
pub const DIVERGENCE_GUARD: f64 = 1e8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
    alpha: f64,
    beta: f64,
}

impl GaussianComponent {
    /// `N(mean, AAᵀ)` for a covariance factor `A`.
    pub fn new(mean: Vec<f64>, cov_factor: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov_factor.shape() != (d, d) {
            return Err(Error::DimensionMismatch(cov_factor.nrows(), d));
        }
        let cov = &cov_factor * cov_factor.transpose();
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Parameter("covariance is not positive definite".into()))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let precision = chol.inverse();
        let precision = (&precision + precision.transpose()) * 0.5;
        let eig = precision.clone().symmetric_eigen().eigenvalues;
        Ok(GaussianComponent {
            mean: DVector::from_vec(mean),
            factor: cov_factor,
            log_norm: 0.5 * (d as f64 * LN_2PI + log_det),
            alpha: eig.min(),
            beta: eig.max(),
            precision,
        })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::Parameter(format!("variance {variance}")));
        }
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * variance.sqrt())
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

#[derive(Debug, Clone)]
pub struct SmoothedComponent {
    mean: Vec<f64>,
    precision: Vec<f64>,
    softness: f64,
    log_norm: f64,
}

/// `ln cosh u` without overflow.
fn ln_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl SmoothedComponent {
    /// Per-coordinate precisions `p` and softness `γ ≥ 0`.
    pub fn new(mean: Vec<f64>, precision: Vec<f64>, softness: f64) -> Result<Self> {
        if mean.is_empty() || mean.len() != precision.len() {
            return Err(Error::DimensionMismatch(precision.len(), mean.len()));
        }
        if precision.iter().any(|p| !(*p > 0.0)) || !(softness >= 0.0) {
            return Err(Error::Parameter("precisions must be positive, softness ≥ 0".into()));
        }
        let log_norm = precision.iter().map(|&p| log_normalizer_1d(p, softness)).sum();
        Ok(SmoothedComponent { mean, precision, softness, log_norm })
    }
}

/// `ln ∫ exp(−½pz² − 2γ ln cosh(z/2)) dz` by composite Simpson.
fn log_normalizer_1d(p: f64, gamma: f64) -> f64 {
    let half_width = 40.0 / p.sqrt();
    let intervals = 20_000;
    let h = 2.0 * half_width / intervals as f64;
    let f = |z: f64| (-0.5 * p * z * z - 2.0 * gamma * ln_cosh(0.5 * z)).exp();
    let mut total = f(-half_width) + f(half_width);
    for i in 1..intervals {
        let z = -half_width + i as f64 * h;
        total += if i % 2 == 1 { 4.0 } else { 2.0 } * f(z);
    }
    (total * h / 3.0).ln()
}

/// One mixture component `πᵢ = e^{−Vᵢ}`.
#[derive(Debug, Clone)]
pub enum Component {
    Gaussian(GaussianComponent),
    Smoothed(SmoothedComponent),
}

impl Component {
    pub fn dim(&self) -> usize {
        self.mean().len()
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            Component::Gaussian(g) => g.mean.as_slice(),
            Component::Smoothed(s) => &s.mean,
        }
    }

    /// Lower Hessian bound (strong convexity).
    pub fn alpha(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.alpha,
            Component::Smoothed(s) => s.precision.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Upper Hessian bound (smoothness).
    pub fn beta(&self) -> f64 {
        match self {
            Component::Gaussian(g) => g.beta,
            Component::Smoothed(s) => {
                s.precision.iter().copied().fold(0.0, f64::max) + 0.5 * s.softness
            }
        }
    }

    /// `Vᵢ(x)` including the normalizing constant; writes `∇Vᵢ(x)` to `grad`.
    pub fn potential_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Component::Gaussian(g) => {
                let d = x.len();
                let mut quad = 0.0;
                for r in 0..d {
                    let mut acc = 0.0;
                    for c in 0..d {
                        acc += g.precision[(r, c)] * (x[c] - g.mean[c]);
                    }
                    grad[r] = acc;
                    quad += acc * (x[r] - g.mean[r]);
                }
                0.5 * quad + g.log_norm
            }
            Component::Smoothed(s) => {
                let mut v = s.log_norm;
                for k in 0..x.len() {
                    let z = x[k] - s.mean[k];
                    let p = s.precision[k];
                    v += 0.5 * p * z * z + 2.0 * s.softness * ln_cosh(0.5 * z);
                    grad[k] = p * z + s.softness * (0.5 * z).tanh();
                }
                v
            }
        }
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.potential_grad(x, &mut g)
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            Component::Gaussian(g) => g.precision.clone(),
            Component::Smoothed(s) => DMatrix::from_fn(x.len(), x.len(), |r, c| {
                if r != c {
                    return 0.0;
                }
                let sech = 1.0 / (0.5 * (x[r] - s.mean[r])).cosh();
                s.precision[r] + 0.5 * s.softness * sech * sech
            }),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Component::Gaussian(g) => {
                let z = DVector::from_fn(g.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                (&g.mean + &g.factor * z).iter().copied().collect()
            }
            Component::Smoothed(s) => s
                .mean
                .iter()
                .zip(&s.precision)
                .map(|(&mu, &p)| loop {
                    // Propose from the Gaussian part; accept with cosh(z/2)^{−2γ} ≤ 1.
                    let z = rng.sample::<f64, _>(StandardNormal) / p.sqrt();
                    if rng.random::<f64>().ln() <= -2.0 * s.softness * ln_cosh(0.5 * z) {
                        break mu + z;
                    }
                })
                .collect(),
        }
    }
}

/// `π = Σ pᵢ πᵢ` with the constants of the mixture assumption.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<Component>,
    dim: usize,
    alpha: f64,
    beta: f64,
    separation: f64,
}

/// Scratch buffers for allocation-free score evaluation.
#[derive(Debug, Clone)]
pub struct ScoreWorkspace {
    logw: Vec<f64>,
    grads: Vec<f64>,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, components: Vec<Component>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::DimensionMismatch(weights.len(), components.len()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Parameter("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("mixture weights sum to {total}")));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let dim = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch(c.dim(), dim));
        }
        let mut separation = 0.0f64;
        for (i, a) in components.iter().enumerate() {
            for b in &components[i + 1..] {
                separation = separation.max(distance(a.mean(), b.mean()));
            }
        }
        Ok(MixtureModel {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            alpha: components.iter().map(Component::alpha).fold(f64::INFINITY, f64::min),
            beta: components.iter().map(Component::beta).fold(0.0, f64::max),
            weights,
            components,
            dim,
            separation,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Smoothness `β = maxᵢ βᵢ`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Component convexity `α = minᵢ αᵢ`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.beta / self.alpha
    }

    /// Largest distance between component means.
    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn workspace(&self) -> ScoreWorkspace {
        ScoreWorkspace {
            logw: vec![0.0; self.components.len()],
            grads: vec![0.0; self.components.len() * self.dim],
        }
    }

    fn fill(&self, x: &[f64], ws: &mut ScoreWorkspace) -> f64 {
        for (i, c) in self.components.iter().enumerate() {
            let g = &mut ws.grads[i * self.dim..(i + 1) * self.dim];
            ws.logw[i] = self.log_weights[i] - c.potential_grad(x, g);
        }
        crate::log_sum_exp(&ws.logw)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut ws = self.workspace();
        self.fill(x, &mut ws)
    }

    /// `V = −ln π`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        -self.log_density(x)
    }

    /// `∇ ln π(x)` written into `out`. Assumes finite input.
    pub fn score_into(&self, x: &[f64], out: &mut [f64], ws: &mut ScoreWorkspace) {
        let lse = self.fill(x, ws);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.components.len() {
            let w = (ws.logw[i] - lse).exp();
            let g = &ws.grads[i * self.dim..(i + 1) * self.dim];
            out.iter_mut().zip(g).for_each(|(o, gi)| *o -= w * gi);
        }
    }

    /// `∇ ln π(x) = −Σ wᵢ(x) ∇Vᵢ(x)` with posterior weights `wᵢ`.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.dim];
        self.score_into(x, &mut out, &mut self.workspace());
        Ok(out)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(x.len(), self.dim));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite point".into()));
        }
        Ok(())
    }

    /// Posterior component probabilities at `x`.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        let lse = self.fill(x, &mut ws);
        ws.logw.iter().map(|l| (l - lse).exp()).collect()
    }

    /// `G(x) = maxᵢ ‖∇Vᵢ(x)‖`.
    pub fn gradient_bound(&self, x: &[f64]) -> f64 {
        let mut ws = self.workspace();
        self.fill(x, &mut ws);
        ws.grads.chunks(self.dim).map(norm).fold(0.0, f64::max)
    }

    /// Analytic Hessian of `V`: `Σ wᵢ∇²Vᵢ − Cov_w(∇Vᵢ)`.
    pub fn potential_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let w = self.posterior(x);
        let d = self.dim;
        let mut ws = self.workspace();
        self.fill(x, &mut ws);
        let mut mean = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (i, c) in self.components.iter().enumerate() {
            let g = DVector::from_column_slice(&ws.grads[i * d..(i + 1) * d]);
            h += c.hessian(x) * w[i] + &g * g.transpose() * w[i];
            mean += g * w[i];
        }
        h - &mean * mean.transpose()
    }

    /// Draw a component label and a point.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = self.components.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                label = i;
                break;
            }
        }
        (label, self.components[label].sample(rng))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_labeled(rng).1
    }

    pub fn sample_set(&self, count: usize, seed: u64) -> Result<SampleSet<Vec<f64>>> {
        let mut rng = crate::rng::seeded(seed);
        SampleSet::new((0..count).map(|_| self.sample(&mut rng)).collect())
    }

    /// `R_ε = (1/√α)(√d + ln(3/ε))`.
    pub fn concentration_radius(&self, eps: f64) -> f64 {
        ((self.dim as f64).sqrt() + (3.0 / eps).ln()) / self.alpha.sqrt()
    }

    /// Default direction for projection TV: through the first two means, or
    /// the first axis for a single component.
    pub fn projection_direction(&self) -> Vec<f64> {
        if self.components.len() >= 2 {
            let a = self.components[0].mean();
            let b = self.components[1].mean();
            let diff: Vec<f64> = b.iter().zip(a).map(|(u, v)| u - v).collect();
            let n = norm(&diff);
            if n > 0.0 {
                return diff.iter().map(|v| v / n).collect();
            }
        }
        let mut e = vec![0.0; self.dim];
        e[0] = 1.0;
        e
    }

    pub fn to_spec(&self) -> MixtureSpec {
        let components = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, &weight)| match c {
                Component::Gaussian(g) => ComponentSpec::Gaussian {
                    weight,
                    mean: g.mean.iter().copied().collect(),
                    cov_factor: g.factor.row_iter().map(|r| r.iter().copied().collect()).collect(),
                },
                Component::Smoothed(s) => ComponentSpec::Smoothed {
                    weight,
                    mean: s.mean.clone(),
                    precision: s.precision.clone(),
                    softness: s.softness,
                },
            })
            .collect();
        MixtureSpec { format: "mixture".into(), version: 1, components }
    }

    pub fn from_spec(spec: &MixtureSpec) -> Result<Self> {
        if spec.format != "mixture" || spec.version != 1 {
            return Err(Error::Parse(format!(
                "unsupported mixture spec {} v{}",
                spec.format, spec.version
            )));
        }
        let mut weights = Vec::new();
        let mut components = Vec::new();
        for c in &spec.components {
            match c {
                ComponentSpec::Gaussian { weight, mean, cov_factor } => {
                    let d = mean.len();
                    if cov_factor.len() != d || cov_factor.iter().any(|r| r.len() != d) {
                        return Err(Error::Parse("covariance factor shape".into()));
                    }
                    let a = DMatrix::from_fn(d, d, |r, col| cov_factor[r][col]);
                    weights.push(*weight);
                    components.push(Component::Gaussian(GaussianComponent::new(mean.clone(), a)?));
                }
                ComponentSpec::Smoothed { weight, mean, precision, softness } => {
                    weights.push(*weight);
                    components.push(Component::Smoothed(SmoothedComponent::new(
                        mean.clone(),
                        precision.clone(),
                        *softness,
                    )?));
                }
            }
        }
        Self::new(weights, components)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MixtureSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("mixture spec serializes")
    }
}

/// Versioned mixture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub format: String,
    pub version: u32,
    pub components: Vec<ComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ComponentSpec {
    Gaussian { weight: f64, mean: Vec<f64>, cov_factor: Vec<Vec<f64>> },
    Smoothed { weight: f64, mean: Vec<f64>, precision: Vec<f64>, softness: f64 },
}

/// Equal-weight 1-D Gaussian mixture `Σ N(cᵢ, 1)/k`.
pub fn symmetric_gaussian_mixture_1d(centers: &[f64]) -> Result<MixtureModel> {
    let k = centers.len();
    let comps = centers
        .iter()
        .map(|&c| GaussianComponent::isotropic(vec![c], 1.0).map(Component::Gaussian))
        .collect::<Result<Vec<_>>>()?;
    MixtureModel::new(vec![1.0 / k as f64; k], comps)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Random smooth vector field `u(x) = Σⱼ aⱼ sin(⟨ωⱼ, x⟩ + φⱼ)`.
#[derive(Debug, Clone)]
pub struct SmoothField {
    amplitudes: Vec<Vec<f64>>,
    frequencies: Vec<Vec<f64>>,
    phases: Vec<f64>,
}

impl SmoothField {
    pub fn random(dim: usize, spec: &NoiseSpec, seed: u64) -> Self {
        let mut rng = crate::rng::seeded(seed);
        let mut amplitudes = Vec::new();
        let mut frequencies = Vec::new();
        let mut phases = Vec::new();
        for _ in 0..spec.modes {
            amplitudes.push((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
            frequencies.push(
                (0..dim)
                    .map(|_| spec.frequency * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            phases.push(rng.random_range(0.0..std::f64::consts::TAU));
        }
        SmoothField { amplitudes, frequencies, phases }
    }

    /// Adds `scale · u(x)` to `out`.
    pub fn add_into(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        for ((a, w), phi) in self.amplitudes.iter().zip(&self.frequencies).zip(&self.phases) {
            let arg: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + phi;
            let s = scale * arg.sin();
            out.iter_mut().zip(a).for_each(|(o, ai)| *o += s * ai);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.add_into(x, 1.0, &mut out);
        out
    }
}

/// Shape of the random perturbation field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Number of sinusoidal modes.
    pub modes: usize,
    /// Standard deviation of the random frequencies.
    pub frequency: f64,
    /// Monte Carlo sample size used to normalize `‖u‖_{L²(π)}`.
    pub norm_samples: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { modes: 8, frequency: 0.5, norm_samples: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Exact,
    Perturbed { eps: f64, noise: NoiseSpec, seed: u64 },
    Submixture { subset: Vec<usize> },
}

/// A score estimate `x ↦ s(x)`.
#[derive(Debug, Clone)]
pub struct ScoreField {
    base: MixtureModel,
    noise: Option<(SmoothField, f64)>,
    provenance: Provenance,
}

impl ScoreField {
    pub fn exact(m: &MixtureModel) -> Self {
        ScoreField { base: m.clone(), noise: None, provenance: Provenance::Exact }
    }

    /// Score of the renormalized submixture over `subset`.
    pub fn of_submixture(m: &MixtureModel, subset: &[usize]) -> Result<Self> {
        Ok(ScoreField {
            base: submixture(m, subset)?,
            noise: None,
            provenance: Provenance::Submixture { subset: subset.to_vec() },
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn workspace(&self) -> ScoreWorkspace {
        self.base.workspace()
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64], ws: &mut ScoreWorkspace) {
        self.base.score_into(x, out, ws);
        if let Some((u, scale)) = &self.noise {
            u.add_into(x, *scale, out);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.base.check_point(x)?;
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out, &mut self.workspace());
        Ok(out)
    }

    /// Monte Carlo `(E‖s − ∇ln π‖²)^{1/2}` over `samples`.
    pub fn l2_error(&self, truth: &MixtureModel, samples: &SampleSet<Vec<f64>>) -> f64 {
        let total: f64 = samples
            .points()
            .par_iter()
            .map(|x| {
                let mut ws = self.workspace();
                let mut s = vec![0.0; x.len()];
                self.eval_into(x, &mut s, &mut ws);
                let t = truth.score(x).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
                s.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum();
        (total / samples.len() as f64).sqrt()
    }
}

/// Exact score plus `ε · u/‖u‖_{L²(π)}` for a fixed random smooth field `u`.
pub fn perturb_score(m: &MixtureModel, eps: f64, noise: NoiseSpec, seed: u64) -> Result<ScoreField> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Parameter(format!("score error {eps} must be ≥ 0")));
    }
    if eps == 0.0 {
        return Ok(ScoreField::exact(m));
    }
    if noise.modes == 0 || noise.norm_samples == 0 {
        return Err(Error::Parameter("noise needs at least one mode and sample".into()));
    }
    let field = SmoothField::random(m.dim(), &noise, seed);
    let probe = m.sample_set(noise.norm_samples, crate::rng::derive_seed(seed, 1))?;
    let sq: f64 = probe
        .points()
        .iter()
        .map(|x| field.eval(x).iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / probe.len() as f64;
    let norm = sq.sqrt();
    if !(norm > 1e-12) {
        return Err(Error::Numeric(format!("perturbation field has L² norm {norm:.3e}")));
    }
    Ok(ScoreField {
        base: m.clone(),
        noise: Some((field, eps / norm)),
        provenance: Provenance::Perturbed { eps, noise, seed },
    })
}

/// Step size, horizon, seed and chain count for LMC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmcConfig {
    pub step: f64,
    pub horizon: f64,
    pub seed: u64,
    pub chains: usize,
}

impl LmcConfig {
    /// Number of steps `N = T/h`; `T` must be an integer multiple of `h`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Parameter(format!("step size {}", self.step)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Parameter(format!("horizon {}", self.horizon)));
        }
        if self.chains == 0 {
            return Err(Error::Parameter("need at least one chain".into()));
        }
        let n = (self.horizon / self.step).round();
        if (n * self.step - self.horizon).abs() > 1e-9 * self.horizon.max(self.step) {
            return Err(Error::Parameter(format!(
                "horizon {} is not a multiple of step {}",
                self.horizon, self.step
            )));
        }
        Ok(n as usize)
    }
}

/// Terminal states of all chains, ordered by chain index.
#[derive(Debug, Clone, PartialEq)]
pub struct LmcOutput {
    pub points: Vec<Vec<f64>>,
    pub flagged: Vec<bool>,
}

impl LmcOutput {
    pub fn samples(&self) -> Result<SampleSet<Vec<f64>>> {
        SampleSet::new(self.points.clone())
    }

    /// Terminal points of chains that did not trip the divergence guard.
    pub fn valid_samples(&self) -> Result<SampleSet<Vec<f64>>> {
        SampleSet::new(
            self.points
                .iter()
                .zip(&self.flagged)
                .filter(|(_, f)| !**f)
                .map(|(p, _)| p.clone())
                .collect(),
        )
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }

    /// `chain_index,x_1,…,x_d,flagged`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.points.first().map_or(0, Vec::len);
        let cols: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        writeln!(w, "chain_index,{},flagged", cols.join(","))?;
        for (i, (p, f)) in self.points.iter().zip(&self.flagged).enumerate() {
            let xs: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{},{}", xs.join(","), f)?;
        }
        Ok(())
    }
}

/// Run `chains` independent Euler–Maruyama chains
/// `x ← x + h s(x) + √(2h) ξ`, each started at a uniformly chosen point of
/// `init`. Chain `c` draws from stream `c` of the seed.
pub fn lmc_run(init: &SampleSet<Vec<f64>>, s: &ScoreField, cfg: &LmcConfig) -> Result<LmcOutput> {
    let steps = cfg.steps()?;
    if init.dim() != s.dim() {
        return Err(Error::DimensionMismatch(init.dim(), s.dim()));
    }
    let noise = (2.0 * cfg.step).sqrt();
    let results: Vec<(Vec<f64>, bool)> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = crate::rng::stream(cfg.seed, c as u64);
            let start = rng.random_range(0..init.len());
            let mut x = init.points()[start].clone();
            let mut grad = vec![0.0; x.len()];
            let mut ws = s.workspace();
            for _ in 0..steps {
                s.eval_into(&x, &mut grad, &mut ws);
                let mut diverged = false;
                for (xi, gi) in x.iter_mut().zip(&grad) {
                    *xi += cfg.step * gi + noise * rng.sample::<f64, _>(StandardNormal);
                    diverged |= !(xi.abs() <= DIVERGENCE_GUARD);
                }
                if diverged {
                    return (x, true);
                }
            }
            (x, false)
        })
        .collect();
    let (points, flagged) = results.into_iter().unzip();
    Ok(LmcOutput { points, flagged })
}

/// `π_S = p_S^{−1} Σ_{i∈S} pᵢπᵢ`.
pub fn submixture(m: &MixtureModel, subset: &[usize]) -> Result<MixtureModel> {
    if subset.is_empty() {
        return Err(Error::Parameter("empty component subset".into()));
    }
    let mut idx = subset.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if let Some(i) = idx.iter().find(|&&i| i >= m.components.len()) {
        return Err(Error::Parameter(format!("component {i} does not exist")));
    }
    let mass: f64 = idx.iter().map(|&i| m.weights[i]).sum();
    MixtureModel::new(
        idx.iter().map(|&i| m.weights[i] / mass).collect(),
        idx.iter().map(|&i| m.components[i].clone()).collect(),
    )
}

/// Monte Carlo `E‖∇V − ∇V_S‖²` over `samples`.
pub fn submixture_score_error(
    m: &MixtureModel,
    subset: &[usize],
    samples: &SampleSet<Vec<f64>>,
) -> Result<f64> {
    let field = ScoreField::of_submixture(m, subset)?;
    let e = field.l2_error(m, samples);
    Ok(e * e)
}

/// Computable driver of the warm-start Rényi bound at a starting point.
#[derive(Debug, Clone, Serialize)]
pub struct WarmStartReport {
    /// `maxⱼ[h‖∇Vⱼ(x)‖² + Vⱼ(x) − Vⱼ(x̄ⱼ)] + d(1 + ln(1/(αh)))`.
    pub surrogate: f64,
    /// `R_{ε₁} + L`.
    pub radius: f64,
    /// Distance from `x` to the farthest component mean.
    pub farthest_mean: f64,
    /// Raised when `x` is farther than `radius` from some component mean.
    pub flagged: bool,
}

pub fn warm_start_diagnostic(m: &MixtureModel, x: &[f64], h: f64, eps1: f64) -> Result<WarmStartReport> {
    m.check_point(x)?;
    if !(h > 0.0 && h <= 1.0 / (50.0 * m.beta) * (1.0 + 1e-12)) {
        return Err(Error::Parameter(format!("step {h} must lie in (0, 1/(50β)]")));
    }
    if !(eps1 > 0.0 && eps1 < 1.0) {
        return Err(Error::Parameter(format!("ε₁ = {eps1} outside (0, 1)")));
    }
    let d = m.dim as f64;
    let mut grad = vec![0.0; m.dim];
    let mut worst = f64::NEG_INFINITY;
    let mut farthest = 0.0f64;
    for c in &m.components {
        let v = c.potential_grad(x, &mut grad);
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        worst = worst.max(h * g2 + v - c.potential(c.mean()));
        farthest = farthest.max(distance(x, c.mean()));
    }
    let radius = m.concentration_radius(eps1) + m.separation;
    Ok(WarmStartReport {
        surrogate: worst + d * (1.0 + (1.0 / (m.alpha * h)).ln()),
        radius,
        farthest_mean: farthest,
        flagged: farthest > radius,
    })
}
