//! Ising, Curie–Weiss, mean-field Potts and low-rank Ising models with
//! Glauber dynamics.
//!
//! `π(x) ∝ exp(½⟨x, Jx⟩ + ⟨b, x⟩)` on `{±1}ⁿ`. The diagonal of `J` never
//! enters densities or conditionals: on `{±1}ⁿ` it only shifts the
//! log-density by a constant.

use std::io::{BufRead, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Poisson, StandardNormal};

use crate::measures::{
    parse_floats, parse_header, spin_of_bit, FiniteDistribution, ProductSpace, SampleSet,
};
use crate::spectral::{build_glauber_generator, GeneratorMatrix};
use crate::{Error, Result};

/// Largest Ising system that may be enumerated.
pub const MAX_EXACT_SPINS: usize = 20;

/// Threshold parameter `c` used by [`low_rank_ising`]: top eigenvalues must
/// exceed `1 − 1/c`.
pub const LOW_RANK_C: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct IsingModel {
    j: DMatrix<f64>,
    b: DVector<f64>,
    eigenvalues: OnceLock<Vec<f64>>,
}

impl IsingModel {
    /// Model with the diagonal of `j` set to zero.
    pub fn new(mut j: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        j.fill_diagonal(0.0);
        Self::with_self_coupling(j, b)
    }

    /// Model that keeps the diagonal of `j`. Densities are unchanged; the
    /// diagonal only matters for the spectrum of `J` itself.
    pub fn with_self_coupling(j: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !j.is_square() {
            return Err(Error::Parameter(format!("J is {}×{}", j.nrows(), j.ncols())));
        }
        if j.nrows() != b.len() {
            return Err(Error::DimensionMismatch(j.nrows(), b.len()));
        }
        if j.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite parameter".into()));
        }
        let asym = (&j - j.transpose()).amax();
        if asym > 1e-12 * j.amax().max(1.0) {
            return Err(Error::Parameter(format!("J is not symmetric (max gap {asym:.3e})")));
        }
        let j = (&j + j.transpose()) * 0.5;
        Ok(IsingModel { j, b, eigenvalues: OnceLock::new() })
    }

    /// Independent spins with fields `b`.
    pub fn product(b: DVector<f64>) -> Self {
        let n = b.len();
        IsingModel { j: DMatrix::zeros(n, n), b, eigenvalues: OnceLock::new() }
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn field(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn space(&self) -> Result<ProductSpace> {
        ProductSpace::binary(self.n())
    }

    /// Eigenvalues of `J` (diagonal included), ascending; computed once.
    pub fn coupling_eigenvalues(&self) -> &[f64] {
        self.eigenvalues.get_or_init(|| {
            let mut e: Vec<f64> = self.j.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            e.sort_by(f64::total_cmp);
            e
        })
    }

    /// `Σ_{j≠i} |J_ij| + |b_i|` for each row.
    pub fn row_l1_norms(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let off: f64 = (0..self.n()).filter(|&k| k != i).map(|k| self.j[(i, k)].abs()).sum();
                off + self.b[i].abs()
            })
            .collect()
    }

    /// `J_{i,∼i}·x_{∼i} + b_i`.
    #[inline]
    pub fn local_field(&self, x: &[i8], i: usize) -> f64 {
        let mut acc = self.b[i];
        let col = self.j.column(i);
        for (k, &s) in x.iter().enumerate() {
            if k != i {
                acc += col[k] * s as f64;
            }
        }
        acc
    }

    /// `P(X_i = +1 | X_{∼i} = x_{∼i})`.
    pub fn conditional_prob(&self, x: &[i8], i: usize) -> f64 {
        crate::sigmoid(2.0 * self.local_field(x, i))
    }

    /// Unnormalized log-density, diagonal excluded.
    pub fn log_weight(&self, x: &[i8]) -> f64 {
        let n = self.n();
        let mut pair = 0.0;
        for i in 0..n {
            let xi = x[i] as f64;
            for k in i + 1..n {
                pair += self.j[(i, k)] * xi * x[k] as f64;
            }
        }
        pair + x.iter().zip(self.b.iter()).map(|(s, b)| *s as f64 * b).sum::<f64>()
    }

    pub fn exact_distribution(&self) -> Result<FiniteDistribution> {
        let n = self.n();
        if n > MAX_EXACT_SPINS {
            return Err(Error::Capacity(format!("{n} spins exceeds {MAX_EXACT_SPINS}")));
        }
        let m = 1usize << n;
        let mut x = vec![0i8; n];
        let logs: Vec<f64> = (0..m)
            .map(|idx| {
                for (i, s) in x.iter_mut().enumerate() {
                    *s = spin_of_bit(idx, i);
                }
                self.log_weight(&x)
            })
            .collect();
        FiniteDistribution::from_log_weights(&logs)
    }

    pub fn generator(&self) -> Result<GeneratorMatrix> {
        build_glauber_generator(&self.space()?, &self.exact_distribution()?)
    }

    /// `ising v1 <n>`, then the rows of `J`, then `b` on one line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ising v1 {}", self.n())?;
        for r in 0..self.n() {
            let row: Vec<String> = self.j.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        let b: Vec<String> = self.b.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", b.join(" "))?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))??;
        let n = parse_header(&header, "ising", 1)?[0];
        let mut j = DMatrix::zeros(n, n);
        for r in 0..n {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing row {r}")))??;
            let row = parse_floats(&line)?;
            if row.len() != n {
                return Err(Error::Parse(format!("row {r} has {} entries", row.len())));
            }
            for (c, v) in row.into_iter().enumerate() {
                j[(r, c)] = v;
            }
        }
        let line = lines.next().ok_or_else(|| Error::Parse("missing field line".into()))??;
        let b = parse_floats(&line)?;
        if b.len() != n {
            return Err(Error::Parse(format!("field has {} entries", b.len())));
        }
        Self::with_self_coupling(j, DVector::from_vec(b)).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Curie–Weiss model, `J = (β/n)(11ᵀ − I)`, no field.
pub fn curie_weiss(n: usize, beta: f64) -> Result<IsingModel> {
    if n == 0 {
        return Err(Error::Parameter("n must be positive".into()));
    }
    let mut j = DMatrix::from_element(n, n, beta / n as f64);
    j.fill_diagonal(0.0);
    IsingModel::new(j, DVector::zeros(n))
}

/// Ising model whose coupling has `top_eigs` as its `r` large eigenvalues and
/// `n − r` bulk eigenvalues drawn uniformly from
/// `[−bulk_spread, min(bulk_spread, 1 − 1/c)]`, in a random orthogonal basis.
/// The field is zero. The diagonal is kept so the spectrum of `J` is exactly
/// the requested one.
pub fn low_rank_ising(
    n: usize,
    r: usize,
    top_eigs: &[f64],
    bulk_spread: f64,
    seed: u64,
) -> Result<IsingModel> {
    let threshold = 1.0 - 1.0 / LOW_RANK_C;
    if r > n || top_eigs.len() != r {
        return Err(Error::Parameter(format!(
            "cannot place {} top eigenvalues (r = {r}) in dimension {n}",
            top_eigs.len()
        )));
    }
    if let Some(l) = top_eigs.iter().find(|l| !(**l > threshold)) {
        return Err(Error::Parameter(format!("top eigenvalue {l} not above {threshold}")));
    }
    if !(bulk_spread >= 0.0) {
        return Err(Error::Parameter(format!("bulk spread {bulk_spread} < 0")));
    }
    let mut rng = crate::rng::seeded(seed);
    let hi = bulk_spread.min(threshold);
    let mut spectrum: Vec<f64> = top_eigs.to_vec();
    for _ in r..n {
        spectrum.push(if hi > -bulk_spread { rng.random_range(-bulk_spread..=hi) } else { hi });
    }
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rd = qr.r();
    for c in 0..n {
        if rd[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    let j = &q * DMatrix::from_diagonal(&DVector::from_vec(spectrum)) * q.transpose();
    let j = (&j + j.transpose()) * 0.5;
    IsingModel::with_self_coupling(j, DVector::zeros(n))
}

/// Mean-field Potts model, `π(x) ∝ exp((β/2n) Σ_{i,j} 1(xᵢ = xⱼ))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PottsModel {
    pub n: usize,
    pub q: usize,
    pub beta: f64,
}

pub fn mean_field_potts(n: usize, q: usize, beta: f64) -> Result<PottsModel> {
    if q < 2 || n == 0 || !(beta >= 0.0) {
        return Err(Error::Parameter(format!("invalid Potts parameters n={n} q={q} β={beta}")));
    }
    Ok(PottsModel { n, q, beta })
}

impl PottsModel {
    pub fn space(&self) -> Result<ProductSpace> {
        ProductSpace::new(self.n, self.q)
    }

    pub fn log_weight(&self, colors: &[usize]) -> f64 {
        let mut counts = vec![0usize; self.q];
        for &c in colors {
            counts[c] += 1;
        }
        let same: usize = counts.iter().map(|c| c * c).sum();
        self.beta / (2.0 * self.n as f64) * same as f64
    }

    pub fn exact_distribution(&self) -> Result<FiniteDistribution> {
        let space = self.space()?;
        let logs: Vec<f64> = (0..space.size()).map(|x| self.log_weight(&space.digits(x))).collect();
        FiniteDistribution::from_log_weights(&logs)
    }

    pub fn generator(&self) -> Result<GeneratorMatrix> {
        build_glauber_generator(&self.space()?, &self.exact_distribution()?)
    }
}

/// One heat-bath update: pick a uniform site and resample it from its
/// conditional law. Returns the site.
pub fn glauber_step_discrete<R: Rng + ?Sized>(m: &IsingModel, x: &mut [i8], rng: &mut R) -> usize {
    let i = rng.random_range(0..m.n());
    let p = m.conditional_prob(x, i);
    x[i] = if rng.random::<f64>() < p { 1 } else { -1 };
    i
}

/// Recorded continuous-time Glauber path.
#[derive(Debug, Clone, PartialEq)]
pub struct GlauberTrajectory {
    /// `states[0]` is the start; `states[k]` follows the `k`-th update.
    pub states: Vec<Vec<i8>>,
    /// Update times, starting with 0 for the initial state.
    pub clock: Vec<f64>,
    pub seed: u64,
}

fn update_count<R: Rng + ?Sized>(n: usize, t: f64, rng: &mut R) -> Result<u64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("time horizon {t}")));
    }
    let rate = n as f64 * t;
    if rate == 0.0 {
        return Ok(0);
    }
    let poisson = Poisson::new(rate).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(poisson.sample(rng) as u64)
}

/// Run Glauber dynamics for continuous time `t`, performing
/// `N ~ Poisson(n t)` updates at uniformly placed times.
pub fn glauber_run_continuous(
    m: &IsingModel,
    x0: &[i8],
    t: f64,
    seed: u64,
) -> Result<GlauberTrajectory> {
    if x0.len() != m.n() {
        return Err(Error::DimensionMismatch(x0.len(), m.n()));
    }
    let mut rng = crate::rng::seeded(seed);
    let count = update_count(m.n(), t, &mut rng)?;
    let mut times: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * t).collect();
    times.sort_by(f64::total_cmp);
    let mut states = vec![x0.to_vec()];
    let mut clock = vec![0.0];
    let mut x = x0.to_vec();
    for s in times {
        glauber_step_discrete(m, &mut x, &mut rng);
        if s > *clock.last().unwrap() {
            states.push(x.clone());
            clock.push(s);
        } else {
            *states.last_mut().unwrap() = x.clone();
        }
    }
    Ok(GlauberTrajectory { states, clock, seed })
}

/// Terminal state of a continuous-time run without recording the path.
pub fn glauber_terminal<R: Rng + ?Sized>(
    m: &IsingModel,
    x0: &[i8],
    t: f64,
    rng: &mut R,
) -> Result<Vec<i8>> {
    let count = update_count(m.n(), t, rng)?;
    let mut x = x0.to_vec();
    for _ in 0..count {
        glauber_step_discrete(m, &mut x, rng);
    }
    Ok(x)
}

/// Draw `count` exact samples by enumeration.
pub fn sample_exact(m: &IsingModel, count: usize, seed: u64) -> Result<SampleSet<Vec<i8>>> {
    let pi = m.exact_distribution()?;
    let space = m.space()?;
    let sampler = pi.sampler()?;
    let mut rng = crate::rng::seeded(seed);
    SampleSet::new((0..count).map(|_| space.spins(sampler.sample(&mut rng))).collect())
}

fn check_censorable(m: &IsingModel) -> Result<()> {
    if m.n() % 2 == 0 {
        return Err(Error::Domain(format!("censored dynamics need odd n, got {}", m.n())));
    }
    if m.field().iter().any(|b| *b != 0.0) {
        return Err(Error::Domain("censored dynamics need a flip-symmetric model".into()));
    }
    Ok(())
}

/// Glauber step reflected into positive magnetization: if the proposal has
/// negative magnetization the whole configuration is flipped.
pub fn censored_glauber_step<R: Rng + ?Sized>(
    m: &IsingModel,
    x: &mut [i8],
    rng: &mut R,
) -> Result<()> {
    check_censorable(m)?;
    if x.iter().map(|&s| s as i32).sum::<i32>() <= 0 {
        return Err(Error::Domain("censored chain starts at nonpositive magnetization".into()));
    }
    glauber_step_discrete(m, x, rng);
    if x.iter().map(|&s| s as i32).sum::<i32>() < 0 {
        x.iter_mut().for_each(|s| *s = -*s);
    }
    Ok(())
}

/// Continuous-time censored chain on `{Σx > 0}`.
#[derive(Debug, Clone)]
pub struct CensoredChain {
    /// Indices in `{±1}ⁿ` of the positive-magnetization states.
    pub states: Vec<usize>,
    /// Generator on those states, rows summing to zero.
    pub generator: DMatrix<f64>,
    /// `π` conditioned on positive magnetization.
    pub stationary: FiniteDistribution,
}

pub fn censored_chain(m: &IsingModel) -> Result<CensoredChain> {
    check_censorable(m)?;
    let space = m.space()?;
    let pi = m.exact_distribution()?;
    let n = m.n();
    let full = space.size() - 1;
    let positive = |x: usize| 2 * x.count_ones() as usize > n;
    let states: Vec<usize> = (0..space.size()).filter(|&x| positive(x)).collect();
    let mut slot = vec![usize::MAX; space.size()];
    for (k, &x) in states.iter().enumerate() {
        slot[x] = k;
    }
    let mut l = DMatrix::zeros(states.len(), states.len());
    for (k, &x) in states.iter().enumerate() {
        for i in 0..n {
            let y = x ^ (1 << i);
            let rate = pi.prob(y) / (pi.prob(x) + pi.prob(y));
            let target = if positive(y) { y } else { full ^ y };
            l[(k, slot[target])] += rate;
            l[(k, k)] -= rate;
        }
    }
    let stationary =
        FiniteDistribution::from_weights(states.iter().map(|&x| pi.prob(x)).collect())?;
    Ok(CensoredChain { states, generator: l, stationary })
}

/// `½ Σ_{x,y} π(x) 𝓛(x,y) (f(x) − f(y))²` for a generator given densely.
pub fn dirichlet_form(generator: &DMatrix<f64>, pi: &[f64], f: &[f64]) -> f64 {
    let m = pi.len();
    let mut total = 0.0;
    for x in 0..m {
        for y in 0..m {
            if x != y && generator[(x, y)] != 0.0 {
                let d = f[x] - f[y];
                total += pi[x] * generator[(x, y)] * d * d;
            }
        }
    }
    0.5 * total
}
