//! Hubbard–Stratonovich decomposition of low-rank spin models.
//!
//! A spin system with states `X ∈ ℝ^{n·dim}` (one embedded vector per site)
//! and density `π(x) ∝ exp(½⟨X, JX⟩ + ⟨b, X⟩)` is split as `J = J₊ + J̃`,
//! where `J₊` keeps the eigenvalues above `1 − 1/c`. The Gaussian identity
//! `exp(½⟨X, J₊X⟩) ∝ ∫ exp(−½⟨H, J₊⁺H⟩ + ⟨H, X⟩) dH` writes `π` as a
//! continuous mixture of tilted models `π̃_H ∝ exp(½⟨X, J̃X⟩ + ⟨b + H, X⟩)`;
//! discretizing `H` on a grid gives a finite mixture `π₂`.
//!
//! Ising spins embed as `±1`. Potts colors embed as centered basis vectors
//! `e_a − 1/q`, so that `⟨ẽ_a, ẽ_b⟩ = 1(a = b) − 1/q`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::ising::{IsingModel, PottsModel};
use crate::measures::{FiniteDistribution, ProductSpace};
use crate::spectral::DENSE_LIMIT;
use crate::{log_sum_exp, Error, Result};

/// Largest net rank handled exactly.
pub const MAX_RANK: usize = 3;

/// Default cap on the number of fields in a net.
pub const MAX_FIELDS: usize = 1_000_000;

/// Spin system with a quadratic log-density in embedded coordinates.
#[derive(Debug, Clone)]
pub struct QuadraticSpinSystem {
    space: ProductSpace,
    embedding: Vec<Vec<f64>>,
    dim: usize,
    coupling: DMatrix<f64>,
    field: DVector<f64>,
}

impl QuadraticSpinSystem {
    pub fn new(
        space: ProductSpace,
        embedding: Vec<Vec<f64>>,
        coupling: DMatrix<f64>,
        field: DVector<f64>,
    ) -> Result<Self> {
        if embedding.len() != space.alphabet() {
            return Err(Error::DimensionMismatch(embedding.len(), space.alphabet()));
        }
        let dim = embedding[0].len();
        if dim == 0 || embedding.iter().any(|e| e.len() != dim) {
            return Err(Error::Parameter("embedding vectors must share a positive length".into()));
        }
        let big = space.sites() * dim;
        if coupling.shape() != (big, big) || field.len() != big {
            return Err(Error::DimensionMismatch(coupling.nrows(), big));
        }
        if (&coupling - coupling.transpose()).amax() > 1e-10 * coupling.amax().max(1.0) {
            return Err(Error::Parameter("coupling is not symmetric".into()));
        }
        Ok(QuadraticSpinSystem { space, embedding, dim, coupling, field })
    }

    /// Ising spins embedded as `±1`; the diagonal of `J` is kept.
    pub fn from_ising(m: &IsingModel) -> Result<Self> {
        Self::new(
            m.space()?,
            vec![vec![-1.0], vec![1.0]],
            m.coupling().clone(),
            m.field().clone(),
        )
    }

    /// Mean-field Potts with `J = (β/n)(11ᵀ ⊗ I_q)` on centered color vectors.
    pub fn from_potts(p: &PottsModel) -> Result<Self> {
        let q = p.q;
        let n = p.n;
        let embedding: Vec<Vec<f64>> = (0..q)
            .map(|a| (0..q).map(|c| if a == c { 1.0 } else { 0.0 } - 1.0 / q as f64).collect())
            .collect();
        let big = n * q;
        let scale = p.beta / n as f64;
        // Restricted to the centered subspace so the rank is q − 1.
        let coupling = DMatrix::from_fn(big, big, |r, c| {
            let same = if r % q == c % q { 1.0 } else { 0.0 };
            scale * (same - 1.0 / q as f64)
        });
        Self::new(p.space()?, embedding, coupling, DVector::zeros(big))
    }

    pub fn space(&self) -> &ProductSpace {
        &self.space
    }

    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn field(&self) -> &DVector<f64> {
        &self.field
    }

    /// Largest embedded vector norm, the `D` of the net construction.
    pub fn support_radius(&self) -> f64 {
        self.embedding
            .iter()
            .map(|e| e.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn embed(&self, index: usize) -> DVector<f64> {
        let mut x = DVector::zeros(self.space.sites() * self.dim);
        for i in 0..self.space.sites() {
            let e = &self.embedding[self.space.digit(index, i)];
            for (k, v) in e.iter().enumerate() {
                x[i * self.dim + k] = *v;
            }
        }
        x
    }

    fn log_weight_with(&self, x: &DVector<f64>, coupling: &DMatrix<f64>) -> f64 {
        0.5 * x.dot(&(coupling * x)) + self.field.dot(x)
    }

    pub fn log_weight(&self, index: usize) -> f64 {
        self.log_weight_with(&self.embed(index), &self.coupling)
    }

    pub fn exact_distribution(&self) -> Result<FiniteDistribution> {
        let logs: Vec<f64> = (0..self.space.size()).map(|x| self.log_weight(x)).collect();
        FiniteDistribution::from_log_weights(&logs)
    }
}

/// `J = J₊ + J̃` with `J₊` the eigen-part above `1 − 1/c`.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub j_plus: DMatrix<f64>,
    pub j_tilde: DMatrix<f64>,
    /// `−Σ_{λ<0} λ φφᵀ`.
    pub j_minus: DMatrix<f64>,
    pub r: usize,
    pub c: f64,
    pub threshold: f64,
    /// Eigenvalues of `J₊`, descending.
    pub top_values: Vec<f64>,
    /// Matching orthonormal eigenvectors as columns.
    pub top_vectors: DMatrix<f64>,
    /// `Tr(J₋) = −Σ_{λ<0} λ`.
    pub trace_minus: f64,
}

pub fn split_spectrum(m: &IsingModel, c: f64) -> Result<SpectralSplit> {
    split_coupling(m.coupling(), c)
}

pub fn split_coupling(j: &DMatrix<f64>, c: f64) -> Result<SpectralSplit> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::Parameter(format!("c = {c} must be at least 1")));
    }
    let threshold = 1.0 - 1.0 / c;
    let big = j.nrows();
    let eig = j.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..big).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top: Vec<usize> = order.iter().copied().filter(|&i| eig.eigenvalues[i] > threshold).collect();
    let r = top.len();
    let mut top_vectors = DMatrix::zeros(big, r);
    let mut j_plus = DMatrix::zeros(big, big);
    for (col, &i) in top.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        top_vectors.set_column(col, &v);
        j_plus += v * v.transpose() * eig.eigenvalues[i];
    }
    let mut j_minus = DMatrix::zeros(big, big);
    let mut trace_minus = 0.0;
    for i in 0..big {
        let l = eig.eigenvalues[i];
        if l < 0.0 {
            let v = eig.eigenvectors.column(i);
            j_minus -= v * v.transpose() * l;
            trace_minus -= l;
        }
    }
    Ok(SpectralSplit {
        j_tilde: j - &j_plus,
        j_plus,
        j_minus,
        r,
        c,
        threshold,
        top_values: top.iter().map(|&i| eig.eigenvalues[i]).collect(),
        top_vectors,
        trace_minus,
    })
}

/// Knobs for the field net.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetOptions {
    /// Multiplier on the mesh `δ = 1/(2D√n)`.
    pub mesh_scale: f64,
    pub max_doublings: usize,
    pub max_fields: usize,
    /// Required bound on the truncated tail over bulk mass.
    pub tail_target: f64,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions { mesh_scale: 1.0, max_doublings: 6, max_fields: MAX_FIELDS, tail_target: 0.25 }
    }
}

/// Grid of external fields in the eigen-coordinates of `J₊` with mixture
/// weights.
#[derive(Debug, Clone, Serialize)]
pub struct FieldNet {
    pub r: usize,
    pub delta: f64,
    pub radius: f64,
    pub doublings: usize,
    /// Worst-case truncated tail over bulk mass across states.
    pub tail_ratio: f64,
    /// Field coordinates `s` with `H = Σₐ sₐφₐ`.
    pub coords: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    #[serde(skip)]
    basis: DMatrix<f64>,
}

impl FieldNet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Field vector `H ∈ ℝ^{n·dim}` of grid point `h`.
    pub fn field(&self, h: usize) -> DVector<f64> {
        &self.basis * DVector::from_column_slice(&self.coords[h])
    }

    /// `fieldnet v1 <r> <count>` then `s_1 … s_r weight` per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "fieldnet v1 {} {}", self.r, self.len())?;
        for (s, p) in self.coords.iter().zip(&self.weights) {
            let mut cols: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            cols.push(p.to_string());
            writeln!(w, "{}", cols.join(" "))?;
        }
        Ok(())
    }
}

/// Per-state quantities shared by net construction and mixture evaluation.
struct StateTable {
    /// `½⟨X, J̃X⟩ + ⟨b, X⟩`.
    base: Vec<f64>,
    /// `⟨φₐ, X⟩`, row-major `m × r`.
    proj: Vec<f64>,
    r: usize,
}

impl StateTable {
    fn new(system: &QuadraticSpinSystem, split: &SpectralSplit) -> Result<Self> {
        let m = system.space.size();
        if m > DENSE_LIMIT {
            return Err(Error::Capacity(format!(
                "exact decomposition enumerates {m} states, limit {DENSE_LIMIT}"
            )));
        }
        if split.j_plus.nrows() != system.coupling.nrows() {
            return Err(Error::DimensionMismatch(split.j_plus.nrows(), system.coupling.nrows()));
        }
        let r = split.r;
        let mut base = Vec::with_capacity(m);
        let mut proj = Vec::with_capacity(m * r);
        for x in 0..m {
            let v = system.embed(x);
            base.push(system.log_weight_with(&v, &split.j_tilde));
            for a in 0..r {
                proj.push(split.top_vectors.column(a).dot(&v));
            }
        }
        Ok(StateTable { base, proj, r })
    }

    fn m(&self) -> usize {
        self.base.len()
    }

    #[inline]
    fn tilt(&self, x: usize, s: &[f64]) -> f64 {
        let p = &self.proj[x * self.r..(x + 1) * self.r];
        p.iter().zip(s).map(|(a, b)| a * b).sum()
    }

    fn log_partition(&self, s: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.m()).map(|x| self.base[x] + self.tilt(x, s)).collect();
        log_sum_exp(&terms)
    }

    /// Largest probability, over states, that the field posterior leaves the
    /// ball of radius `radius`, bounded coordinatewise.
    fn worst_tail(&self, values: &[f64], radius: f64) -> f64 {
        let edge = radius / (self.r as f64).sqrt();
        (0..self.m())
            .map(|x| {
                let p = &self.proj[x * self.r..(x + 1) * self.r];
                p.iter()
                    .zip(values)
                    .map(|(y, l)| {
                        let mean = l * y;
                        let sd = l.sqrt();
                        let z = std::f64::consts::SQRT_2 * sd;
                        0.5 * erfc((edge - mean) / z) + 0.5 * erfc((edge + mean) / z)
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Build the field net: grid of mesh `δ = mesh_scale/(2D√n)` over the ball of
/// radius `R` in the eigen-coordinates of `J₊`, weights
/// `p_h ∝ ∫_{cell} Z_H e^{−½⟨H, J₊⁺H⟩} dH` by midpoint quadrature on `3^r`
/// sub-nodes. `R` starts at
/// `λ₁D√n + r√λ₁ + √(λ₁ r ln(λ_r^{−1/2} + D√n))` and doubles until the
/// truncated tail over bulk mass is below `tail_target`.
pub fn build_field_net(
    system: &QuadraticSpinSystem,
    split: &SpectralSplit,
    support_radius: f64,
    opts: &NetOptions,
) -> Result<FieldNet> {
    let r = split.r;
    if r > MAX_RANK {
        return Err(Error::Capacity(format!("net rank {r} exceeds {MAX_RANK}")));
    }
    if !(support_radius > 0.0 && opts.mesh_scale > 0.0) {
        return Err(Error::Parameter("support radius and mesh scale must be positive".into()));
    }
    let table = StateTable::new(system, split)?;
    if r == 0 {
        return Ok(FieldNet {
            r,
            delta: 0.0,
            radius: 0.0,
            doublings: 0,
            tail_ratio: 0.0,
            coords: vec![vec![]],
            weights: vec![1.0],
            basis: split.top_vectors.clone(),
        });
    }
    let n = system.space.sites() as f64;
    let lambda = &split.top_values;
    let (l1, lr) = (lambda[0], lambda[r - 1]);
    let dn = support_radius * n.sqrt();
    let rf = r as f64;
    let mut radius = l1 * dn + rf * l1.sqrt() + (l1 * rf * (lr.powf(-0.5) + dn).ln()).max(0.0).sqrt();
    let ratio = |t: f64| if t >= 1.0 { f64::INFINITY } else { t / (1.0 - t) };
    let mut tail_ratio = ratio(table.worst_tail(lambda, radius));
    let mut doublings = 0;
    while tail_ratio >= opts.tail_target && doublings < opts.max_doublings {
        radius *= 2.0;
        doublings += 1;
        tail_ratio = ratio(table.worst_tail(lambda, radius));
    }

    let delta = opts.mesh_scale / (2.0 * dn);
    let half = (radius / delta).floor() as i64;
    let side = (2 * half + 1) as f64;
    if side.powi(r as i32) > 10.0 * opts.max_fields as f64 {
        return Err(Error::Capacity(format!(
            "field grid with {side}^{r} candidate points exceeds the cap"
        )));
    }
    let mut coords = Vec::new();
    let mut k = vec![-half; r];
    loop {
        let s: Vec<f64> = k.iter().map(|&v| v as f64 * delta).collect();
        if s.iter().map(|v| v * v).sum::<f64>() <= radius * radius * (1.0 + 1e-12) {
            coords.push(s);
            if coords.len() > opts.max_fields {
                return Err(Error::Capacity(format!(
                    "field net exceeds {} fields",
                    opts.max_fields
                )));
            }
        }
        let mut i = 0;
        while i < r {
            k[i] += 1;
            if k[i] <= half {
                break;
            }
            k[i] = -half;
            i += 1;
        }
        if i == r {
            break;
        }
    }

    let offsets: Vec<Vec<f64>> = (0..3usize.pow(r as u32))
        .map(|mut code| {
            (0..r)
                .map(|_| {
                    let j = (code % 3) as f64 - 1.0;
                    code /= 3;
                    j * delta / 3.0
                })
                .collect()
        })
        .collect();
    let log_cell: Vec<f64> = coords
        .par_iter()
        .map(|s| {
            let terms: Vec<f64> = offsets
                .iter()
                .map(|o| {
                    let h: Vec<f64> = s.iter().zip(o).map(|(a, b)| a + b).collect();
                    let gauss: f64 = h.iter().zip(lambda).map(|(v, l)| v * v / l).sum();
                    table.log_partition(&h) - 0.5 * gauss
                })
                .collect();
            log_sum_exp(&terms)
        })
        .collect();
    let weights = FiniteDistribution::from_log_weights(&log_cell)?.probs().to_vec();
    Ok(FieldNet {
        r,
        delta,
        radius,
        doublings,
        tail_ratio,
        coords,
        weights,
        basis: split.top_vectors.clone(),
    })
}

/// The discretized mixture `π₂ = Σ_h p_h π̃_h`.
pub struct MixtureDensity {
    pub pi2: FiniteDistribution,
    /// `ln Z_h` for each field of the net.
    pub log_partitions: Vec<f64>,
    table: StateTable,
    j_tilde: DMatrix<f64>,
    field: DVector<f64>,
}

pub fn mixture_density(
    net: &FieldNet,
    split: &SpectralSplit,
    system: &QuadraticSpinSystem,
) -> Result<MixtureDensity> {
    let table = StateTable::new(system, split)?;
    if table.r != net.r {
        return Err(Error::DimensionMismatch(net.r, table.r));
    }
    let log_partitions: Vec<f64> = net.coords.par_iter().map(|s| table.log_partition(s)).collect();
    let log_mix: Vec<f64> = net
        .weights
        .iter()
        .zip(&log_partitions)
        .map(|(p, z)| p.ln() - z)
        .collect();
    let logs: Vec<f64> = (0..table.m())
        .into_par_iter()
        .map(|x| {
            let terms: Vec<f64> = net
                .coords
                .iter()
                .zip(&log_mix)
                .map(|(s, c)| c + table.tilt(x, s))
                .collect();
            table.base[x] + log_sum_exp(&terms)
        })
        .collect();
    Ok(MixtureDensity {
        pi2: FiniteDistribution::from_log_weights(&logs)?,
        log_partitions,
        table,
        j_tilde: split.j_tilde.clone(),
        field: system.field.clone(),
    })
}

impl MixtureDensity {
    /// Component `π̃_h` as an exact distribution.
    pub fn component(&self, net: &FieldNet, h: usize) -> Result<FiniteDistribution> {
        let s = &net.coords[h];
        let z = self.log_partitions[h];
        let probs: Vec<f64> =
            (0..self.table.m()).map(|x| (self.table.base[x] + self.table.tilt(x, s) - z).exp()).collect();
        FiniteDistribution::from_weights(probs)
    }

    /// Component `π̃_h` as the Ising model `(J̃, b + H)` for dynamics.
    /// Only available for `±1` spins.
    pub fn component_model(&self, net: &FieldNet, h: usize) -> Result<IsingModel> {
        if self.j_tilde.nrows() != self.field.len() || self.table.m() != 1 << self.field.len() {
            return Err(Error::Capability("component models exist for Ising systems only".into()));
        }
        IsingModel::with_self_coupling(self.j_tilde.clone(), &self.field + net.field(h))
    }
}

/// Range of `dπ₂/dπ` over all states.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SandwichCertificate {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub pass: bool,
}

/// Width of the certified band: `[e^{−3}, e^{3}]`.
pub const SANDWICH_LOG_WIDTH: f64 = 3.0;

pub fn certify_sandwich(pi: &FiniteDistribution, pi2: &FiniteDistribution) -> Result<SandwichCertificate> {
    if pi.len() != pi2.len() {
        return Err(Error::DimensionMismatch(pi.len(), pi2.len()));
    }
    if pi.probs().iter().any(|p| *p <= 0.0) {
        return Err(Error::Support("reference measure must be strictly positive".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (a, b) in pi2.probs().iter().zip(pi.probs()) {
        let ratio = a / b;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    let pass = lo >= (-SANDWICH_LOG_WIDTH).exp() && hi <= SANDWICH_LOG_WIDTH.exp();
    Ok(SandwichCertificate { min_ratio: lo, max_ratio: hi, pass })
}

/// Exact decomposition `π = Σ_h q_h π̄_h` with `π̄_h ∝ (π/π₂) π̃_h`.
pub struct Refinement {
    pub weights: Vec<f64>,
    ratio: Vec<f64>,
}

pub fn exact_mixture_refinement(
    pi: &FiniteDistribution,
    density: &MixtureDensity,
    net: &FieldNet,
) -> Result<Refinement> {
    let cert = certify_sandwich(pi, &density.pi2)?;
    if !cert.pass {
        return Err(Error::Domain(format!(
            "sandwich certificate failed: ratio range [{:.3e}, {:.3e}]",
            cert.min_ratio, cert.max_ratio
        )));
    }
    let ratio: Vec<f64> = pi.probs().iter().zip(density.pi2.probs()).map(|(a, b)| a / b).collect();
    let t = &density.table;
    let weights: Vec<f64> = (0..net.len())
        .into_par_iter()
        .map(|h| {
            let s = &net.coords[h];
            let z = density.log_partitions[h];
            let mass: f64 =
                (0..t.m()).map(|x| ratio[x] * (t.base[x] + t.tilt(x, s) - z).exp()).sum();
            net.weights[h] * mass
        })
        .collect();
    Ok(Refinement { weights, ratio })
}

impl Refinement {
    /// `π̄_h`.
    pub fn component(&self, density: &MixtureDensity, net: &FieldNet, h: usize) -> Result<FiniteDistribution> {
        let tilde = density.component(net, h)?;
        FiniteDistribution::from_weights(
            tilde.probs().iter().zip(&self.ratio).map(|(p, w)| p * w).collect(),
        )
    }

    /// `Σ_h q_h π̄_h`, which equals `π` exactly up to rounding.
    pub fn reconstruct(&self, density: &MixtureDensity, net: &FieldNet) -> Result<Vec<f64>> {
        let mut total = vec![0.0; self.ratio.len()];
        for h in 0..net.len() {
            if self.weights[h] == 0.0 {
                continue;
            }
            let c = self.component(density, net, h)?;
            total.iter_mut().zip(c.probs()).for_each(|(t, p)| *t += self.weights[h] * p);
        }
        Ok(total)
    }
}
