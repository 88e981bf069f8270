//! Probability containers and divergences.
//!
//! States of `{±1}ⁿ` are indexed by integers whose bit `i` encodes spin `i`
//! (bit set means `+1`). General product spaces `[a]ⁿ` use base-`a` digits,
//! least significant digit first.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Serialize, Serializer};

use crate::{Error, Result};

/// Largest state space that may be enumerated.
pub const MAX_STATES: usize = 1 << 20;

const SUM_TOLERANCE: f64 = 1e-12;

/// The product space `[alphabet]^sites`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductSpace {
    sites: usize,
    alphabet: usize,
    size: usize,
}

impl ProductSpace {
    pub fn new(sites: usize, alphabet: usize) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::Parameter(format!("alphabet size {alphabet} < 2")));
        }
        let mut size = 1usize;
        for _ in 0..sites {
            size = size
                .checked_mul(alphabet)
                .filter(|s| *s <= MAX_STATES)
                .ok_or_else(|| {
                    Error::Capacity(format!("{alphabet}^{sites} states exceeds {MAX_STATES}"))
                })?;
        }
        Ok(ProductSpace { sites, alphabet, size })
    }

    /// The hypercube `{±1}ⁿ`.
    pub fn binary(sites: usize) -> Result<Self> {
        Self::new(sites, 2)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Letter at `site` of state `index`.
    #[inline]
    pub fn digit(&self, index: usize, site: usize) -> usize {
        if self.alphabet == 2 {
            (index >> site) & 1
        } else {
            (index / self.alphabet.pow(site as u32)) % self.alphabet
        }
    }

    /// State obtained by setting `site` of `index` to `letter`.
    #[inline]
    pub fn with_digit(&self, index: usize, site: usize, letter: usize) -> usize {
        if self.alphabet == 2 {
            (index & !(1 << site)) | (letter << site)
        } else {
            let w = self.alphabet.pow(site as u32);
            let current = (index / w) % self.alphabet;
            index - current * w + letter * w
        }
    }

    pub fn digits(&self, index: usize) -> Vec<usize> {
        (0..self.sites).map(|i| self.digit(index, i)).collect()
    }

    pub fn index_of_digits(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.sites {
            return Err(Error::DimensionMismatch(digits.len(), self.sites));
        }
        let mut index = 0;
        for &d in digits.iter().rev() {
            if d >= self.alphabet {
                return Err(Error::Parameter(format!("letter {d} outside alphabet")));
            }
            index = index * self.alphabet + d;
        }
        Ok(index)
    }

    /// Spin configuration of a hypercube state.
    pub fn spins(&self, index: usize) -> Vec<i8> {
        debug_assert_eq!(self.alphabet, 2);
        (0..self.sites).map(|i| spin_of_bit(index, i)).collect()
    }

    pub fn index_of_spins(&self, spins: &[i8]) -> Result<usize> {
        if self.alphabet != 2 {
            return Err(Error::Parameter("spin index on a non-binary space".into()));
        }
        if spins.len() != self.sites {
            return Err(Error::DimensionMismatch(spins.len(), self.sites));
        }
        let mut index = 0;
        for (i, &s) in spins.iter().enumerate() {
            match s {
                1 => index |= 1 << i,
                -1 => {}
                other => return Err(Error::Parameter(format!("spin value {other}"))),
            }
        }
        Ok(index)
    }
}

#[inline]
pub fn spin_of_bit(index: usize, site: usize) -> i8 {
    if (index >> site) & 1 == 1 {
        1
    } else {
        -1
    }
}

/// An exact probability vector over an enumerated state space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDistribution {
    probs: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Parameter("empty distribution".into()));
        }
        if probs.len() > MAX_STATES {
            return Err(Error::Capacity(format!("{} states", probs.len())));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::Parameter(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE * (probs.len() as f64).sqrt().max(1.0) {
            return Err(Error::Parameter(format!("probabilities sum to {total}")));
        }
        Ok(FiniteDistribution { probs })
    }

    /// Normalize nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::Parameter(format!("cannot normalize weights (sum {total})")));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    /// Normalize `exp(log_weights)` with a log-sum-exp shift.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let lse = crate::log_sum_exp(log_weights);
        if !lse.is_finite() {
            return Err(Error::Numeric(format!("log partition function is {lse}")));
        }
        let mut probs: Vec<f64> = log_weights.iter().map(|l| (l - lse).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(probs)
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Parameter("empty distribution".into()));
        }
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn point_mass(m: usize, index: usize) -> Result<Self> {
        if index >= m {
            return Err(Error::Parameter(format!("state {index} outside 0..{m}")));
        }
        let mut probs = vec![0.0; m];
        probs[index] = 1.0;
        Self::new(probs)
    }

    /// Empirical measure of a list of state indices.
    pub fn empirical(m: usize, states: &[usize]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Parameter("empty sample".into()));
        }
        let mut counts = vec![0.0; m];
        for &s in states {
            if s >= m {
                return Err(Error::Parameter(format!("state {s} outside 0..{m}")));
            }
            counts[s] += 1.0;
        }
        Self::from_weights(counts)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    pub fn expectation(&self, f: &[f64]) -> Result<f64> {
        check_len(self.len(), f.len())?;
        Ok(self.probs.iter().zip(f).map(|(p, v)| p * v).sum())
    }

    /// Push forward through a row-stochastic matrix.
    pub fn push_forward(&self, kernel: &nalgebra::DMatrix<f64>) -> Result<Self> {
        check_len(self.len(), kernel.nrows())?;
        let row = nalgebra::RowDVector::from_row_slice(&self.probs) * kernel;
        let mut probs: Vec<f64> = row.iter().map(|p| p.max(0.0)).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Self::new(probs)
    }

    /// Sample a state index by inverse CDF from a uniform `u ∈ [0,1)`.
    pub fn quantile(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.support().last().copied().unwrap_or(0)
    }

    pub fn sampler(&self) -> Result<rand::distr::weighted::WeightedIndex<f64>> {
        rand::distr::weighted::WeightedIndex::new(&self.probs)
            .map_err(|e| Error::Parameter(format!("cannot sample: {e}")))
    }

    /// `finite-dist v1 <m>` followed by `index probability` lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "finite-dist v1 {}", self.len())?;
        for (i, p) in self.probs.iter().enumerate() {
            writeln!(w, "{i} {p}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty input".into()))??;
        let m = parse_header(&header, "finite-dist", 1)?[0];
        let mut probs = vec![f64::NAN; m];
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(i), Some(p), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad line `{line}`")));
            };
            let i: usize = i.parse().map_err(|_| Error::Parse(format!("bad index `{i}`")))?;
            if i >= m {
                return Err(Error::Parse(format!("index {i} out of range")));
            }
            probs[i] = p.parse().map_err(|_| Error::Parse(format!("bad probability `{p}`")))?;
        }
        if probs.iter().any(|p| p.is_nan()) {
            return Err(Error::Parse("missing states".into()));
        }
        Self::new(probs)
    }
}

/// Parse `<tag> v1 <a> <b> ...`, returning the `count` integer fields.
pub(crate) fn parse_header(line: &str, tag: &str, count: usize) -> Result<Vec<usize>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != count + 2 || fields[0] != tag {
        return Err(Error::Parse(format!("expected `{tag} v1 ...` header, got `{line}`")));
    }
    if fields[1] != "v1" {
        return Err(Error::Parse(format!("unsupported {tag} version {}", fields[1])));
    }
    fields[2..]
        .iter()
        .map(|f| f.parse().map_err(|_| Error::Parse(format!("bad header field `{f}`"))))
        .collect()
}

pub(crate) fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|f| f.parse().map_err(|_| Error::Parse(format!("bad number `{f}`"))))
        .collect()
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        Err(Error::DimensionMismatch(a, b))
    } else {
        Ok(())
    }
}

/// A point with a dimensionality.
pub trait Point: Clone + Send + Sync {
    fn dim(&self) -> usize;
}

impl Point for Vec<f64> {
    fn dim(&self) -> usize {
        self.len()
    }
}

impl Point for Vec<i8> {
    fn dim(&self) -> usize {
        self.len()
    }
}

/// A nonempty multiset of draws sharing one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<P: Point> {
    points: Vec<P>,
    dim: usize,
}

impl<P: Point> SampleSet<P> {
    pub fn new(points: Vec<P>) -> Result<Self> {
        let dim = points
            .first()
            .ok_or_else(|| Error::Parameter("empty sample set".into()))?
            .dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch(p.dim(), dim));
        }
        Ok(SampleSet { points, dim })
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn into_points(self) -> Vec<P> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl SampleSet<Vec<i8>> {
    /// Empirical measure on `{±1}ⁿ`.
    pub fn empirical(&self) -> Result<FiniteDistribution> {
        let space = ProductSpace::binary(self.dim)?;
        let idx = self.indices()?;
        FiniteDistribution::empirical(space.size(), &idx)
    }

    pub fn indices(&self) -> Result<Vec<usize>> {
        let space = ProductSpace::binary(self.dim)?;
        self.points.iter().map(|p| space.index_of_spins(p)).collect()
    }

    pub fn from_indices(sites: usize, indices: &[usize]) -> Result<Self> {
        let space = ProductSpace::binary(sites)?;
        Self::new(indices.iter().map(|&i| space.spins(i)).collect())
    }

    /// One configuration per line as `±1` integers.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for p in &self.points {
            let line: Vec<String> = p.iter().map(|s| s.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut points = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: Vec<i8> = line
                .split_whitespace()
                .map(|s| match s {
                    "1" | "+1" => Ok(1),
                    "-1" => Ok(-1),
                    _ => Err(Error::Parse(format!("bad spin `{s}`"))),
                })
                .collect::<Result<_>>()?;
            points.push(p);
        }
        Self::new(points)
    }
}

/// A nonnegative real or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(v)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::Infinite => s.serialize_str("inf"),
        }
    }
}

/// All divergences of `p` from `q` at once.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub tv: f64,
    pub kl: ExtReal,
    pub chi2: ExtReal,
    pub renyi: Option<ExtReal>,
    pub order: Option<f64>,
}

impl DivergenceReport {
    pub fn compute(
        p: &FiniteDistribution,
        q: &FiniteDistribution,
        order: Option<f64>,
    ) -> Result<Self> {
        let renyi = order
            .map(|o| renyi_divergence(p, q, o).map(ExtReal::from_f64))
            .transpose()?;
        Ok(DivergenceReport {
            tv: tv_distance(p, q)?,
            kl: ExtReal::from_f64(kl_divergence(p, q)?),
            chi2: ExtReal::from_f64(chi2_divergence(p, q)?),
            renyi,
            order,
        })
    }
}

pub fn tv_distance(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let s: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * s).min(1.0))
}

/// `Σ_{q>0} (p/q − 1)² q`, infinite when `p` is not absolutely continuous.
pub fn chi2_divergence(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let mut total = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if b > 0.0 {
            total += (a - b) * (a - b) / b;
        } else if a > 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(total)
}

pub fn kl_divergence(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let mut total = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += a * (a / b).ln();
        }
    }
    Ok(total.max(0.0))
}

/// Rényi divergence `(q−1)⁻¹ ln Σ p^q q^{1−q}` of order `order > 1`.
pub fn renyi_divergence(p: &FiniteDistribution, q: &FiniteDistribution, order: f64) -> Result<f64> {
    check_len(p.len(), q.len())?;
    if !(order > 1.0 && order.is_finite()) {
        return Err(Error::Parameter(format!("Rényi order {order} must exceed 1")));
    }
    let mut terms = Vec::with_capacity(p.len());
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a > 0.0 {
            if b == 0.0 {
                return Ok(f64::INFINITY);
            }
            terms.push(order * a.ln() + (1.0 - order) * b.ln());
        }
    }
    Ok((crate::log_sum_exp(&terms) / (order - 1.0)).max(0.0))
}

/// TV between 1-D histograms of projected samples.
///
/// Bins share edges spanning the pooled range. The result lower-bounds the
/// TV of the projected laws up to binning and sampling error, and the TV of
/// a projection never exceeds the TV of the full laws.
pub fn empirical_tv_continuous(
    a: &SampleSet<Vec<f64>>,
    b: &SampleSet<Vec<f64>>,
    projector: &[f64],
    bins: usize,
) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Parameter(format!("need at least 2 bins, got {bins}")));
    }
    check_len(a.dim(), b.dim())?;
    check_len(a.dim(), projector.len())?;
    let project = |s: &SampleSet<Vec<f64>>| -> Vec<f64> {
        s.points()
            .iter()
            .map(|x| x.iter().zip(projector).map(|(u, v)| u * v).sum())
            .collect()
    };
    let (pa, pb) = (project(a), project(b));
    let finite = pa.iter().chain(&pb).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if !(hi > lo) {
        return Ok(0.0);
    }
    let width = (hi - lo) / bins as f64;
    let histogram = |vals: &[f64]| -> Vec<f64> {
        let mut h = vec![0.0; bins];
        for v in vals.iter().filter(|v| v.is_finite()) {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            h[k] += 1.0;
        }
        let n = vals.len() as f64;
        h.iter_mut().for_each(|c| *c /= n);
        h
    };
    let (ha, hb) = (histogram(&pa), histogram(&pb));
    Ok((0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>()).min(1.0))
}
