//! Smallest-support initializations that are exactly eigenfunction balanced.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::Spectrum;
use crate::measures::FiniteDistribution;
use crate::{Error, Result};

// Subsets examined per support size before falling back to the simplex.
const ENUMERATION_BUDGET: f64 = 5e6;
const FEASIBILITY_TOL: f64 = 1e-9;

/// A distribution `ρ` with `E_ρ fᵢ = 0` for `2 ≤ i ≤ k`.
#[derive(Debug, Clone, Serialize)]
pub struct BalancedInit {
    #[serde(skip)]
    pub distribution: FiniteDistribution,
    pub support: Vec<usize>,
    /// Whether every smaller support was ruled out by enumeration.
    pub minimal: bool,
    /// `max_{2≤i≤k} |E_ρ fᵢ|`.
    pub residual: f64,
}

/// Find a balanced initialization of minimal support.
///
/// The constraints `Σρ = 1, E_ρ f₂ = … = E_ρ f_k = 0` form `k` equations, so
/// a basic feasible solution has at most `k` support points. States with
/// identical eigenfunction values are merged first. Supports are enumerated
/// by increasing size while the number of subsets stays within budget;
/// beyond that a phase-one simplex returns some basic solution.
pub fn minimal_balanced_initialization(s: &Spectrum, k: usize) -> Result<BalancedInit> {
    if k < 2 {
        return Err(Error::Parameter(format!("k = {k} must be at least 2")));
    }
    if k > s.len() {
        return Err(Error::Capability(format!(
            "need {k} eigenfunctions, have {}",
            s.len()
        )));
    }
    let f = s.eigenfunctions();
    let m = s.states();
    let rows = k - 1;

    // Merge states with the same constraint column.
    let scale = f.columns(1, rows).amax().max(1.0);
    let mut reps: Vec<usize> = Vec::new();
    let mut seen: HashMap<Vec<i64>, usize> = HashMap::new();
    for x in 0..m {
        let key: Vec<i64> = (1..k).map(|c| (f[(x, c)] / scale * 1e9).round() as i64).collect();
        seen.entry(key).or_insert_with(|| {
            reps.push(x);
            reps.len() - 1
        });
    }
    let u = reps.len();
    // Constraint matrix over the merged states, including the mass row.
    let mut a = DMatrix::zeros(k, u);
    for (j, &x) in reps.iter().enumerate() {
        a[(0, j)] = 1.0;
        for r in 1..k {
            a[(r, j)] = f[(x, r)];
        }
    }

    let mut minimal = true;
    let mut found = None;
    for size in 1..=k.min(u) {
        if binomial(u, size) > ENUMERATION_BUDGET {
            minimal = false;
            break;
        }
        if let Some(sol) = search_size(&a, size) {
            found = Some(sol);
            break;
        }
    }
    let (cols, weights) = match found {
        Some(sol) => sol,
        None if minimal => {
            return Err(Error::Infeasible(
                "no balanced distribution exists; eigenfunctions are inconsistent".into(),
            ))
        }
        None => simplex_phase_one(&a)?,
    };

    let mut probs = vec![0.0; m];
    let mut support = Vec::new();
    for (c, w) in cols.iter().zip(&weights) {
        if *w > 0.0 {
            probs[reps[*c]] += w;
            support.push(reps[*c]);
        }
    }
    support.sort_unstable();
    let distribution = FiniteDistribution::from_weights(probs)?;
    let coef = s.coefficients(&distribution)?;
    let residual = coef[1..k].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(BalancedInit { distribution, support, minimal, residual })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// First subset of `size` columns admitting a nonnegative solution of
/// `A ρ = e₁`, in lexicographic order.
fn search_size(a: &DMatrix<f64>, size: usize) -> Option<(Vec<usize>, Vec<f64>)> {
    let u = a.ncols();
    let mut subset: Vec<usize> = (0..size).collect();
    let mut rhs = DVector::zeros(a.nrows());
    rhs[0] = 1.0;
    loop {
        if let Some(w) = solve_subset(a, &subset, &rhs) {
            return Some((subset, w));
        }
        // next combination
        let mut i = size;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if subset[i] < u - size + i {
                break;
            }
            if i == 0 {
                return None;
            }
        }
        subset[i] += 1;
        for j in i + 1..size {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

fn solve_subset(a: &DMatrix<f64>, subset: &[usize], rhs: &DVector<f64>) -> Option<Vec<f64>> {
    let sub = a.select_columns(subset);
    if subset.len() == 1 {
        let col = sub.column(0);
        let ok = (1..col.len()).all(|r| col[r].abs() <= FEASIBILITY_TOL);
        return ok.then(|| vec![1.0]);
    }
    let svd = sub.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax.max(1.0) {
        // Dependent columns: a smaller support would already have worked.
        return None;
    }
    let w = svd.solve(rhs, 0.0).ok()?;
    if (&sub * &w - rhs).amax() > FEASIBILITY_TOL || w.iter().any(|v| *v < -FEASIBILITY_TOL) {
        return None;
    }
    let mut w: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Some(w)
}

/// Phase-one simplex with Bland's rule on `A ρ = e₁, ρ ≥ 0`.
fn simplex_phase_one(a: &DMatrix<f64>) -> Result<(Vec<usize>, Vec<f64>)> {
    let (k, u) = a.shape();
    let width = u + k + 1;
    // Tableau rows are constraints; artificial variables occupy u..u+k.
    let mut t = DMatrix::zeros(k, width);
    for r in 0..k {
        for c in 0..u {
            t[(r, c)] = a[(r, c)];
        }
        t[(r, u + r)] = 1.0;
    }
    t[(0, width - 1)] = 1.0;
    let mut basis: Vec<usize> = (u..u + k).collect();
    let max_pivots = 50 * (u + k);
    for _ in 0..max_pivots {
        // Reduced costs of the phase-one objective Σ artificials.
        let entering = (0..u + k).find(|&c| {
            if basis.contains(&c) {
                return false;
            }
            let cost = if c >= u { 1.0 } else { 0.0 };
            let reduced = cost - (0..k).filter(|&r| basis[r] >= u).map(|r| t[(r, c)]).sum::<f64>();
            reduced < -1e-12
        });
        let Some(e) = entering else {
            let infeasibility: f64 =
                (0..k).filter(|&r| basis[r] >= u).map(|r| t[(r, width - 1)]).sum();
            if infeasibility > 1e-9 {
                return Err(Error::Infeasible(format!(
                    "phase-one optimum {infeasibility:.3e} > 0"
                )));
            }
            let mut cols = Vec::new();
            let mut weights = Vec::new();
            for r in 0..k {
                if basis[r] < u && t[(r, width - 1)] > 0.0 {
                    cols.push(basis[r]);
                    weights.push(t[(r, width - 1)]);
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            return Ok((cols, weights));
        };
        // Ratio test; ties broken by the smallest basic index.
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..k {
            if t[(r, e)] > 1e-12 {
                let ratio = t[(r, width - 1)] / t[(r, e)];
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-15
                            || (ratio <= lratio + 1e-15 && basis[r] < basis[lr])
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return Err(Error::Numeric("unbounded phase-one problem".into()));
        };
        let pivot = t[(r, e)];
        for c in 0..width {
            t[(r, c)] /= pivot;
        }
        for rr in 0..k {
            if rr != r {
                let factor = t[(rr, e)];
                if factor != 0.0 {
                    for c in 0..width {
                        t[(rr, c)] -= factor * t[(r, c)];
                    }
                }
            }
        }
        basis[r] = e;
    }
    Err(Error::Numeric("simplex pivot limit reached".into()))
}
