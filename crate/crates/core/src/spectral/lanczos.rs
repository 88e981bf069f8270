//! Lanczos iteration for the low end of the spectrum of large generators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{GeneratorMatrix, Spectrum};
use crate::{Error, Result};

// Krylov basis memory cap, in f64 entries.
const BASIS_BUDGET: usize = 1 << 27;
const RESIDUAL_TOL: f64 = 1e-9;

/// Smallest `k` eigenpairs of `−𝓛` by Lanczos with full reorthogonalization.
///
/// Works on `σI − A` with `σ` a Gershgorin bound, so the wanted eigenvalues
/// are the largest and converge first. Single-vector Lanczos may resolve only
/// one copy of a repeated eigenvalue.
pub fn eigendecompose_iterative(g: &GeneratorMatrix, k: usize) -> Result<Spectrum> {
    let m = g.size();
    if k == 0 || k > m {
        return Err(Error::Parameter(format!("k = {k} outside 1..={m}")));
    }
    let max_dim = m.min((BASIS_BUDGET / m).clamp(k + 2, 600));
    let sigma = g.gershgorin_upper().max(1.0);
    let tol = RESIDUAL_TOL * sigma;

    let mut rng = crate::rng::seeded(0x1a4c_205);
    let mut q0: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut q0);

    let mut basis: Vec<Vec<f64>> = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; m];
    let mut worst;
    let mut next_check = (2 * k + 20).min(max_dim);

    loop {
        let j = alpha.len();
        g.apply(&basis[j], &mut w);
        for (wi, qi) in w.iter_mut().zip(&basis[j]) {
            *wi = sigma * qi - *wi;
        }
        let a = dot(&basis[j], &w);
        alpha.push(a);
        // Two passes of classical Gram–Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let b = norm(&w);
        let exhausted = b < 1e-12 * sigma || alpha.len() == m;
        if alpha.len() >= next_check || exhausted || alpha.len() == max_dim {
            let (theta, s) = tridiagonal_eigen(&alpha, &beta);
            let dim = alpha.len();
            // Ritz values in descending order of σ − λ.
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&x, &y| theta[y].total_cmp(&theta[x]));
            let take = k.min(dim);
            worst = order[..take]
                .iter()
                .map(|&c| if exhausted { 0.0 } else { (b * s[(dim - 1, c)]).abs() })
                .fold(0.0, f64::max);
            if take == k && worst <= tol {
                let eigenvalues: Vec<f64> =
                    order[..k].iter().map(|&c| sigma - theta[c]).collect();
                let mut vectors = DMatrix::zeros(m, k);
                for (col, &c) in order[..k].iter().enumerate() {
                    let mut v = vec![0.0; m];
                    for (i, q) in basis.iter().enumerate().take(dim) {
                        let coef = s[(i, c)];
                        v.iter_mut().zip(q).for_each(|(vi, qi)| *vi += coef * qi);
                    }
                    normalize(&mut v);
                    vectors.set_column(col, &DVector::from_vec(v));
                }
                return Ok(Spectrum::from_symmetric(
                    eigenvalues,
                    vectors,
                    g.stationary().clone(),
                    k == m,
                ));
            }
            if exhausted || alpha.len() == max_dim {
                break;
            }
            next_check = (next_check + next_check / 2).min(max_dim);
        }
        beta.push(b);
        let mut q = w.clone();
        q.iter_mut().for_each(|v| *v /= b);
        basis.push(q);
    }
    Err(Error::Numeric(format!(
        "Lanczos did not converge: worst residual {worst:.3e} > {tol:.3e} \
         after {} iterations",
        alpha.len()
    )))
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let d = alpha.len();
    let mut t = DMatrix::zeros(d, d);
    for i in 0..d {
        t[(i, i)] = alpha[i];
        if i + 1 < d {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let e = t.symmetric_eigen();
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    a.iter_mut().for_each(|v| *v /= n);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{FiniteDistribution, ProductSpace};
    use crate::spectral::{build_glauber_generator, eigendecompose};

    #[test]
    fn agrees_with_dense_solver_on_skewed_measure() {
        let space = ProductSpace::binary(7).unwrap();
        let mut rng = crate::rng::seeded(3);
        let w: Vec<f64> = (0..space.size()).map(|_| rng.random_range(0.2..5.0)).collect();
        let pi = FiniteDistribution::from_weights(w).unwrap();
        let g = build_glauber_generator(&space, &pi).unwrap();
        let dense = eigendecompose(&g, 128).unwrap();
        let iter = eigendecompose_iterative(&g, 4).unwrap();
        assert!(!iter.is_complete());
        for i in 0..4 {
            assert!(
                (dense.eigenvalues()[i] - iter.eigenvalues()[i]).abs() < 1e-8,
                "{i}: {} vs {}",
                dense.eigenvalues()[i],
                iter.eigenvalues()[i]
            );
        }
        // simple eigenvalues: eigenfunctions agree up to the sign convention
        for i in 1..4 {
            let a = dense.eigenfunction(i);
            let b = iter.eigenfunction(i);
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-5, "eigenfunction {i} differs by {diff}");
        }
    }
}
