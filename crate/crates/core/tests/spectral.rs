use multimix::ising::{curie_weiss, IsingModel};
use multimix::measures::{FiniteDistribution, ProductSpace};
use multimix::rng::seeded;
use multimix::spectral::{
    balance_statistic, build_glauber_generator, chi2_trajectory, eigendecompose,
    eigendecompose_iterative, evolve, higher_order_gap, minimal_balanced_initialization,
    read_spectrum_text, verify_balance_contraction,
};
use multimix::{chi2_divergence, tv_distance};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn random_ising(n: usize, seed: u64) -> IsingModel {
    let mut rng = seeded(seed);
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i + 1..n {
            let v = rng.random_range(-0.7..0.7);
            j[(i, k)] = v;
            j[(k, i)] = v;
        }
    }
    IsingModel::new(j, DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5))).unwrap()
}

fn uniform_spectrum(n: usize) -> multimix::spectral::Spectrum {
    let space = ProductSpace::binary(n).unwrap();
    let g = build_glauber_generator(&space, &FiniteDistribution::uniform(space.size()).unwrap())
        .unwrap();
    eigendecompose(&g, space.size()).unwrap()
}

/// `−𝓛` symmetrized, built from Boltzmann weights and heat-bath rates
/// without going through the library generator.
fn brute_force_symmetric(m: &IsingModel) -> DMatrix<f64> {
    let n = m.n();
    let size = 1usize << n;
    let spins = |x: usize| -> Vec<i8> { (0..n).map(|i| if x >> i & 1 == 1 { 1 } else { -1 }).collect() };
    let logw: Vec<f64> = (0..size).map(|x| m.log_weight(&spins(x))).collect();
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let pi: Vec<f64> = w.iter().map(|v| v / z).collect();
    let mut a = DMatrix::zeros(size, size);
    for x in 0..size {
        for i in 0..n {
            let y = x ^ (1 << i);
            let rate = pi[y] / (pi[x] + pi[y]);
            a[(x, x)] += rate;
            a[(x, y)] -= rate * (pi[x] / pi[y]).sqrt();
        }
    }
    a
}

/// Spectrum of the Curie–Weiss birth–death chain on the number of up spins.
/// Its eigenvalues are those of the full chain on magnetization functions,
/// which include λ₂ and, at low temperature, λ₃.
fn magnetization_chain_spectrum(n: usize, beta: f64) -> Vec<f64> {
    let logw = |k: usize| {
        let m = 2.0 * k as f64 - n as f64;
        beta / (2.0 * n as f64) * m * m
    };
    let binom = |k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let mass: Vec<f64> = (0..=n).map(|k| binom(k) * logw(k).exp()).collect();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for k in 0..=n {
        if k > 0 {
            let down = k as f64 / (1.0 + (logw(k) - logw(k - 1)).exp());
            a[(k, k)] += down;
            a[(k, k - 1)] -= down * (mass[k] / mass[k - 1]).sqrt();
        }
        if k < n {
            let up = (n - k) as f64 / (1.0 + (logw(k) - logw(k + 1)).exp());
            a[(k, k)] += up;
            a[(k, k + 1)] -= up * (mass[k] / mass[k + 1]).sqrt();
        }
    }
    let a = (&a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn generator_matches_brute_force() {
    let m = random_ising(6, 1);
    let a = m.generator().unwrap().dense().unwrap();
    let b = brute_force_symmetric(&m);
    assert!((&a - &b).amax() < 1e-12);
}

#[test]
fn single_spin_gap_is_one() {
    let m = IsingModel::product(DVector::from_vec(vec![0.8]));
    let s = eigendecompose(&m.generator().unwrap(), 2).unwrap();
    assert!(s.eigenvalues()[0].abs() < 1e-14);
    assert!((s.eigenvalues()[1] - 1.0).abs() < 1e-14);
}

#[test]
fn uniform_cube_eigenvalues() {
    let s = uniform_spectrum(3);
    let expected = [0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0];
    for (a, b) in s.eigenvalues().iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    let s4 = uniform_spectrum(4);
    assert!(s4.eigenvalues()[1..5].iter().all(|l| (l - 1.0).abs() < 1e-12));
    assert!((higher_order_gap(&s4, 1).unwrap() - 1.0).abs() < 1e-12);
    assert!((higher_order_gap(&s4, 15).unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn spectrum_invariants_on_random_model() {
    let m = random_ising(6, 2);
    let g = m.generator().unwrap();
    let s = eigendecompose(&g, 64).unwrap();
    let l = g.generator_dense().unwrap();
    let pi = g.stationary().probs().to_vec();
    let f = s.eigenfunctions();
    assert!(s.eigenvalues()[0].abs() < 1e-8);
    assert!(f.column(0).iter().all(|v| *v == 1.0));
    for i in 0..64 {
        for j in 0..64 {
            let inner: f64 = (0..64).map(|x| pi[x] * f[(x, i)] * f[(x, j)]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((inner - want).abs() < 1e-8);
        }
        let residual = -(&l * f.column(i)) - f.column(i) * s.eigenvalues()[i];
        let norm: f64 = (0..64).map(|x| pi[x] * residual[x] * residual[x]).sum::<f64>().sqrt();
        assert!(norm < 1e-7);
    }
    let trace: f64 = s.eigenvalues().iter().sum();
    assert!((trace - g.trace()).abs() < 1e-6);
}

#[test]
fn detailed_balance_of_rates() {
    let m = random_ising(5, 3);
    let g = m.generator().unwrap();
    let pi = g.stationary();
    for x in 0..g.size() {
        for (y, rate) in g.transitions(x) {
            let back = g.transitions(y).find(|(z, _)| *z == x).unwrap().1;
            assert!((pi.prob(x) * rate - pi.prob(y) * back).abs() < 1e-10);
        }
    }
}

#[test]
fn curie_weiss_gaps_and_balance() {
    let m = curie_weiss(9, 1.5).unwrap();
    let s = eigendecompose(&m.generator().unwrap(), 512).unwrap();
    let (l2, l3) = (s.eigenvalues()[1], s.eigenvalues()[2]);
    let lumped = magnetization_chain_spectrum(9, 1.5);
    assert!((l2 - lumped[1]).abs() < 1e-10, "λ₂ = {l2}, lumped {}", lumped[1]);
    assert!((l3 - lumped[2]).abs() < 1e-10, "λ₃ = {l3}, lumped {}", lumped[2]);
    assert!(l3 > 1e-3 && l2 < l3 / 5.0);
    let pi = s.stationary().clone();
    assert!(balance_statistic(&s, &pi, 5).unwrap().value < 1e-10);
    let all_up = FiniteDistribution::point_mass(512, 511).unwrap();
    let b = balance_statistic(&s, &all_up, 2).unwrap();
    assert!(b.value > 0.5);
    assert!((b.value - b.coefficients[0].abs()).abs() < 1e-12);
}

#[test]
fn chi2_at_time_zero_and_decay() {
    let s = uniform_spectrum(4);
    let mu = FiniteDistribution::point_mass(16, 5).unwrap();
    let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
    let chi = chi2_trajectory(&s, &mu, &times).unwrap();
    assert!((chi[0] - 15.0).abs() < 1e-10);
    let direct = chi2_divergence(&mu, s.stationary()).unwrap();
    assert!((chi[0] - direct).abs() < 1e-10);
    assert!(chi.windows(2).all(|w| w[1] < w[0]));
    assert!(*chi.last().unwrap() < 1e-6);
}

#[test]
fn chi2_matches_matrix_exponential() {
    let m = random_ising(6, 4);
    let g = m.generator().unwrap();
    let s = eigendecompose(&g, 64).unwrap();
    let l = g.generator_dense().unwrap();
    let mut rng = seeded(5);
    let states: Vec<usize> = (0..20).map(|_| rng.random_range(0..64)).collect();
    let mu = FiniteDistribution::empirical(64, &states).unwrap();
    for t in [0.1, 0.7, 3.0] {
        let p = (&l * t).exp();
        let row = DVector::from_column_slice(mu.probs()).transpose() * p;
        let evolved = FiniteDistribution::from_weights(row.iter().map(|v| v.max(0.0)).collect())
            .unwrap();
        let reference = chi2_divergence(&evolved, s.stationary()).unwrap();
        let chi = chi2_trajectory(&s, &mu, &[t]).unwrap()[0];
        assert!((chi - reference).abs() < 1e-7);
        assert!(tv_distance(&evolve(&s, &mu, t).unwrap(), &evolved).unwrap() < 1e-9);
    }
}

#[test]
fn contraction_degenerate_cases() {
    let m = random_ising(5, 6);
    let s = eigendecompose(&m.generator().unwrap(), 32).unwrap();
    let pi = s.stationary().clone();
    let r = verify_balance_contraction(&s, &pi, 3, 0.0, 1.0).unwrap();
    assert!(r.lhs.abs() < 1e-20 && r.holds);
    let mu = FiniteDistribution::point_mass(32, 7).unwrap();
    let r1 = verify_balance_contraction(&s, &mu, 1, 0.0, 2.0).unwrap();
    let chi0 = chi2_trajectory(&s, &mu, &[0.0]).unwrap()[0];
    assert_eq!(r1.epsilon, 0.0);
    assert!((r1.bound - (-s.eigenvalues()[1] * 2.0).exp() * chi0).abs() < 1e-12);
    assert!(r1.holds);
    assert!(verify_balance_contraction(&s, &mu, 2, 1.0, 0.5).is_err());
}

#[test]
fn balance_is_invariant_under_rotation_within_eigenspace() {
    // The uniform cube on 4 spins has λ₂ = 1 with multiplicity 4.
    let s = uniform_spectrum(4);
    let mut rng = seeded(7);
    let g = DMatrix::from_fn(4, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let mut f = s.eigenfunctions().clone();
    let block = f.columns(1, 4) * &q;
    f.columns_mut(1, 4).copy_from(&block);
    let rotated = s.with_eigenfunctions(f).unwrap();
    let states: Vec<usize> = (0..9).map(|_| rng.random_range(0..16)).collect();
    let mu = FiniteDistribution::empirical(16, &states).unwrap();
    let a = balance_statistic(&s, &mu, 5).unwrap().value;
    let b = balance_statistic(&rotated, &mu, 5).unwrap().value;
    assert!((a - b).abs() < 1e-12);
    let ca = verify_balance_contraction(&s, &mu, 5, 0.0, 1.0).unwrap();
    let cb = verify_balance_contraction(&rotated, &mu, 5, 0.0, 1.0).unwrap();
    assert!((ca.bound - cb.bound).abs() < 1e-12);
}

#[test]
fn balanced_initialization_on_curie_weiss() {
    let m = curie_weiss(5, 1.5).unwrap();
    let s = eigendecompose(&m.generator().unwrap(), 32).unwrap();
    let init = minimal_balanced_initialization(&s, 2).unwrap();
    assert!(init.residual < 1e-8);
    assert!(init.support.len() <= 2);
    // Exhaustive oracle: a single state suffices iff f₂ vanishes somewhere.
    let f2 = s.eigenfunction(1);
    let single = f2.iter().any(|v| v.abs() < 1e-9);
    assert_eq!(init.support.len() == 1, single);
    assert!(init.minimal);
}

#[test]
fn balanced_initialization_mixes_fast() {
    let m = random_ising(6, 8);
    let s = eigendecompose(&m.generator().unwrap(), 64).unwrap();
    for k in [2usize, 3, 4] {
        let init = minimal_balanced_initialization(&s, k).unwrap();
        assert!(init.residual < 1e-8);
        assert!(init.support.len() <= k);
        let delta = 0.05;
        let t = (64.0f64 / delta).ln() / s.eigenvalues()[k];
        let tv = tv_distance(&evolve(&s, &init.distribution, t).unwrap(), s.stationary()).unwrap();
        assert!(tv <= delta, "k = {k}: TV {tv}");
    }
}

#[test]
fn balanced_initialization_full_rank() {
    let m = random_ising(3, 9);
    let s = eigendecompose(&m.generator().unwrap(), 8).unwrap();
    let init = minimal_balanced_initialization(&s, 8).unwrap();
    assert!(init.residual < 1e-8);
    assert!(init.support.len() <= 8);
}

#[test]
fn iterative_solver_matches_dense() {
    let m = random_ising(8, 10);
    let g = m.generator().unwrap();
    let dense = eigendecompose(&g, 256).unwrap();
    let iter = eigendecompose_iterative(&g, 6).unwrap();
    for i in 0..6 {
        assert!((dense.eigenvalues()[i] - iter.eigenvalues()[i]).abs() < 1e-8);
    }
    assert!(chi2_trajectory(&iter, g.stationary(), &[1.0]).is_err());
}

#[test]
fn spectrum_export_round_trip() {
    let s = uniform_spectrum(2);
    let mut buf = Vec::new();
    s.write_text(&mut buf).unwrap();
    assert!(String::from_utf8(buf.clone()).unwrap().starts_with("spectrum v1 4 4\n"));
    let (values, vectors) = read_spectrum_text(buf.as_slice()).unwrap();
    assert_eq!(values.len(), 4);
    assert!((&vectors - s.eigenfunctions()).amax() < 1e-15);
}

#[test]
fn zero_mass_and_capacity_errors() {
    let space = ProductSpace::binary(2).unwrap();
    let pi = FiniteDistribution::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
    assert!(build_glauber_generator(&space, &pi).is_err());
    let s = uniform_spectrum(2);
    assert!(higher_order_gap(&s, 0).is_err());
    assert!(higher_order_gap(&s, 4).is_err());
}
