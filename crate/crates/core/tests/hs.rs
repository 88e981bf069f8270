use multimix::hs::{
    build_field_net, certify_sandwich, exact_mixture_refinement, mixture_density, split_coupling,
    split_spectrum, NetOptions, QuadraticSpinSystem,
};
use multimix::ising::{curie_weiss, low_rank_ising, mean_field_potts, IsingModel};
use multimix::measures::{FiniteDistribution, ProductSpace};
use multimix::spectral::{build_glauber_generator, eigendecompose};
use multimix::Error;
use nalgebra::{DMatrix, DVector};

fn cw_pipeline(n: usize, beta: f64, mesh_scale: f64, tail_target: f64) -> (f64, f64) {
    let m = curie_weiss(n, beta).unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    let opts = NetOptions { mesh_scale, tail_target, max_doublings: 20, ..NetOptions::default() };
    let net = build_field_net(&sys, &split, 1.0, &opts).unwrap();
    let dens = mixture_density(&net, &split, &sys).unwrap();
    let cert = certify_sandwich(&m.exact_distribution().unwrap(), &dens.pi2).unwrap();
    (cert.min_ratio, cert.max_ratio)
}

fn gap(space: &ProductSpace, pi: &FiniteDistribution) -> f64 {
    let s = eigendecompose(&build_glauber_generator(space, pi).unwrap(), 2).unwrap();
    s.eigenvalues()[1]
}

#[test]
fn split_of_curie_weiss_has_rank_one() {
    let beta = 1.5;
    let m = curie_weiss(9, beta).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    assert_eq!(split.r, 1);
    assert!((split.top_values[0] - beta * 8.0 / 9.0).abs() < 1e-12);
    // top eigenvector is the flat direction
    let v = split.top_vectors.column(0);
    assert!(v.iter().all(|x| (x.abs() - 1.0 / 3.0).abs() < 1e-12));
    assert!((&split.j_plus + &split.j_tilde - m.coupling()).amax() < 1e-14);
    // the remaining eigenvalues are all −β/n
    assert!((split.trace_minus - 8.0 * beta / 9.0).abs() < 1e-12);
}

#[test]
fn split_of_low_rank_model_recovers_planted_spectrum() {
    let m = low_rank_ising(8, 2, &[1.4, 1.2], 0.3, 4).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    assert_eq!(split.r, 2);
    assert!((split.top_values[0] - 1.4).abs() < 1e-10);
    assert!((split.top_values[1] - 1.2).abs() < 1e-10);
    let tilde_max = split.j_tilde.clone().symmetric_eigen().eigenvalues.max();
    assert!(tilde_max <= split.threshold + 1e-12);
    let gram = split.top_vectors.transpose() * &split.top_vectors;
    assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
}

#[test]
fn zero_coupling_split_is_empty() {
    let split = split_coupling(&DMatrix::zeros(4, 4), 3.0).unwrap();
    assert_eq!(split.r, 0);
    assert_eq!(split.trace_minus, 0.0);
}

#[test]
fn net_is_symmetric_for_curie_weiss() {
    let m = curie_weiss(7, 1.5).unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    let net = build_field_net(&sys, &split, 1.0, &NetOptions::default()).unwrap();
    assert_eq!(net.len() % 2, 1);
    assert!((net.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(net.tail_ratio < NetOptions::default().tail_target);
    assert!((net.delta - 1.0 / (2.0 * 7f64.sqrt())).abs() < 1e-15);
    let count = net.len();
    for h in 0..count {
        let mirror = count - 1 - h;
        assert!((net.coords[h][0] + net.coords[mirror][0]).abs() < 1e-12);
        assert!((net.weights[h] - net.weights[mirror]).abs() < 1e-12 * net.weights[h].max(1e-300));
    }
}

#[test]
fn mixture_is_flip_symmetric_with_normalized_components() {
    let n = 7;
    let m = curie_weiss(n, 1.5).unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    let net = build_field_net(&sys, &split, 1.0, &NetOptions::default()).unwrap();
    let dens = mixture_density(&net, &split, &sys).unwrap();
    let full = (1usize << n) - 1;
    for x in 0..=full {
        let (a, b) = (dens.pi2.prob(x), dens.pi2.prob(full ^ x));
        assert!((a - b).abs() < 1e-12 * a);
    }
    for h in [0, net.len() / 3, net.len() / 2] {
        let direct = dens.component(&net, h).unwrap();
        let model = dens.component_model(&net, h).unwrap().exact_distribution().unwrap();
        for (p, q) in direct.probs().iter().zip(model.probs()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn refinement_reconstructs_target_and_inherits_gaps() {
    let n = 7;
    let m = curie_weiss(n, 1.5).unwrap();
    let space = m.space().unwrap();
    let pi = m.exact_distribution().unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    let net = build_field_net(&sys, &split, 1.0, &NetOptions::default()).unwrap();
    let dens = mixture_density(&net, &split, &sys).unwrap();
    let refine = exact_mixture_refinement(&pi, &dens, &net).unwrap();
    assert!((refine.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let rebuilt = refine.reconstruct(&dens, &net).unwrap();
    for (a, b) in rebuilt.iter().zip(pi.probs()) {
        assert!((a - b).abs() < 1e-10);
    }

    let mut min_refined = f64::INFINITY;
    for h in 0..net.len() {
        let tilde = gap(&space, &dens.component(&net, h).unwrap());
        let bar = gap(&space, &refine.component(&dens, &net, h).unwrap());
        assert!(bar >= (-6f64).exp() * tilde - 1e-12, "h = {h}: {bar} vs {tilde}");
        min_refined = min_refined.min(bar);
    }
    let s = net.len();
    let full = eigendecompose(&build_glauber_generator(&space, &pi).unwrap(), s + 1).unwrap();
    assert!(full.eigenvalues()[s] >= min_refined - 1e-8);
}

#[test]
fn finer_mesh_tightens_the_sandwich() {
    // with the tail negligible the mesh error dominates
    let widths: Vec<f64> = [4.0, 2.0, 1.0, 0.5]
        .iter()
        .map(|&scale| {
            let (lo, hi) = cw_pipeline(7, 1.5, scale, 1e-8);
            hi.ln().max(-lo.ln())
        })
        .collect();
    for w in widths.windows(2) {
        assert!(w[1] < w[0], "{widths:?}");
    }
    assert!(widths[0] < 3.0 && widths[3] < 1e-3);
}

#[test]
fn potts_sandwich_passes() {
    for n in [4usize, 5, 6, 7] {
        let p = mean_field_potts(n, 3, 2.0).unwrap();
        let sys = QuadraticSpinSystem::from_potts(&p).unwrap();
        let split = split_coupling(sys.coupling(), 2.0).unwrap();
        assert_eq!(split.r, 2);
        let net = build_field_net(&sys, &split, sys.support_radius(), &NetOptions::default()).unwrap();
        let dens = mixture_density(&net, &split, &sys).unwrap();
        let pi = p.exact_distribution().unwrap();
        let cert = certify_sandwich(&pi, &dens.pi2).unwrap();
        assert!(cert.pass, "n = {n}: [{}, {}]", cert.min_ratio, cert.max_ratio);
        assert!(dens.component_model(&net, 0).is_err());
    }
}

#[test]
fn rank_above_three_is_a_capacity_error() {
    let m = low_rank_ising(8, 4, &[1.5, 1.4, 1.3, 1.2], 0.2, 1).unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    assert_eq!(split.r, 4);
    let err = build_field_net(&sys, &split, 1.0, &NetOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Capacity(_)));
}

#[test]
fn field_cap_is_enforced() {
    let m = curie_weiss(7, 1.5).unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    let opts = NetOptions { max_fields: 5, ..NetOptions::default() };
    assert!(matches!(build_field_net(&sys, &split, 1.0, &opts), Err(Error::Capacity(_))));
}

#[test]
fn failed_sandwich_blocks_refinement() {
    // a single field cannot represent a strongly coupled model
    let m = curie_weiss(7, 3.0).unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    let opts = NetOptions { mesh_scale: 1e3, ..NetOptions::default() };
    let net = build_field_net(&sys, &split, 1.0, &opts).unwrap();
    assert_eq!(net.len(), 1);
    let dens = mixture_density(&net, &split, &sys).unwrap();
    let pi = m.exact_distribution().unwrap();
    let cert = certify_sandwich(&pi, &dens.pi2).unwrap();
    assert!(!cert.pass);
    assert!(matches!(exact_mixture_refinement(&pi, &dens, &net), Err(Error::Domain(_))));
}

#[test]
fn fieldnet_export_lists_every_point() {
    let m = low_rank_ising(6, 2, &[1.3, 1.1], 0.2, 7).unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let split = split_spectrum(&m, 2.0).unwrap();
    let net = build_field_net(&sys, &split, 1.0, &NetOptions::default()).unwrap();
    let mut buf = Vec::new();
    net.write_text(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("fieldnet v1 2 {}", net.len()));
    let mut total = 0.0;
    for (line, s) in lines.zip(&net.coords) {
        let vals: Vec<f64> = line.split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 3);
        assert_eq!(&vals[..2], &s[..]);
        total += vals[2];
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn quadratic_system_matches_ising_density() {
    let j = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, -0.2, 0.4, 0.0, 0.3, -0.2, 0.3, 0.0]);
    let m = IsingModel::new(j, DVector::from_vec(vec![0.1, -0.3, 0.2])).unwrap();
    let sys = QuadraticSpinSystem::from_ising(&m).unwrap();
    let a = sys.exact_distribution().unwrap();
    let b = m.exact_distribution().unwrap();
    for (x, y) in a.probs().iter().zip(b.probs()) {
        assert!((x - y).abs() < 1e-14);
    }
    let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    assert!(QuadraticSpinSystem::new(
        ProductSpace::binary(2).unwrap(),
        vec![vec![-1.0], vec![1.0]],
        asym,
        DVector::zeros(2)
    )
    .is_err());
}
