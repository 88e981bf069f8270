//! Built-in named experiments.
//!
//! Each entry expands into one task per (sweep point, seed). A task returns
//! metrics for its point; an optional summary pass derives cross-point rows
//! such as ratios and slopes once every task has finished.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use multimix::hs::{
    build_field_net, certify_sandwich, exact_mixture_refinement, mixture_density, split_coupling,
    split_spectrum, NetOptions, QuadraticSpinSystem,
};
use multimix::ising::{curie_weiss, low_rank_ising, mean_field_potts, sample_exact, IsingModel};
use multimix::langevin::{
    lmc_run, perturb_score, submixture_score_error, symmetric_gaussian_mixture_1d, Component,
    GaussianComponent, LmcConfig, MixtureModel, NoiseSpec, ScoreField,
};
use multimix::measures::{FiniteDistribution, ProductSpace, SampleSet};
use multimix::ple::{learn_and_sample, PleConfig};
use multimix::rng::derive_seed;
use multimix::spectral::{balance_statistic, build_glauber_generator, eigendecompose, Spectrum};
use multimix::{empirical_tv_continuous, Error, Result};

use crate::record::ResultRow;

pub type RunFn = fn(&Setup, &Point) -> Result<Vec<Metric>>;
pub type SummaryFn = fn(&Setup, &[ResultRow]) -> Result<Vec<ResultRow>>;

pub struct Entry {
    pub name: &'static str,
    pub summary: &'static str,
    /// Sweep axes with default grids.
    pub sweep: &'static [(&'static str, &'static [f64])],
    /// Scalar parameters with defaults.
    pub params: &'static [(&'static str, f64)],
    /// Whether an `ising v1` model file may replace the built-in fixture.
    pub uses_model: bool,
    pub run: RunFn,
    pub summarize: Option<SummaryFn>,
}

/// Per-experiment state shared by its tasks.
pub struct Setup {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub model: Option<IsingModel>,
    spectrum: OnceLock<Spectrum>,
}

impl Setup {
    pub fn new(entry: &Entry, overrides: &BTreeMap<String, f64>, model: Option<IsingModel>) -> Self {
        let mut params: BTreeMap<String, f64> =
            entry.params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        params.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
        Setup { name: entry.name.to_string(), params, model, spectrum: OnceLock::new() }
    }

    fn get(&self, key: &str) -> f64 {
        self.params[key]
    }

    fn count(&self, key: &str) -> Result<usize> {
        as_count(key, self.get(key))
    }

    /// Slow eigenpairs of the fixture model, computed once.
    fn spectrum(&self, model: &IsingModel, k: usize) -> Result<&Spectrum> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let s = eigendecompose(&model.generator()?, k)?;
        Ok(self.spectrum.get_or_init(|| s))
    }

    fn summary_row(&self, parameters: BTreeMap<String, f64>, seed: Option<u64>, metric: &str, value: f64) -> ResultRow {
        ResultRow {
            experiment: self.name.clone(),
            parameters,
            seed,
            metric: metric.into(),
            value,
            stderr: None,
            runtime: 0.0,
        }
    }
}

/// One task: sweep values and a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub values: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Point {
    fn get(&self, key: &str) -> f64 {
        self.values[key]
    }

    fn count(&self, key: &str) -> Result<usize> {
        as_count(key, self.get(key))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub name: &'static str,
    pub value: f64,
    pub stderr: Option<f64>,
}

fn metric(name: &'static str, value: f64) -> Metric {
    Metric { name, value, stderr: None }
}

fn metric_se(name: &'static str, value: f64, stderr: f64) -> Metric {
    Metric { name, value, stderr: Some(stderr) }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn as_count(key: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(Error::Parameter(format!("{key} = {v} must be a nonnegative integer")))
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Parameters other than the axis, bit-exact, plus the seed.
type GroupKey = (Vec<(String, u64)>, Option<u64>);

/// Rows of one metric grouped by their parameters minus `axis`, each group
/// sorted along `axis`.
fn groups_along<'a>(
    rows: &'a [ResultRow],
    metric: &str,
    axis: &str,
) -> BTreeMap<GroupKey, Vec<&'a ResultRow>> {
    let mut out: BTreeMap<_, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        let key: Vec<(String, u64)> = r
            .parameters
            .iter()
            .filter(|(k, _)| k.as_str() != axis)
            .map(|(k, v)| (k.clone(), v.to_bits()))
            .collect();
        out.entry((key, r.seed)).or_default().push(r);
    }
    for g in out.values_mut() {
        g.sort_by(|a, b| a.parameters[axis].total_cmp(&b.parameters[axis]));
    }
    out
}

fn base_params(r: &ResultRow, axis: &str) -> BTreeMap<String, f64> {
    r.parameters.iter().filter(|(k, _)| k.as_str() != axis).map(|(k, v)| (k.clone(), *v)).collect()
}

fn positive_fraction(points: &[Vec<f64>]) -> f64 {
    points.iter().filter(|p| p[0] > 0.0).count() as f64 / points.len() as f64
}

fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn fixture_model(setup: &Setup, n: usize) -> Result<IsingModel> {
    match &setup.model {
        Some(m) => Ok(m.clone()),
        None => low_rank_ising(
            n,
            1,
            &[setup.get("lambda1")],
            setup.get("bulk"),
            setup.count("fixture")? as u64,
        ),
    }
}

// ---------------------------------------------------------------- balance

fn balance_concentration(setup: &Setup, p: &Point) -> Result<Vec<Metric>> {
    let model = fixture_model(setup, setup.count("n")?)?;
    let k = setup.count("k")?;
    let s = setup.spectrum(&model, k)?;
    let m = p.count("m")?;
    let redraws = setup.count("redraws")?;
    if redraws == 0 {
        return Err(Error::Parameter("need at least one redraw".into()));
    }
    let values: Vec<f64> = (0..redraws)
        .map(|r| {
            let samples = sample_exact(&model, m, derive_seed(p.seed, r as u64))?;
            Ok(balance_statistic(s, &samples.empirical()?, k)?.value)
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_se(&values);
    Ok(vec![metric("median_balance", median(values)), metric_se("mean_balance", mean, se)])
}

fn balance_slope(setup: &Setup, rows: &[ResultRow]) -> Result<Vec<ResultRow>> {
    let mut out = Vec::new();
    for ((_, seed), g) in groups_along(rows, "median_balance", "m") {
        if g.len() < 2 {
            continue;
        }
        let x: Vec<f64> = g.iter().map(|r| r.parameters["m"].ln()).collect();
        let y: Vec<f64> = g.iter().map(|r| r.value.ln()).collect();
        out.push(setup.summary_row(base_params(g[0], "m"), seed, "loglog_slope", least_squares_slope(&x, &y)));
    }
    Ok(out)
}

// ---------------------------------------------------------- Curie–Weiss

fn curie_weiss_gaps(_: &Setup, p: &Point) -> Result<Vec<Metric>> {
    let n = p.count("n")?;
    let m = curie_weiss(n, p.get("beta"))?;
    let s = eigendecompose(&m.generator()?, 3)?;
    let (l2, l3) = (s.eigenvalues()[1], s.eigenvalues()[2]);
    Ok(vec![
        metric("lambda2", l2),
        metric("lambda3", l3),
        metric("n3_lambda3", (n as f64).powi(3) * l3),
        metric("lambda2_per_update", l2 / n as f64),
        metric("lambda3_per_update", l3 / n as f64),
    ])
}

fn gap_scaling_summary(setup: &Setup, rows: &[ResultRow]) -> Result<Vec<ResultRow>> {
    let mut out = Vec::new();
    for ((_, seed), g) in groups_along(rows, "lambda2", "n") {
        for w in g.windows(2) {
            let (n0, n1) = (w[0].parameters["n"], w[1].parameters["n"]);
            let mut params = w[1].parameters.clone();
            params.insert("n_prev".into(), n0);
            let ratio = w[1].value / w[0].value;
            out.push(setup.summary_row(params.clone(), seed, "lambda2_ratio", ratio));
            // same ratio for the per-update kernel −𝓛/n
            out.push(setup.summary_row(params, seed, "lambda2_ratio_per_update", ratio * n0 / n1));
        }
    }
    for ((_, seed), g) in groups_along(rows, "n3_lambda3", "n") {
        let mut floor = f64::INFINITY;
        for (i, r) in g.iter().enumerate() {
            if i > 0 {
                out.push(setup.summary_row(r.parameters.clone(), seed, "n3_lambda3_vs_running_min", r.value / floor));
            }
            floor = floor.min(r.value);
        }
    }
    Ok(out)
}

// ------------------------------------------------------------- Langevin

fn metastability(setup: &Setup, p: &Point) -> Result<Vec<Metric>> {
    let sep = p.get("separation");
    let m = symmetric_gaussian_mixture_1d(&[-sep, sep])?;
    let chains = setup.count("chains")?;
    let cfg = LmcConfig { step: p.get("h"), horizon: p.get("T"), seed: derive_seed(p.seed, 2), chains };
    let score = ScoreField::exact(&m);
    let data = m.sample_set(setup.count("data")?, derive_seed(p.seed, 1))?;
    let from_data = lmc_run(&data, &score, &cfg)?;
    let single = lmc_run(&SampleSet::new(vec![vec![sep]])?, &score, &cfg)?;
    let a = positive_fraction(&from_data.points);
    let b = positive_fraction(&single.points);
    Ok(vec![
        metric_se("data_init_weight", a, binomial_se(a, chains)),
        metric_se("single_mode_weight", b, binomial_se(b, chains)),
        metric("diverged_chains", (from_data.flagged_count() + single.flagged_count()) as f64),
    ])
}

fn score_robustness(setup: &Setup, p: &Point) -> Result<Vec<Metric>> {
    let sep = setup.get("separation");
    let m = symmetric_gaussian_mixture_1d(&[-sep, sep])?;
    let data = m.sample_set(setup.count("data")?, derive_seed(p.seed, 1))?;
    let reference = m.sample_set(setup.count("reference")?, derive_seed(p.seed, 2))?;
    // the chain seed ignores ε so the sweep shares random numbers
    let cfg = LmcConfig {
        step: setup.get("h"),
        horizon: p.get("T"),
        seed: derive_seed(p.seed, 3),
        chains: setup.count("chains")?,
    };
    let s = perturb_score(&m, p.get("eps"), NoiseSpec::default(), derive_seed(p.seed, 4))?;
    let out = lmc_run(&data, &s, &cfg)?;
    let tv = empirical_tv_continuous(&out.valid_samples()?, &reference, &[1.0], setup.count("bins")?)?;
    Ok(vec![metric("terminal_tv", tv), metric("diverged_chains", out.flagged_count() as f64)])
}

fn robustness_summary(setup: &Setup, rows: &[ResultRow]) -> Result<Vec<ResultRow>> {
    let mut out = Vec::new();
    for ((_, seed), g) in groups_along(rows, "terminal_tv", "eps") {
        let base = base_params(g[0], "eps");
        let monotone = g.windows(2).all(|w| w[1].value > w[0].value);
        out.push(setup.summary_row(base.clone(), seed, "monotone", flag(monotone)));
        let mut slopes = Vec::new();
        for w in g.windows(2) {
            let (e0, e1) = (w[0].parameters["eps"], w[1].parameters["eps"]);
            let slope = (w[1].value - w[0].value) / (e1 * e1 - e0 * e0);
            let mut params = w[1].parameters.clone();
            params.insert("eps_prev".into(), e0);
            out.push(setup.summary_row(params, seed, "tv_increment_per_eps2", slope));
            slopes.push(slope);
        }
        let concave = slopes.windows(2).all(|w| w[1] <= w[0]);
        out.push(setup.summary_row(base, seed, "concave_in_eps2", flag(concave)));
    }
    Ok(out)
}

fn min_weight_free(setup: &Setup, p: &Point) -> Result<Vec<Metric>> {
    let sep = setup.get("separation");
    let tiny = setup.get("tiny_weight");
    let weights = vec![(1.0 - tiny) / 2.0, (1.0 - tiny) / 2.0, tiny];
    let means = [-sep, sep, setup.get("tiny_mean")];
    let comps = means
        .iter()
        .map(|&c| GaussianComponent::isotropic(vec![c], 1.0).map(Component::Gaussian))
        .collect::<Result<Vec<_>>>()?;
    let m = MixtureModel::new(weights, comps)?;
    let threshold = setup.get("eps_m") / 3.0;
    let kept: Vec<usize> = (0..3).filter(|&i| m.weights()[i] >= threshold).collect();

    let data = m.sample_set(setup.count("data")?, derive_seed(p.seed, 1))?;
    let reference = m.sample_set(setup.count("reference")?, derive_seed(p.seed, 2))?;
    let cfg = LmcConfig {
        step: setup.get("h"),
        horizon: p.get("T"),
        seed: derive_seed(p.seed, 3),
        chains: setup.count("chains")?,
    };
    let bins = setup.count("bins")?;
    let full = lmc_run(&data, &ScoreField::exact(&m), &cfg)?.valid_samples()?;
    let dropped = lmc_run(&data, &ScoreField::of_submixture(&m, &kept)?, &cfg)?.valid_samples()?;
    Ok(vec![
        metric("kept_components", kept.len() as f64),
        metric("score_error_sq", submixture_score_error(&m, &kept, &reference)?),
        metric("tv_full", empirical_tv_continuous(&full, &reference, &[1.0], bins)?),
        metric("tv_dropped", empirical_tv_continuous(&dropped, &reference, &[1.0], bins)?),
        metric("tv_between", empirical_tv_continuous(&full, &dropped, &[1.0], bins)?),
    ])
}

// ------------------------------------------------------------------- HS

fn hs_sandwich(setup: &Setup, p: &Point) -> Result<Vec<Metric>> {
    let m = curie_weiss(p.count("n")?, p.get("beta"))?;
    let sys = QuadraticSpinSystem::from_ising(&m)?;
    let split = split_spectrum(&m, setup.get("c"))?;
    let opts = NetOptions { mesh_scale: setup.get("mesh_scale"), ..NetOptions::default() };
    let net = build_field_net(&sys, &split, sys.support_radius(), &opts)?;
    let dens = mixture_density(&net, &split, &sys)?;
    let pi = m.exact_distribution()?;
    let cert = certify_sandwich(&pi, &dens.pi2)?;
    let mut out = vec![
        metric("rank", split.r as f64),
        metric("net_size", net.len() as f64),
        metric("tail_ratio", net.tail_ratio),
        metric("min_ratio", cert.min_ratio),
        metric("max_ratio", cert.max_ratio),
        metric("certificate_pass", flag(cert.pass)),
    ];
    if cert.pass {
        let rebuilt = exact_mixture_refinement(&pi, &dens, &net)?.reconstruct(&dens, &net)?;
        let err = rebuilt.iter().zip(pi.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        out.push(metric("reconstruct_error", err));
    }
    Ok(out)
}

fn glauber_gap(space: &ProductSpace, pi: &FiniteDistribution) -> Result<f64> {
    Ok(eigendecompose(&build_glauber_generator(space, pi)?, 2)?.eigenvalues()[1])
}

fn potts_gap(setup: &Setup, p: &Point) -> Result<Vec<Metric>> {
    let potts = mean_field_potts(p.count("n")?, p.count("q")?, p.get("beta"))?;
    let space = potts.space()?;
    let s = eigendecompose(&potts.generator()?, 3)?;
    let sys = QuadraticSpinSystem::from_potts(&potts)?;
    let split = split_coupling(sys.coupling(), setup.get("c"))?;
    let net = build_field_net(&sys, &split, sys.support_radius(), &NetOptions::default())?;
    let dens = mixture_density(&net, &split, &sys)?;
    let pi = potts.exact_distribution()?;
    let cert = certify_sandwich(&pi, &dens.pi2)?;
    // components below this weight are skipped in the gap scan
    let floor = setup.get("component_floor");
    let heavy: Vec<usize> = (0..net.len()).filter(|&h| net.weights[h] >= floor).collect();
    let mut min_tilde = f64::INFINITY;
    for &h in &heavy {
        min_tilde = min_tilde.min(glauber_gap(&space, &dens.component(&net, h)?)?);
    }
    let mut out = vec![
        metric("lambda2", s.eigenvalues()[1]),
        metric("lambda3", s.eigenvalues()[2]),
        metric("rank", split.r as f64),
        metric("net_size", net.len() as f64),
        metric("min_ratio", cert.min_ratio),
        metric("max_ratio", cert.max_ratio),
        metric("certificate_pass", flag(cert.pass)),
        metric("min_component_gap", min_tilde),
    ];
    if cert.pass {
        let refine = exact_mixture_refinement(&pi, &dens, &net)?;
        let mut min_bar = f64::INFINITY;
        for &h in &heavy {
            min_bar = min_bar.min(glauber_gap(&space, &refine.component(&dens, &net, h)?)?);
        }
        out.push(metric("min_refined_gap", min_bar));
    }
    Ok(out)
}

// ------------------------------------------------------------- learning

fn learn_ising(setup: &Setup, p: &Point) -> Result<Vec<Metric>> {
    let truth = fixture_model(setup, setup.count("n")?)?;
    let row = truth.row_l1_norms().into_iter().fold(0.0, f64::max);
    let horizon = setup.get("horizon_scale") * row.max(1.0);
    let cfg = PleConfig { seed: p.seed, ..PleConfig::new(setup.get("radius_scale") * row.max(1e-3)) };
    let r = learn_and_sample(&truth, p.count("m_fit")?, p.count("m_init")?, &cfg, horizon)?;
    let mut out = vec![
        metric("eps_hat", r.eps_hat),
        metric("tv", r.tv),
        metric("tv_exact", flag(r.exact)),
        metric("horizon", horizon),
        metric("objective", r.objective),
        metric("iterations", r.iterations as f64),
        metric("converged", flag(r.converged)),
    ];
    for (name, v) in [("lambda2", r.lambda2), ("lambda3", r.lambda3), ("balance_k2", r.balance_k2)] {
        if let Some(v) = v {
            out.push(metric(name, v));
        }
    }
    Ok(out)
}

pub static CATALOG: &[Entry] = &[
    Entry {
        name: "balance-concentration",
        summary: "median eigenfunction balance of data-based inits versus sample size",
        sweep: &[("m", &[50.0, 200.0, 800.0, 3200.0])],
        params: &[("n", 8.0), ("k", 4.0), ("redraws", 200.0), ("lambda1", 1.5), ("bulk", 0.3), ("fixture", 11.0)],
        uses_model: true,
        run: balance_concentration,
        summarize: Some(balance_slope),
    },
    Entry {
        name: "curie-weiss-gaps",
        summary: "λ₂, λ₃ and n³λ₃ of Curie–Weiss Glauber dynamics",
        sweep: &[("n", &[5.0, 7.0, 9.0]), ("beta", &[1.5])],
        params: &[],
        uses_model: false,
        run: curie_weiss_gaps,
        summarize: None,
    },
    Entry {
        name: "cw-gap-scaling",
        summary: "decay of λ₂ in n against the floor on n³λ₃",
        sweep: &[("n", &[5.0, 7.0, 9.0, 11.0]), ("beta", &[1.5])],
        params: &[],
        uses_model: false,
        run: curie_weiss_gaps,
        summarize: Some(gap_scaling_summary),
    },
    Entry {
        name: "langevin-metastability",
        summary: "component weight after LMC from data versus from a single mode",
        sweep: &[("separation", &[5.0]), ("h", &[1e-3]), ("T", &[10.0])],
        params: &[("chains", 10_000.0), ("data", 500.0)],
        uses_model: false,
        run: metastability,
        summarize: None,
    },
    Entry {
        name: "score-robustness",
        summary: "terminal TV of data-initialized LMC versus score error",
        sweep: &[("eps", &[0.0, 0.2, 0.5, 1.0]), ("T", &[10.0])],
        params: &[
            ("separation", 5.0),
            ("h", 1e-2),
            ("chains", 10_000.0),
            ("data", 500.0),
            ("reference", 100_000.0),
            ("bins", 50.0),
        ],
        uses_model: false,
        run: score_robustness,
        summarize: Some(robustness_summary),
    },
    Entry {
        name: "hs-sandwich",
        summary: "Hubbard–Stratonovich mixture certificate and exact refinement",
        sweep: &[("n", &[5.0, 7.0, 9.0]), ("beta", &[1.5])],
        params: &[("c", 2.0), ("mesh_scale", 1.0)],
        uses_model: false,
        run: hs_sandwich,
        summarize: None,
    },
    Entry {
        name: "learn-ising-e2e",
        summary: "fit by pseudolikelihood, then sample the fitted chain from data",
        sweep: &[("m_fit", &[20_000.0]), ("m_init", &[2_000.0])],
        params: &[
            ("n", 8.0),
            ("lambda1", 1.5),
            ("bulk", 0.0),
            ("fixture", 10.0),
            ("radius_scale", 1.25),
            ("horizon_scale", 8.0),
        ],
        uses_model: true,
        run: learn_ising,
        summarize: None,
    },
    Entry {
        name: "potts-gap",
        summary: "mean-field Potts spectrum and mixture-component gaps",
        sweep: &[("n", &[4.0, 5.0]), ("q", &[3.0]), ("beta", &[2.0])],
        params: &[("c", 2.0), ("component_floor", 1e-6)],
        uses_model: false,
        run: potts_gap,
        summarize: None,
    },
    Entry {
        name: "min-weight-free",
        summary: "LMC with and without a weight-1e-4 component in the score",
        sweep: &[("T", &[5.0])],
        params: &[
            ("separation", 3.0),
            ("tiny_mean", 10.0),
            ("tiny_weight", 1e-4),
            ("eps_m", 0.01),
            ("h", 1e-2),
            ("chains", 10_000.0),
            ("data", 500.0),
            ("reference", 100_000.0),
            ("bins", 50.0),
        ],
        uses_model: false,
        run: min_weight_free,
        summarize: None,
    },
];

pub fn lookup(name: &str) -> Option<&'static Entry> {
    CATALOG.iter().find(|e| e.name == name)
}

/// Cartesian product of the sweep grids (config values over defaults),
/// in axis order then grid order, crossed with the seeds.
pub fn expand(entry: &Entry, sweep: &BTreeMap<String, Vec<f64>>, seeds: &[u64]) -> Vec<Point> {
    let axes: Vec<(&str, Vec<f64>)> = entry
        .sweep
        .iter()
        .map(|(k, default)| (*k, sweep.get(*k).cloned().unwrap_or_else(|| default.to_vec())))
        .collect();
    let mut points = vec![BTreeMap::new()];
    for (k, grid) in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                grid.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(k.to_string(), *v);
                    q
                })
            })
            .collect();
    }
    points
        .into_iter()
        .flat_map(|values| seeds.iter().map(move |&seed| Point { values: values.clone(), seed }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_defaults_nonempty() {
        for (i, e) in CATALOG.iter().enumerate() {
            assert!(CATALOG[i + 1..].iter().all(|o| o.name != e.name));
            assert!(e.sweep.iter().all(|(_, g)| !g.is_empty()));
        }
        assert!(lookup("potts-gap").is_some());
        assert!(lookup("nope").is_none());
    }

    #[test]
    fn expansion_order() {
        let e = lookup("curie-weiss-gaps").unwrap();
        let sweep = [("n".to_string(), vec![5.0, 7.0])].into_iter().collect();
        let pts = expand(e, &sweep, &[1, 2]);
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[0].get("n"), pts[0].seed), (5.0, 1));
        assert_eq!((pts[1].get("n"), pts[1].seed), (5.0, 2));
        assert_eq!((pts[3].get("n"), pts[3].get("beta")), (7.0, 1.5));
    }

    #[test]
    fn counts_must_be_integers() {
        assert_eq!(as_count("m", 50.0).unwrap(), 50);
        assert!(as_count("m", 2.5).is_err());
        assert!(as_count("m", -1.0).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.powf(-0.5).ln()).collect();
        assert!((least_squares_slope(&x, &y) + 0.5).abs() < 1e-12);
    }
}
