use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multimix::hs::{build_field_net, certify_sandwich, mixture_density, split_spectrum, NetOptions, QuadraticSpinSystem};
use multimix::ising::{glauber_run_continuous, IsingModel};
use multimix::langevin::{lmc_run, LmcConfig, MixtureModel, ScoreField};
use multimix::ple::{certify_terminal_tv, fit, PleConfig};
use multimix::rng::derive_seed;
use multimix::spectral::eigendecompose;
use multimix::{Error, SampleSet};
use multimix_bench::runner::{run_config, RunOptions};
use multimix_bench::{BenchError, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "multimix", version, about = "Spectral diagnostics and data-initialized samplers")]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "MULTIMIX_THREADS")]
    threads: Option<usize>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Slowest eigenpairs of the Glauber generator of an Ising model.
    Spectrum {
        #[arg(long)]
        model: PathBuf,
        /// Number of eigenpairs; all of them when omitted.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Draw terminal states of a sampler.
    #[command(subcommand)]
    Sample(SampleCommand),
    /// Pseudolikelihood fitting and certification.
    #[command(subcommand)]
    Learn(LearnCommand),
    /// Hubbard–Stratonovich field net and sandwich certificate.
    Decompose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        mesh_scale: f64,
    },
    /// Config-driven experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand)]
enum SampleCommand {
    /// Continuous-time Glauber dynamics.
    Glauber {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: f64,
        #[arg(long)]
        count: usize,
        /// Spin configurations; chain `c` starts from line `c mod len`.
        /// All spins up when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Langevin Monte Carlo on a Gaussian mixture.
    Lmc(LmcArgs),
}

#[derive(Args)]
struct LmcArgs {
    /// Mixture in JSON.
    #[arg(long)]
    mixture: PathBuf,
    #[arg(long)]
    step: f64,
    #[arg(long)]
    horizon: f64,
    #[arg(long)]
    chains: usize,
    /// Whitespace-separated starting points, one per line.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    init: Option<PathBuf>,
    /// Start from this many fresh draws of the mixture.
    #[arg(long)]
    data: Option<usize>,
}

#[derive(Subcommand)]
enum LearnCommand {
    /// Fit an Ising model to spin samples.
    Fit {
        #[arg(long)]
        samples: PathBuf,
        /// Row-ℓ₁ budget.
        #[arg(long)]
        radius: f64,
    },
    /// Exact TV between the fitted chain started from data and the truth.
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        horizon: f64,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    Run {
        config: PathBuf,
        /// Append per-task runtimes to the CSV.
        #[arg(long)]
        timings: bool,
    },
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| BenchError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn read_model(path: &Path) -> Result<IsingModel> {
    Ok(IsingModel::read_text(open(path)?)?)
}

fn read_points(path: &Path) -> Result<SampleSet<Vec<f64>>> {
    let mut points = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(Error::from)?;
        if line.trim().is_empty() {
            continue;
        }
        let p = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("{} line {}: {e}", path.display(), i + 1)))?;
        points.push(p);
    }
    Ok(SampleSet::new(points)?)
}

/// Write through `f` to `--out` or stdout.
fn emit(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> multimix::Result<()>) -> Result<()> {
    match out {
        Some(p) => {
            let file = fs::File::create(p).map_err(|e| BenchError::Io { path: p.display().to_string(), source: e })?;
            let mut w = io::BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| BenchError::Io { path: p.display().to_string(), source: e })
        }
        None => {
            let mut w = io::stdout().lock();
            f(&mut w)?;
            Ok(())
        }
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn execute(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Spectrum { model, k } => {
            let g = read_model(&model)?.generator()?;
            let s = eigendecompose(&g, k.unwrap_or(g.size()))?;
            emit(out, |w| s.write_text(w))
        }
        Command::Sample(SampleCommand::Glauber { model, horizon, count, init }) => {
            let m = read_model(&model)?;
            let starts = match init {
                Some(p) => SampleSet::<Vec<i8>>::read_text(open(&p)?)?.into_points(),
                None => vec![vec![1; m.n()]],
            };
            let terminal = (0..count)
                .map(|c| {
                    let x0 = &starts[c % starts.len()];
                    let path = glauber_run_continuous(&m, x0, horizon, derive_seed(seed, c as u64))?;
                    Ok(path.states.last().cloned().unwrap_or_else(|| x0.clone()))
                })
                .collect::<multimix::Result<Vec<_>>>()?;
            let set = SampleSet::new(terminal)?;
            emit(out, |w| set.write_text(w))
        }
        Command::Sample(SampleCommand::Lmc(a)) => {
            let text = fs::read_to_string(&a.mixture)
                .map_err(|e| BenchError::Io { path: a.mixture.display().to_string(), source: e })?;
            let m = MixtureModel::from_json(&text)?;
            let init = match (a.init, a.data) {
                (Some(p), _) => read_points(&p)?,
                (None, Some(n)) => m.sample_set(n, derive_seed(seed, 1))?,
                (None, None) => unreachable!("clap requires one of --init and --data"),
            };
            let cfg = LmcConfig { step: a.step, horizon: a.horizon, seed: derive_seed(seed, 2), chains: a.chains };
            let result = lmc_run(&init, &ScoreField::exact(&m), &cfg)?;
            emit(out, |w| result.write_csv(w))
        }
        Command::Learn(LearnCommand::Fit { samples, radius }) => {
            let data = SampleSet::<Vec<i8>>::read_text(open(&samples)?)?;
            let report = fit(&data, &PleConfig { seed, ..PleConfig::new(radius) })?;
            if let Some(p) = out {
                emit(Some(p), |w| report.model.write_text(w))?;
            }
            print_json(&json!({
                "n": report.model.n(),
                "samples": data.len(),
                "objective": report.objective,
                "iterations": report.iterations,
                "converged": report.converged,
                "model": out.map(|p| p.display().to_string()),
            }));
            Ok(())
        }
        Command::Learn(LearnCommand::Certify { model, truth, init, horizon }) => {
            let fitted = read_model(&model)?;
            let truth = read_model(&truth)?;
            let mu0 = SampleSet::<Vec<i8>>::read_text(open(&init)?)?.empirical()?;
            let tv = certify_terminal_tv(&fitted, &truth.exact_distribution()?, &mu0, horizon)?;
            print_json(&json!({ "n": fitted.n(), "horizon": horizon, "tv": tv }));
            Ok(())
        }
        Command::Decompose { model, c, mesh_scale } => {
            let m = read_model(&model)?;
            let sys = QuadraticSpinSystem::from_ising(&m)?;
            let split = split_spectrum(&m, c)?;
            let opts = NetOptions { mesh_scale, ..NetOptions::default() };
            let net = build_field_net(&sys, &split, sys.support_radius(), &opts)?;
            let dens = mixture_density(&net, &split, &sys)?;
            let cert = certify_sandwich(&m.exact_distribution()?, &dens.pi2)?;
            if let Some(p) = out {
                emit(Some(p), |w| net.write_text(w))?;
            }
            print_json(&json!({
                "rank": split.r,
                "threshold": split.threshold,
                "top_values": split.top_values,
                "net_size": net.len(),
                "delta": net.delta,
                "radius": net.radius,
                "tail_ratio": net.tail_ratio,
                "min_ratio": cert.min_ratio,
                "max_ratio": cert.max_ratio,
                "pass": cert.pass,
            }));
            Ok(())
        }
        Command::Experiment(ExperimentCommand::Run { config, timings }) => {
            let opts = RunOptions { out: cli.out.clone(), seed: cli.seed, timings };
            let report = run_config(&config, &opts)?;
            print_json(&serde_json::to_value(report.summary()).expect("summary serializes"));
            match report.failed() {
                0 => Ok(()),
                n => Err(BenchError::Acceptance(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("multimix: thread pool: {e}");
            return ExitCode::from(4);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("multimix: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
