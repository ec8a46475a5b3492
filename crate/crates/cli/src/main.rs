use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pfcell::experiment::{run_experiment, ExperimentSpec, Method};
use pfcell::scenario::{Iterations, ScenarioConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Low,
    High,
}

/// Backhaul sweeps of the joint association/power optimizer and its baselines.
///
/// Trial t uses scenario seed `seed + t`. Writes summary.csv, convergence.csv
/// (first trial only) and spec.json into the output directory.
#[derive(Debug, Parser)]
#[command(name = "pfcell", version)]
struct Args {
    /// TOML scenario file; built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Iteration budgets for the `proposed` method.
    #[arg(long, value_enum)]
    preset: Option<Preset>,

    /// Backhaul capacities in Mbit/s, strictly increasing.
    #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100")]
    sweep: Vec<f64>,

    #[arg(long, default_value_t = 1)]
    trials: usize,

    /// Any of: proposed, proposed_high, proposed_low, greedy, ga, brute.
    #[arg(long, value_delimiter = ',', default_value = "proposed_high,proposed_low,greedy")]
    methods: Vec<String>,

    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Base seed; defaults to the config's `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,

    /// Record wall time per run (makes summary.csv non-reproducible).
    #[arg(long)]
    timing: bool,

    /// Generation budget of the genetic baseline.
    #[arg(long)]
    ga_generations: Option<usize>,
}

fn build_spec(args: &Args) -> pfcell::Result<ExperimentSpec> {
    let mut base = match &args.config {
        Some(path) => ScenarioConfig::from_file(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(preset) = args.preset {
        let budgets = match preset {
            Preset::Low => Iterations::LOW,
            Preset::High => Iterations::HIGH,
        };
        base.iters = Iterations {
            outer_rounds: base.iters.outer_rounds,
            ..budgets
        };
    }
    let mut spec = ExperimentSpec::new(base);
    spec.sweep_mbps = args.sweep.clone();
    spec.trials = args.trials;
    spec.methods = args
        .methods
        .iter()
        .map(|m| m.trim().parse::<Method>())
        .collect::<pfcell::Result<_>>()?;
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    if let Some(g) = args.ga_generations {
        spec.ga.max_generations = g;
    }
    spec.timing = args.timing;
    spec.validate()?;
    Ok(spec)
}

fn run(args: &Args) -> pfcell::Result<usize> {
    let spec = build_spec(args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| pfcell::Error::Argument(format!("thread pool: {e}")))?;
    let out = pool.install(|| run_experiment(&spec, &args.out))?;
    Ok(out.summary.len())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(rows) => {
            eprintln!("wrote {rows} summary rows to {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
