//! Seeded Monte Carlo campaigns over backhaul capacity.
//!
//! Trial `t` uses scenario seed `base_seed + t`, so every method and every
//! sweep point of a trial sees the same channel realization. Rows are sorted
//! by `(method, backhaul_mbps, seed)` before they are written.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force, genetic_opt, greedy_max_rate, GaParams, BRUTE_FORCE_LIMIT};
use crate::error::{Error, Result};
use crate::power::restore_backhaul;
use crate::radio::{is_feasible, Assignment, PowerMatrix};
use crate::scenario::{generate_instance, Cluster, Iterations, PerSbs, ScenarioConfig};
use crate::solver::{solve_joint, SolveParams, Stage};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const SPEC_FILE: &str = "spec.json";

pub const DEFAULT_SWEEP_MBPS: [f64; 5] = [20.0, 40.0, 60.0, 80.0, 100.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exhaustive search at uniform power; tiny instances only.
    Brute,
    /// Genetic search at uniform power, blind to backhaul.
    Ga,
    /// Max-rate association at uniform power, scaled down to meet backhaul.
    Greedy,
    /// Joint solver with the budgets of the base config.
    Proposed,
    ProposedHigh,
    ProposedLow,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Brute,
        Method::Ga,
        Method::Greedy,
        Method::Proposed,
        Method::ProposedHigh,
        Method::ProposedLow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Brute => "brute",
            Method::Ga => "ga",
            Method::Greedy => "greedy",
            Method::Proposed => "proposed",
            Method::ProposedHigh => "proposed_high",
            Method::ProposedLow => "proposed_low",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub base: ScenarioConfig,
    /// Uniform backhaul capacity per point, Mbit/s, strictly increasing.
    pub sweep_mbps: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub ga: GaParams,
    /// Measure wall time; otherwise `wall_ms` is written as 0 so files are reproducible.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(base: ScenarioConfig) -> Self {
        ExperimentSpec {
            base_seed: base.rng_seed,
            base,
            sweep_mbps: DEFAULT_SWEEP_MBPS.to_vec(),
            trials: 1,
            methods: vec![Method::ProposedHigh, Method::ProposedLow, Method::Greedy],
            ga: GaParams::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.sweep_mbps.is_empty() {
            return Err(Error::Config("backhaul sweep is empty".into()));
        }
        if self.sweep_mbps.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(Error::Config("backhaul sweep values must be finite and > 0".into()));
        }
        if self.sweep_mbps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("backhaul sweep must be strictly increasing".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.methods.contains(&Method::Brute) {
            let dims = self.base.dims();
            let needed = (dims.users as f64).powi(dims.slots() as i32);
            if needed > BRUTE_FORCE_LIMIT as f64 {
                return Err(Error::SearchTooLarge {
                    needed,
                    limit: BRUTE_FORCE_LIMIT,
                });
            }
        }
        Ok(())
    }

    /// Scenario of trial `t` at backhaul `z_mbps`.
    pub fn scenario(&self, z_mbps: f64, trial: usize) -> ScenarioConfig {
        let mut cfg = self.base.clone();
        cfg.backhaul_capacity_bps = PerSbs::Uniform(z_mbps * 1e6);
        cfg.rng_seed = self.base_seed.wrapping_add(trial as u64);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub backhaul_mbps: f64,
    pub seed: u64,
    pub utility_nats: f64,
    pub feasible: bool,
    pub min_slack_mbps: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub method: Method,
    pub backhaul_mbps: f64,
    pub seed: u64,
    pub round: usize,
    pub stage: String,
    pub step: usize,
    pub utility_nats: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignOutput {
    pub summary: Vec<SummaryRow>,
    pub convergence: Vec<ConvergenceRow>,
}

struct Outcome {
    utility: f64,
    feasible: bool,
    min_slack: f64,
    trace: Vec<(usize, &'static str, usize, f64)>,
}

fn fixed_power_outcome(cl: &Cluster, x: &Assignment, p: &PowerMatrix) -> Outcome {
    let r = cl.rates(p);
    let rep = cl.report(x, p);
    Outcome {
        utility: rep.utility,
        feasible: is_feasible(x, &r, &cl.backhaul_mbps, p).feasible,
        min_slack: rep.slack(&cl.backhaul_mbps).into_iter().fold(f64::INFINITY, f64::min),
        trace: Vec::new(),
    }
}

fn run_method(spec: &ExperimentSpec, method: Method, cfg: &ScenarioConfig, cl: &Cluster) -> Result<Outcome> {
    let p = cl.uniform_power();
    match method {
        Method::Proposed | Method::ProposedHigh | Method::ProposedLow => {
            let mut params = SolveParams::from(cfg);
            let preset = match method {
                Method::ProposedHigh => Some(Iterations::HIGH),
                Method::ProposedLow => Some(Iterations::LOW),
                _ => None,
            };
            if let Some(preset) = preset {
                params.iters = Iterations {
                    outer_rounds: params.iters.outer_rounds,
                    ..preset
                };
            }
            let out = solve_joint(cl, &params)?;
            Ok(Outcome {
                utility: out.utility,
                feasible: out.feasible,
                min_slack: out.min_slack_mbps,
                trace: out
                    .trace
                    .iter()
                    .map(|t| {
                        let stage = match t.stage {
                            Stage::Ua => "ua",
                            Stage::Pc => "pc",
                        };
                        (t.round, stage, t.step, t.utility)
                    })
                    .collect(),
            })
        }
        Method::Greedy => {
            let x = greedy_max_rate(&cl.rates(&p));
            let mut p = p;
            restore_backhaul(cl, &x, &mut p);
            Ok(fixed_power_outcome(cl, &x, &p))
        }
        Method::Ga => {
            let params = GaParams {
                seed: cfg.rng_seed,
                ..spec.ga
            };
            let ga = genetic_opt(&cl.rates(&p), &params)?;
            let mut out = fixed_power_outcome(cl, &ga.assignment, &p);
            out.trace = ga
                .best_per_generation
                .iter()
                .enumerate()
                .map(|(g, u)| (0, "ga", g, *u))
                .collect();
            Ok(out)
        }
        Method::Brute => {
            let oracle = brute_force(&cl.rates(&p), &cl.backhaul_mbps, BRUTE_FORCE_LIMIT)?;
            Ok(match oracle.best {
                Some((x, _)) => fixed_power_outcome(cl, &x, &p),
                None => Outcome {
                    utility: f64::NEG_INFINITY,
                    feasible: false,
                    min_slack: f64::NAN,
                    trace: Vec::new(),
                },
            })
        }
    }
}

/// Runs every (method, backhaul point, trial) job on the current rayon pool.
pub fn run_campaign(spec: &ExperimentSpec) -> Result<CampaignOutput> {
    spec.validate()?;
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    let jobs: Vec<(Method, f64, usize)> = methods
        .iter()
        .flat_map(|&m| {
            spec.sweep_mbps
                .iter()
                .flat_map(move |&z| (0..spec.trials).map(move |t| (m, z, t)))
        })
        .collect();

    let results: Vec<(SummaryRow, Vec<ConvergenceRow>)> = jobs
        .par_iter()
        .map(|&(method, z, trial)| {
            let cfg = spec.scenario(z, trial);
            let cl = Cluster::with_gains(&cfg, generate_instance(&cfg)?)?;
            let start = Instant::now();
            let out = run_method(spec, method, &cfg, &cl)?;
            let wall_ms = if spec.timing {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            let conv = if trial == 0 {
                out.trace
                    .iter()
                    .map(|&(round, stage, step, u)| ConvergenceRow {
                        method,
                        backhaul_mbps: z,
                        seed: cfg.rng_seed,
                        round,
                        stage: stage.to_string(),
                        step,
                        utility_nats: u,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Ok((
                SummaryRow {
                    method,
                    backhaul_mbps: z,
                    seed: cfg.rng_seed,
                    utility_nats: out.utility,
                    feasible: out.feasible,
                    min_slack_mbps: out.min_slack,
                    wall_ms,
                },
                conv,
            ))
        })
        .collect::<Result<_>>()?;

    // jobs are generated in sorted order and rayon preserves it on collect
    let mut output = CampaignOutput::default();
    for (row, conv) in results {
        output.summary.push(row);
        output.convergence.extend(conv);
    }
    Ok(output)
}

fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::Argument(format!("CSV buffer: {e}")))
}

pub const SUMMARY_HEADER: [&str; 7] = [
    "method",
    "backhaul_mbps",
    "seed",
    "utility_nats",
    "feasible",
    "min_slack_mbps",
    "wall_ms",
];

pub const CONVERGENCE_HEADER: [&str; 7] = [
    "method",
    "backhaul_mbps",
    "seed",
    "round",
    "stage",
    "step",
    "utility_nats",
];

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    csv_bytes(rows, &SUMMARY_HEADER)
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> Result<Vec<u8>> {
    csv_bytes(rows, &CONVERGENCE_HEADER)
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv`, `convergence.csv` and `spec.json` into `dir`.
pub fn write_outputs(spec: &ExperimentSpec, out: &CampaignOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir.join(SUMMARY_FILE), &summary_csv(&out.summary)?)?;
    write(dir.join(CONVERGENCE_FILE), &convergence_csv(&out.convergence)?)?;
    let mut json = serde_json::to_vec_pretty(spec)?;
    json.push(b'\n');
    write(dir.join(SPEC_FILE), &json)
}

pub fn run_experiment(spec: &ExperimentSpec, dir: &Path) -> Result<CampaignOutput> {
    let out = run_campaign(spec)?;
    write_outputs(spec, &out, dir)?;
    Ok(out)
}
