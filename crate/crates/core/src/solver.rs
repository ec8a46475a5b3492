//! Alternation between association/allocation (fixed power) and power
//! control (fixed association).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::greedy_max_rate;
use crate::error::{Error, Result};
use crate::power::{restore_backhaul, run_pc, PcParams};
use crate::radio::{is_feasible, Assignment, Feasibility, PowerMatrix};
use crate::scenario::{Cluster, Iterations, ScenarioConfig, Steps};
use crate::ua_ra::{run_algorithm1, Alg1Params};

/// Budgets and step sizes of one joint solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub iters: Iterations,
    pub steps: Steps,
}

impl From<&ScenarioConfig> for SolveParams {
    fn from(cfg: &ScenarioConfig) -> Self {
        SolveParams {
            iters: cfg.iters,
            steps: cfg.steps,
        }
    }
}

impl SolveParams {
    fn alg1(&self) -> Alg1Params {
        Alg1Params {
            i_zeta: self.iters.i_zeta,
            i_nu: self.iters.i_nu,
            alpha: self.steps.alpha,
        }
    }

    fn pc(&self) -> PcParams {
        PcParams {
            epsilon_f: self.steps.epsilon_f,
            gamma: self.steps.gamma,
            i_p: self.iters.i_p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Association/allocation price iterations.
    Ua,
    /// Power-control steps.
    Pc,
}

/// One utility sample of the joint convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub round: usize,
    pub stage: Stage,
    pub step: usize,
    pub utility: f64,
}

/// State at the end of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub utility: f64,
    pub feasible: bool,
    pub min_slack_mbps: f64,
    pub max_nu: f64,
    pub min_xi: f64,
    /// Association from the allocation stage met every backhaul limit without help.
    pub ua_feasible: bool,
    pub pc_converged: bool,
    pub pc_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub assignment: Assignment,
    pub power: PowerMatrix,
    /// Equals `utility(assignment, rates(power))`.
    pub utility: f64,
    pub feasible: bool,
    pub feasibility: Feasibility,
    pub min_slack_mbps: f64,
    /// Round whose end state is returned, `None` if no round was feasible.
    pub best_round: Option<usize>,
    pub rounds: Vec<RoundSummary>,
    pub trace: Vec<TracePoint>,
    pub wall_ms: f64,
}

struct Iterate {
    x: Assignment,
    p: PowerMatrix,
    utility: f64,
    round: usize,
}

/// Joint solve from uniform power.
///
/// Each round runs the allocation stage on the rates of the current power
/// (started from max-rate greedy in the first round, from the previous
/// association afterwards), scales down any SBS still over its backhaul limit,
/// and then runs power control. Stops after `outer_rounds`, when the relative
/// utility change drops below `epsilon_conv`, or when a round changes nothing.
/// Returns the feasible round-end state with the highest utility; if none was
/// feasible, the last one, flagged.
pub fn solve_joint(cl: &Cluster, params: &SolveParams) -> Result<SolveResult> {
    if params.iters.outer_rounds == 0 {
        return Err(Error::Config("outer_rounds must be at least 1".into()));
    }
    let start = Instant::now();
    let z = &cl.backhaul_mbps;
    let mut p = cl.uniform_power();
    let mut x: Option<Assignment> = None;
    let mut best: Option<Iterate> = None;
    let mut last: Option<Iterate> = None;
    let mut rounds = Vec::new();
    let mut trace = Vec::new();
    let mut prev_u: Option<f64> = None;

    for round in 0..params.iters.outer_rounds {
        let r = cl.rates(&p);
        let x0 = x.take().unwrap_or_else(|| greedy_max_rate(&r));
        let a1 = run_algorithm1(&r, z, &x0, params.alg1());
        trace.extend(a1.trace.iter().map(|row| TracePoint {
            round,
            stage: Stage::Ua,
            step: row.iteration,
            utility: row.utility,
        }));
        let xr = a1.assignment;
        let p_in = p.clone();
        restore_backhaul(cl, &xr, &mut p);

        let (pc_converged, pc_iterations, min_xi) = if cl.report(&xr, &p).utility > f64::NEG_INFINITY {
            let pc = run_pc(cl, &xr, &p, params.pc())?;
            trace.extend(pc.trace.iter().map(|row| TracePoint {
                round,
                stage: Stage::Pc,
                step: row.iteration,
                utility: row.utility,
            }));
            p = pc.power;
            let min_xi = pc.xi.iter().copied().fold(f64::INFINITY, f64::min);
            (pc.converged, pc.iterations, min_xi)
        } else {
            (false, 0, f64::NAN)
        };

        let rep = cl.report(&xr, &p);
        let feas = is_feasible(&xr, &cl.rates(&p), z, &p);
        let slack = rep.slack(z);
        rounds.push(RoundSummary {
            round,
            utility: rep.utility,
            feasible: feas.feasible,
            min_slack_mbps: slack.iter().copied().fold(f64::INFINITY, f64::min),
            max_nu: a1.nu.iter().copied().fold(0.0, f64::max),
            min_xi,
            ua_feasible: a1.feasible,
            pc_converged,
            pc_iterations,
        });
        let unchanged = Some(&xr) == Some(&x0) && p == p_in;
        let here = Iterate {
            x: xr.clone(),
            p: p.clone(),
            utility: rep.utility,
            round,
        };
        if feas.feasible && best.as_ref().is_none_or(|b| rep.utility > b.utility) {
            best = Some(here);
        } else {
            last = Some(here);
        }
        x = Some(xr);

        let small_change = prev_u.is_some_and(|u0| {
            (rep.utility - u0).abs() < params.steps.epsilon_conv * rep.utility.abs()
        });
        prev_u = Some(rep.utility);
        if unchanged || small_change {
            break;
        }
    }

    let chosen = match best {
        Some(b) => b,
        None => last.expect("at least one round ran"),
    };
    let rep = cl.report(&chosen.x, &chosen.p);
    let feasibility = is_feasible(&chosen.x, &cl.rates(&chosen.p), z, &chosen.p);
    Ok(SolveResult {
        utility: rep.utility,
        feasible: feasibility.feasible,
        min_slack_mbps: rep.slack(z).into_iter().fold(f64::INFINITY, f64::min),
        best_round: feasibility.feasible.then_some(chosen.round),
        assignment: chosen.x,
        power: chosen.p,
        feasibility,
        rounds,
        trace,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
