//! Lagrangian dual of the association problem with fixed power.
//!
//! With multipliers μ on the throughput definitions and ν on the backhaul
//! constraints, the dual function separates per (SBS, RB):
//!
//! ```text
//! g(μ, ν) = Σ_i ln(1/μ_i) + Σ_{j,c} max_i r_ij^c (μ_i − ν_j) + Σ_j ν_j Z_j − N
//! ```
//!
//! `g` is convex and upper-bounds the utility of every backhaul-feasible
//! assignment.

use serde::{Deserialize, Serialize};

use crate::baselines::greedy_max_rate;
use crate::error::{Error, Result};
use crate::radio::{utility, Assignment, RateTensor};

/// Relative tolerance used by [`kkt_check`] on every residual.
pub const KKT_TOL: f64 = 1e-6;

/// Smallest μ the projected solver keeps.
const MU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Throughput multipliers, 1/(Mbit/s).
    pub mu: Vec<f64>,
    /// Backhaul prices, 1/(Mbit/s), non-negative.
    pub nu: Vec<f64>,
    /// Throughputs implied by stationarity, `1/μ_i`.
    pub lambda: Vec<f64>,
}

impl DualState {
    pub fn new(mu: Vec<f64>, nu: Vec<f64>) -> Self {
        let lambda = mu
            .iter()
            .map(|&m| if m > 0.0 { 1.0 / m } else { f64::INFINITY })
            .collect();
        DualState { mu, nu, lambda }
    }

    /// μ = 1/λ(X) with ν = 0; users without throughput get the largest
    /// μ seen among the others (or 1 if every user is starved).
    pub fn from_throughput(throughput: &[f64], num_sbs: usize) -> Self {
        let fallback = throughput
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| 1.0 / l)
            .fold(f64::NAN, f64::max);
        let fallback = if fallback.is_nan() { 1.0 } else { fallback };
        let mu = throughput
            .iter()
            .map(|&l| if l > 0.0 { 1.0 / l } else { fallback })
            .collect();
        DualState::new(mu, vec![0.0; num_sbs])
    }

    fn check_domain(&self) -> Result<()> {
        match self.mu.iter().position(|&m| !(m > 0.0)) {
            Some(user) => Err(Error::DualDomain {
                user,
                value: self.mu[user],
            }),
            None => Ok(()),
        }
    }
}

/// Per slot, the user maximizing `r (μ_i − ν_j)`; ties go to the lowest index.
pub fn dual_allocation(r: &RateTensor, ds: &DualState) -> Assignment {
    let dims = r.dims();
    assert_eq!(ds.mu.len(), dims.users);
    assert_eq!(ds.nu.len(), dims.sbs);
    Assignment::from_fn(dims, |j, c| {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for i in 0..dims.users {
            let v = r.get(i, j, c) * (ds.mu[i] - ds.nu[j]);
            if v > best_v {
                best = i;
                best_v = v;
            }
        }
        best
    })
}

pub fn dual_function(r: &RateTensor, backhaul_mbps: &[f64], ds: &DualState) -> Result<f64> {
    ds.check_domain()?;
    let dims = r.dims();
    let x = dual_allocation(r, ds);
    let mut g: f64 = ds.mu.iter().map(|m| -m.ln()).sum();
    for j in 0..dims.sbs {
        for c in 0..dims.rbs {
            let i = x.user(j, c);
            g += r.get(i, j, c) * (ds.mu[i] - ds.nu[j]);
        }
    }
    g += ds.nu.iter().zip(backhaul_mbps).map(|(n, z)| n * z).sum::<f64>();
    Ok(g - dims.users as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    /// Iterate with the smallest dual value seen.
    pub state: DualState,
    /// Dual allocation at `state`.
    pub assignment: Assignment,
    pub g: f64,
    /// Dual value at every iterate, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Projected subgradient descent on `g` over μ > 0, ν ≥ 0.
///
/// Steps are diagonally preconditioned by μ_i² (the inverse curvature of the
/// `−ln μ_i` term) and shrink as `step/√t`. The best iterate by `g` is returned.
pub fn dual_solve(
    r: &RateTensor,
    backhaul_mbps: &[f64],
    max_iters: usize,
    step: f64,
) -> Result<DualSolution> {
    if max_iters == 0 {
        return Err(Error::Argument("dual_solve needs at least one iteration".into()));
    }
    if !(step > 0.0) {
        return Err(Error::Argument(format!("dual step must be positive, got {step}")));
    }
    let dims = r.dims();
    let start = utility(&greedy_max_rate(r), r);
    let mut ds = DualState::from_throughput(&start.throughput, dims.sbs);

    let mut best = ds.clone();
    let mut best_g = dual_function(r, backhaul_mbps, &ds)?;
    let mut trace = vec![best_g];
    for t in 1..=max_iters {
        let x = dual_allocation(r, &ds);
        let rep = utility(&x, r);
        let s = step / (t as f64).sqrt();
        let mu_bar = ds.mu.iter().sum::<f64>() / dims.users as f64;
        for (j, nu) in ds.nu.iter_mut().enumerate() {
            let d = backhaul_mbps[j] - rep.load[j];
            *nu = (*nu - s * mu_bar * mu_bar * d).max(0.0);
        }
        for (i, mu) in ds.mu.iter_mut().enumerate() {
            let d = rep.throughput[i] - 1.0 / *mu;
            *mu = (*mu - s * *mu * *mu * d).max(MU_FLOOR);
        }
        ds = DualState::new(ds.mu, ds.nu);
        let g = dual_function(r, backhaul_mbps, &ds)?;
        trace.push(g);
        if g < best_g {
            best_g = g;
            best = ds.clone();
        }
    }
    Ok(DualSolution {
        assignment: dual_allocation(r, &best),
        state: best,
        g: best_g,
        trace,
    })
}

/// Iterates μ ← 1/λ(F(μ, ν)) with ν held fixed, where F is the dual allocation.
///
/// Stops at the first repeated assignment or after `max_iters` rounds and
/// returns the final state. A fixed point with ν = 0 satisfies every KKT
/// condition except possibly the backhaul constraints.
pub fn fixed_point_refine(r: &RateTensor, ds: &DualState, max_iters: usize) -> DualState {
    let dims = r.dims();
    let mut cur = ds.clone();
    let mut x = dual_allocation(r, &cur);
    for _ in 0..max_iters {
        let rep = utility(&x, r);
        let mut next = DualState::from_throughput(&rep.throughput, dims.sbs);
        next.nu.clone_from(&cur.nu);
        let nx = dual_allocation(r, &next);
        cur = next;
        if nx == x {
            break;
        }
        x = nx;
    }
    cur
}

/// `Σ_{j,c} max_i r_ij^c / λ_i(X)`; KKT can hold only if this is at most N.
pub fn best_share_sum(r: &RateTensor, x: &Assignment) -> f64 {
    let dims = r.dims();
    let lambda = utility(x, r).throughput;
    let mut total = 0.0;
    for j in 0..dims.sbs {
        for c in 0..dims.rbs {
            let mut m: f64 = 0.0;
            for (i, &l) in lambda.iter().enumerate() {
                let rate = r.get(i, j, c);
                if rate > 0.0 {
                    m = m.max(if l > 0.0 { rate / l } else { f64::INFINITY });
                }
            }
            total += m;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub satisfied: bool,
    /// `Z_j − load_j(X)`, the ν-gradient of `g`.
    pub grad_nu: Vec<f64>,
    /// `ν_j (Z_j − load_j)`.
    pub slackness: Vec<f64>,
    /// `|λ_i(X) − 1/μ_i|`.
    pub stationarity: Vec<f64>,
    /// `Σ_{j,c} max_i r_ij^c / λ_i(X)`; at most N when the KKT conditions hold.
    pub best_share_sum: f64,
    pub num_users: usize,
    pub primal_feasible: bool,
    pub slackness_ok: bool,
    pub stationarity_ok: bool,
    pub best_share_ok: bool,
}

pub fn kkt_check(
    r: &RateTensor,
    backhaul_mbps: &[f64],
    ds: &DualState,
    x: &Assignment,
) -> KktReport {
    let rep = utility(x, r);
    let grad_nu = rep.slack(backhaul_mbps);
    let primal_feasible = grad_nu
        .iter()
        .zip(backhaul_mbps)
        .all(|(g, z)| *g >= -KKT_TOL * z);
    let slackness: Vec<f64> = ds.nu.iter().zip(&grad_nu).map(|(n, g)| n * g).collect();
    let slackness_ok = slackness
        .iter()
        .zip(ds.nu.iter().zip(backhaul_mbps))
        .all(|(s, (n, z))| s.abs() <= KKT_TOL * n * z);
    let stationarity: Vec<f64> = rep
        .throughput
        .iter()
        .zip(&ds.lambda)
        .map(|(l, target)| (l - target).abs())
        .collect();
    let stationarity_ok = stationarity
        .iter()
        .zip(&ds.lambda)
        .all(|(s, target)| *s <= KKT_TOL * target);
    let t1 = best_share_sum(r, x);
    let n = r.dims().users;
    let best_share_ok = t1 <= n as f64 * (1.0 + KKT_TOL);
    KktReport {
        satisfied: primal_feasible && slackness_ok && stationarity_ok && best_share_ok,
        grad_nu,
        slackness,
        stationarity,
        best_share_sum: t1,
        num_users: n,
        primal_feasible,
        slackness_ok,
        stationarity_ok,
        best_share_ok,
    }
}
