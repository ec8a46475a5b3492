//! Per-SBS power control with a fixed association.
//!
//! Each SBS repeatedly moves power from its RB with the lowest marginal
//! utility `∂U/∂p` to the one with the highest, sizing the transfer with a
//! second-order root of the marginal gap and capping it so no backhaul limit
//! is crossed. Where the marginals of the active RBs have a concave model, a
//! joint Newton step levels them all at once. Once the marginals are level, a
//! negative common marginal ξ_j triggers a uniform cut of the SBS's sum power,
//! and a positive one a raise back towards `P_max`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{Assignment, PowerMatrix, UtilityReport, FEASIBILITY_TOL};
use crate::scenario::Cluster;

/// Sum power below which an SBS is treated as switched off (fraction of P_max).
const MIN_SUM_POWER_FRAC: f64 = 1e-6;

/// Slack below which a backhaul link counts as exhausted (fraction of Z).
const EXHAUSTED_SLACK_FRAC: f64 = 1e-9;

/// Cap on the sequential restoration passes of [`restore_backhaul`].
const MAX_RESTORE_PASSES: usize = 1000;

/// Powers below this fraction of `P_max` are treated as switched off.
pub const NEGLIGIBLE_POWER_FRAC: f64 = 1e-12;
/// Relative size of the probe that estimates the Newton length of a sum-power change.
const RESCALE_PROBE_FRAC: f64 = 1e-6;

/// Fraction of Z that [`restore_backhaul`] leaves unused, so that saturated
/// SBSs can still trade power afterwards.
pub const RESTORE_HEADROOM: f64 = 1e-3;

/// Halvings tried before a step is given up.
const MAX_BACKTRACKS: usize = 60;

/// Relative utility drop attributed to rounding in step acceptance.
const UTILITY_ROUNDING: f64 = 1e-14;

/// `∂U/∂p_j^c` and its first two derivatives along `p_j^c` with throughputs frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    /// nats/W.
    pub value: f64,
    /// Contribution of the other SBSs' users (interference only), nats/W.
    pub interference: f64,
    /// nats/W².
    pub d1: f64,
    /// nats/W³.
    pub d2: f64,
}

/// Marginal utility of power on RB `c` of SBS `j`.
///
/// With `S_k = W snr_j / D` and `Q_k = W snr_j / D_{−k}` for the user served by
/// SBS k on RB c (SNRs normalized by σ², `D` the full SINR denominator plus
/// one, `D_{−k}` the same without k's own signal):
///
/// ```text
/// ∂U/∂p_j^c = Σ_k S_k / (λ ln2) − Σ_{k≠j} Q_k / (λ ln2)
/// ```
pub fn marginal(
    cl: &Cluster,
    x: &Assignment,
    p: &PowerMatrix,
    lambda: &[f64],
    j: usize,
    c: usize,
) -> Result<Marginal> {
    let dims = cl.dims();
    let w = cl.bandwidth_mhz();
    let mut out = Marginal {
        value: 0.0,
        interference: 0.0,
        d1: 0.0,
        d2: 0.0,
    };
    for k in 0..dims.sbs {
        if k != j && p.get(k, c) <= 0.0 {
            continue;
        }
        let u = x.user(k, c);
        if !(lambda[u] > 0.0) {
            return Err(Error::StarvedUser { user: u, sbs: k, rb: c });
        }
        let snr = |b: usize| cl.gains.get(u, b, c) / cl.noise_w;
        let d_all = 1.0 + (0..dims.sbs).map(|b| snr(b) * p.get(b, c)).sum::<f64>();
        let coef = 1.0 / (lambda[u] * LN_2);
        let s = w * snr(j) / d_all;
        out.value += coef * s;
        out.d1 -= coef * s * s / w;
        out.d2 += coef * 2.0 * s * s * s / (w * w);
        if k != j {
            let d_own = d_all - snr(k) * p.get(k, c);
            let q = w * snr(j) / d_own;
            out.value -= coef * q;
            out.interference += coef * (s - q);
            out.d1 += coef * q * q / w;
            out.d2 -= coef * 2.0 * q * q * q / (w * w);
        }
    }
    Ok(out)
}

/// Marginals of every RB of SBS `j`.
pub fn marginals_of(
    cl: &Cluster,
    x: &Assignment,
    p: &PowerMatrix,
    lambda: &[f64],
    j: usize,
) -> Result<Vec<Marginal>> {
    (0..cl.dims().rbs)
        .map(|c| marginal(cl, x, p, lambda, j, c))
        .collect()
}

/// `f`, `f′`, `f″` of the marginal gap along a transfer from `c₂` to `c₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTriple {
    /// nats/W.
    pub f: f64,
    /// nats/W².
    pub f1: f64,
    /// nats/W³.
    pub f2: f64,
}

impl DerivativeTriple {
    /// `f(Δ) = ∂U/∂p_j^{c₁} − ∂U/∂p_j^{c₂}` after moving Δ watts from c₂ to c₁.
    pub fn from_marginals(m1: &Marginal, m2: &Marginal) -> Self {
        DerivativeTriple {
            f: m1.value - m2.value,
            f1: m1.d1 + m2.d1,
            f2: m1.d2 - m2.d2,
        }
    }

    /// Value of the quadratic model `f + f′Δ + ½f″Δ²`.
    pub fn model(&self, delta: f64) -> f64 {
        self.f + self.f1 * delta + 0.5 * self.f2 * delta * delta
    }
}

/// Adds `sign · (∂R_u/∂p_j^c)/λ_u` for every user `u` whose rate depends on `p_j^c`.
fn add_user_terms(
    cl: &Cluster,
    x: &Assignment,
    p: &PowerMatrix,
    lambda: &[f64],
    (j, c): (usize, usize),
    sign: f64,
    out: &mut [f64],
) {
    let dims = cl.dims();
    let w = cl.bandwidth_mhz();
    for k in 0..dims.sbs {
        if k != j && p.get(k, c) <= 0.0 {
            continue;
        }
        let u = x.user(k, c);
        let snr = |b: usize| cl.gains.get(u, b, c) / cl.noise_w;
        let d_all = 1.0 + (0..dims.sbs).map(|b| snr(b) * p.get(b, c)).sum::<f64>();
        let mut t = w * snr(j) / d_all;
        if k != j {
            t -= w * snr(j) / (d_all - snr(k) * p.get(k, c));
        }
        out[u] += sign * t / (lambda[u] * LN_2);
    }
}

/// Slope of the gap from the throughputs moving with the transfer:
/// `−Σ_u (t₁ᵤ − t₂ᵤ)²` with `tᵤ` user u's share of each marginal.
pub fn throughput_coupling(
    cl: &Cluster,
    x: &Assignment,
    p: &PowerMatrix,
    lambda: &[f64],
    j: usize,
    c1: usize,
    c2: usize,
) -> f64 {
    let mut t = vec![0.0; lambda.len()];
    add_user_terms(cl, x, p, lambda, (j, c1), 1.0, &mut t);
    add_user_terms(cl, x, p, lambda, (j, c2), -1.0, &mut t);
    -t.iter().map(|v| v * v).sum::<f64>()
}

/// Derivative triple of the gap for a transfer from `c2` to `c1`; `f′` also
/// includes [`throughput_coupling`].
pub fn derivatives(
    cl: &Cluster,
    x: &Assignment,
    p: &PowerMatrix,
    lambda: &[f64],
    j: usize,
    c1: usize,
    c2: usize,
) -> Result<DerivativeTriple> {
    let mut t = DerivativeTriple::from_marginals(
        &marginal(cl, x, p, lambda, j, c1)?,
        &marginal(cl, x, p, lambda, j, c2)?,
    );
    t.f1 += throughput_coupling(cl, x, p, lambda, j, c1, c2);
    Ok(t)
}

/// Joint Newton step over the active RBs of one SBS.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStep {
    /// Power change per RB, zero on inactive RBs.
    pub delta: Vec<f64>,
    /// Predicted common marginal after the step.
    pub level: f64,
    /// The sum power is free to fall (the level is 0), not held fixed.
    pub sum_free: bool,
}

/// Newton step that levels the marginals of all active RBs of SBS `j` at once.
///
/// Solves `H Δ + m = ℓ·1`, `Σ Δ = 0` over the RBs with power, where
/// `H = diag(d₁) − T Tᵀ` is the Hessian of U in `j`'s powers and `T[c][u]` is
/// user u's share of marginal c. If that level falls below `−floor`, the sum
/// power should shrink instead, and the step solves `H Δ + m = 0` when that
/// lowers the sum. Returns `None` if there are fewer than two active RBs or the
/// model has no maximum on the transfers.
pub fn level_step(
    cl: &Cluster,
    x: &Assignment,
    p: &PowerMatrix,
    lambda: &[f64],
    j: usize,
    m: &[Marginal],
    floor: f64,
) -> Option<LevelStep> {
    let active: Vec<usize> = (0..m.len()).filter(|&c| p.get(j, c) > 0.0).collect();
    let k = active.len();
    if k < 2 {
        return None;
    }
    let t: Vec<Vec<f64>> = active
        .iter()
        .map(|&c| {
            let mut row = vec![0.0; lambda.len()];
            add_user_terms(cl, x, p, lambda, (j, c), 1.0, &mut row);
            row
        })
        .collect();
    let h = DMatrix::from_fn(k, k, |r, s| {
        let coupling: f64 = t[r].iter().zip(&t[s]).map(|(u, v)| u * v).sum();
        (if r == s { m[active[r]].d1 } else { 0.0 }) - coupling
    });
    let rhs = DVector::from_fn(k, |r, _| -m[active[r]].value);
    let spread = |sol: &DVector<f64>| {
        let mut delta = vec![0.0; m.len()];
        for (r, &c) in active.iter().enumerate() {
            delta[c] = sol[r];
        }
        delta
    };

    // only a maximum of the model is worth stepping to: H must be negative
    // definite on the transfers (Σ Δ = 0), spanned by e_r − e_last
    let last = k - 1;
    let reduced = DMatrix::from_fn(last, last, |r, s| {
        -(h[(r, s)] - h[(r, last)] - h[(last, s)] + h[(last, last)])
    });
    reduced.cholesky()?;
    let mut a = DMatrix::zeros(k + 1, k + 1);
    a.view_mut((0, 0), (k, k)).copy_from(&h);
    let mut b = DVector::zeros(k + 1);
    for r in 0..k {
        a[(r, k)] = -1.0;
        a[(k, r)] = 1.0;
        b[r] = rhs[r];
    }
    let sol = a.lu().solve(&b)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let level = sol[k];
    if level < -floor {
        // aim just inside the tolerance; the sum power is nearly flat in U
        // near the level, so aiming at 0 would cut far more than needed
        let target = rhs.add_scalar(-0.5 * floor);
        let free = (-&h).cholesky().map(|c| -c.solve(&target));
        if let Some(d) = free.filter(|d| d.iter().all(|v| v.is_finite()) && d.sum() < 0.0) {
            return Some(LevelStep {
                delta: spread(&d),
                level: -0.5 * floor,
                sum_free: true,
            });
        }
    }
    Some(LevelStep {
        delta: spread(&sol.rows(0, k).into_owned()),
        level,
        sum_free: false,
    })
}

/// RB to receive power (highest marginal, any RB) and RB to donate it (lowest
/// marginal among RBs with power). Ties go to the lowest index.
pub fn select_rb_pair(j: usize, marginals: &[f64], row: &[f64]) -> Result<(usize, usize)> {
    let mut c1 = 0;
    for c in 1..marginals.len() {
        if marginals[c] > marginals[c1] {
            c1 = c;
        }
    }
    let mut c2: Option<usize> = None;
    for c in (0..marginals.len()).filter(|&c| row[c] > 0.0) {
        if c2.is_none_or(|b| marginals[c] < marginals[b]) {
            c2 = Some(c);
        }
    }
    c2.map(|c2| (c1, c2)).ok_or(Error::NoDonor(j))
}

/// Root of the quadratic model nearest zero, in the numerically stable form
/// `−2f / (f′ + sgn(f′)√(f′² − 2f″f))`.
///
/// Falls back to the linear root `−f/f′` when the model has no real root.
/// Returns 0 when `f = 0` or the model is flat, and never returns a negative
/// transfer.
pub fn delta_p_star(t: &DerivativeTriple) -> f64 {
    if t.f == 0.0 {
        return 0.0;
    }
    let disc = t.f1 * t.f1 - 2.0 * t.f2 * t.f;
    let root = if disc >= 0.0 {
        let denom = t.f1 + t.f1.signum() * disc.sqrt();
        if denom != 0.0 {
            -2.0 * t.f / denom
        } else {
            0.0
        }
    } else if t.f1 != 0.0 {
        -t.f / t.f1
    } else {
        0.0
    };
    root.max(0.0)
}

/// Largest transfer from `c₂` to `c₁` on SBS `j` that keeps every backhaul
/// constraint satisfied.
///
/// Lowering `p_j^{c₂}` by Δ raises any other SBS k's rate on c₂ by at most
/// `W log2(1/(1 − Δ/p_j^{c₂}))`; raising `p_j^{c₁}` raises j's rate on c₁ by
/// exactly `W log2(1 + Δ g/(n + I + g p_j^{c₁}))`. Solving both against the
/// slacks `L` gives the cap.
pub fn delta_p_cap(
    cl: &Cluster,
    x: &Assignment,
    p: &PowerMatrix,
    slack: &[f64],
    j: usize,
    c1: usize,
    c2: usize,
) -> f64 {
    let dims = cl.dims();
    let w = cl.bandwidth_mhz();
    let usable = |k: usize| {
        let l = slack[k];
        if l <= EXHAUSTED_SLACK_FRAC * cl.backhaul_mbps[k] {
            0.0
        } else {
            l
        }
    };
    let p2 = p.get(j, c2);
    let donor = (0..dims.sbs)
        .filter(|&k| k != j)
        .map(|k| p2 * (1.0 - (-usable(k) / w).exp2()))
        .fold(p2, f64::min);
    let growth = (usable(j) / w).exp2() - 1.0;
    let receiver = if growth == 0.0 {
        0.0
    } else {
        let u = x.user(j, c1);
        let g = cl.gains.get(u, j, c1);
        let interference: f64 = (0..dims.sbs)
            .filter(|&k| k != j)
            .map(|k| cl.gains.get(u, k, c1) * p.get(k, c1))
            .sum();
        growth * (cl.noise_w + interference + g * p.get(j, c1)) / g
    };
    donor.min(receiver)
}

/// Moves `delta` watts from RB `c2` to RB `c1` of SBS `j`.
pub fn apply_exchange(p: &mut PowerMatrix, j: usize, c1: usize, c2: usize, delta: f64) -> Result<()> {
    let p2 = p.get(j, c2);
    if !(0.0..=p2).contains(&delta) {
        return Err(Error::Argument(format!(
            "transfer {delta} W outside [0, {p2}] on SBS {j} RB {c2}"
        )));
    }
    if delta == 0.0 {
        return Ok(());
    }
    p.set(j, c1, p.get(j, c1) + delta);
    p.set(j, c2, if delta == p2 { 0.0 } else { p2 - delta });
    Ok(())
}

/// Uniformly rescales SBS `j` by `Δ = min(γ ξ_j, P_max − Σ_c p_j^c)`.
///
/// The scale factor is clamped at 0. Returns the change in sum power actually
/// applied.
pub fn adjust_total_power(p: &mut PowerMatrix, j: usize, xi: f64, gamma: f64) -> f64 {
    let total = p.sum(j);
    if total <= 0.0 {
        return 0.0;
    }
    let want = (gamma * xi).min(p.p_max(j) - total);
    let scale = ((total + want) / total).max(0.0);
    for v in p.row_mut(j) {
        *v *= scale;
    }
    p.sum(j) - total
}

/// Whether some other SBS has no backhaul slack left, so that any cut of
/// `j`'s power (which only lowers interference) would push it over.
fn neighbour_exhausted(cl: &Cluster, slack: &[f64], j: usize) -> bool {
    (0..cl.dims().sbs)
        .filter(|&k| k != j)
        .any(|k| slack[k] <= EXHAUSTED_SLACK_FRAC * cl.backhaul_mbps[k])
}

/// Scales down overloaded SBSs until every load is within its backhaul limit.
///
/// Each overloaded SBS gets the largest uniform scale (found by bisection)
/// that brings its own load under `(1 − RESTORE_HEADROOM)·Z`. Scaling one SBS can only raise the
/// others' loads, so passes repeat until none is overloaded. Returns the
/// number of rescalings.
pub fn restore_backhaul(cl: &Cluster, x: &Assignment, p: &mut PowerMatrix) -> usize {
    let z = &cl.backhaul_mbps;
    let mut count = 0;
    for _ in 0..MAX_RESTORE_PASSES {
        let mut any = false;
        for j in 0..cl.dims().sbs {
            let target = z[j] * (1.0 - RESTORE_HEADROOM);
            if cl.report(x, p).load[j] <= z[j] {
                continue;
            }
            any = true;
            count += 1;
            let base = p.row(j).to_vec();
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                for (v, b) in p.row_mut(j).iter_mut().zip(&base) {
                    *v = b * mid;
                }
                if cl.report(x, p).load[j] <= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            for (v, b) in p.row_mut(j).iter_mut().zip(&base) {
                *v = b * lo;
            }
        }
        if !any {
            break;
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcParams {
    /// Marginal gap below which an SBS's RBs count as level, nats/W.
    pub epsilon_f: f64,
    /// Sum-power step, W²/nat.
    pub gamma: f64,
    /// Budget of accepted steps (transfers plus sum-power changes).
    pub i_p: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Exchange,
    /// Joint transfer among all active RBs of the SBS.
    Level,
    Reduce,
    Raise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcTraceRow {
    pub iteration: usize,
    pub sbs: usize,
    pub kind: StepKind,
    pub c1: usize,
    pub c2: usize,
    /// Watts moved (exchange) or change of sum power (reduce).
    pub delta_w: f64,
    /// Multiplier that triggered a reduction; 0 for exchanges.
    pub xi: f64,
    pub utility: f64,
    pub min_slack_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcResult {
    pub power: PowerMatrix,
    /// Common marginal of each SBS at its last visit.
    pub xi: Vec<f64>,
    /// SBSs whose own backhaul stopped all transfers at their last visit.
    pub saturated: Vec<bool>,
    /// SBSs blocked by another SBS's exhausted backhaul at their last visit.
    pub blocked: Vec<bool>,
    pub iterations: usize,
    /// A full pass over the SBSs changed nothing.
    pub converged: bool,
    pub budget_exhausted: bool,
    /// Transfers undone because the post-step check found a violated limit.
    pub rejected_steps: usize,
    /// Smallest `L_k / Z_k` observed after any accepted step (and at the start).
    pub min_rel_slack: f64,
    pub trace: Vec<PcTraceRow>,
}

fn min_rel_slack(slack: &[f64], z: &[f64]) -> f64 {
    slack
        .iter()
        .zip(z)
        .map(|(l, z)| l / z)
        .fold(f64::INFINITY, f64::min)
}

fn within_backhaul(slack: &[f64], z: &[f64]) -> bool {
    slack.iter().zip(z).all(|(l, z)| *l >= -FEASIBILITY_TOL * z)
}

enum Visit {
    Done,
    Stepped,
}

struct Pc<'a> {
    cl: &'a Cluster,
    x: &'a Assignment,
    params: PcParams,
    p: PowerMatrix,
    rep: UtilityReport,
    out: PcResult,
}

impl Pc<'_> {
    fn slack(&self) -> Vec<f64> {
        self.rep.slack(&self.cl.backhaul_mbps)
    }

    fn accept(&mut self, row: PcTraceRow) {
        self.out.iterations += 1;
        self.out.min_rel_slack = self
            .out
            .min_rel_slack
            .min(min_rel_slack(&self.slack(), &self.cl.backhaul_mbps));
        self.out.trace.push(row);
    }

    /// Step acceptance: the utility rises, or the marginal gap the step
    /// targets shrinks while the utility holds within rounding.
    fn improves(u0: f64, u1: f64, gap0: f64, gap1: f64) -> bool {
        u1 > u0 || (gap1.abs() < gap0.abs() && u1 >= u0 - UTILITY_ROUNDING * u0.abs().max(1.0))
    }

    /// Tries `p ← trial(step)` for `step, step/2, …` and keeps the first
    /// backhaul-feasible point that passes [`Self::improves`].
    fn backtrack(
        &mut self,
        step: f64,
        gap0: f64,
        mut trial: impl FnMut(&mut PowerMatrix, f64) -> Result<()>,
        gap: impl Fn(&PowerMatrix, &UtilityReport) -> Result<f64>,
    ) -> Result<Option<f64>> {
        let z = &self.cl.backhaul_mbps;
        let u0 = self.rep.utility;
        let mut step = step;
        for _ in 0..MAX_BACKTRACKS {
            let mut p = self.p.clone();
            trial(&mut p, step)?;
            let rep = self.cl.report(self.x, &p);
            if !within_backhaul(&rep.slack(z), z) {
                self.out.rejected_steps += 1;
            } else if rep.utility > f64::NEG_INFINITY {
                let g1 = gap(&p, &rep)?;
                if Self::improves(u0, rep.utility, gap0, g1) {
                    self.p = p;
                    self.rep = rep;
                    return Ok(Some(step));
                }
            }
            step *= 0.5;
        }
        Ok(None)
    }

    fn record(&mut self, j: usize, kind: StepKind, c1: usize, c2: usize, delta_w: f64, xi: f64) {
        let slack = self.slack();
        self.accept(PcTraceRow {
            iteration: self.out.iterations,
            sbs: j,
            kind,
            c1,
            c2,
            delta_w,
            xi,
            utility: self.rep.utility,
            min_slack_mbps: slack.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }

    /// Sum-power change for SBS `j` driven by its multiplier `xi`, read off RB
    /// `own_rb` (its full marginal or only the interference part): a cut when
    /// `xi` is negative, a raise towards `P_max` when it is positive.
    fn rescale(&mut self, j: usize, xi: f64, own_rb: usize, interference_only: bool) -> Result<bool> {
        let eps = self.params.epsilon_f;
        let total = self.p.sum(j);
        let headroom = self.p.p_max(j) - total;
        let (sign, room) = if xi < -eps {
            if total <= MIN_SUM_POWER_FRAC * self.p.p_max(j) || neighbour_exhausted(self.cl, &self.slack(), j) {
                return Ok(false);
            }
            (-1.0, total)
        } else if xi > eps && !interference_only && headroom > NEGLIGIBLE_POWER_FRAC * self.p.p_max(j) {
            (1.0, headroom)
        } else {
            return Ok(false);
        };
        let gamma = self.params.gamma;
        let (cl, x) = (self.cl, self.x);
        let level = |p: &PowerMatrix, rep: &UtilityReport| -> Result<f64> {
            let m = marginal(cl, x, p, &rep.throughput, j, own_rb)?;
            Ok(if interference_only { m.interference } else { m.value })
        };
        // Newton length from a probe; the plain step if the level moves the wrong way
        let probe = (RESCALE_PROBE_FRAC * total).min(room);
        let mut p = self.p.clone();
        adjust_total_power(&mut p, j, sign * probe / gamma, gamma);
        let slope = (level(&p, &cl.report(x, &p))? - xi) / probe;
        let want = if sign * slope < 0.0 { -xi / slope } else { gamma * xi.abs() };
        let want = want.min(room);
        let accepted = self.backtrack(
            want,
            xi,
            |p, step| {
                adjust_total_power(p, j, sign * step / gamma, gamma);
                Ok(())
            },
            level,
        )?;
        let Some(_) = accepted else { return Ok(false) };
        let applied = self.p.sum(j) - total;
        let kind = if sign < 0.0 { StepKind::Reduce } else { StepKind::Raise };
        self.record(j, kind, own_rb, own_rb, applied, xi);
        Ok(true)
    }

    /// Tries the joint [`level_step`], shortened so no power goes negative.
    fn level(&mut self, j: usize, m: &[Marginal], c1: usize, c2: usize) -> Result<bool> {
        let (cl, x) = (self.cl, self.x);
        let eps = self.params.epsilon_f;
        let Some(step) = level_step(cl, x, &self.p, &self.rep.throughput, j, m, eps) else {
            return Ok(false);
        };
        let row0 = self.p.row(j).to_vec();
        let reach = step
            .delta
            .iter()
            .zip(&row0)
            .filter(|(d, _)| **d < 0.0)
            .map(|(d, p)| p / -d)
            .fold(1.0, f64::min);
        let p_max = self.p.p_max(j);
        // distance from the target: spread of the active marginals, or their
        // largest magnitude once the sum power is free
        let sum_free = step.sum_free;
        let distance = move |on: &[f64]| {
            let hi = on.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = on.iter().copied().fold(f64::INFINITY, f64::min);
            match (sum_free, on.len()) {
                (true, 0) => 0.0,
                (true, _) => hi.abs().max(lo.abs()),
                (false, n) if n < 2 => 0.0,
                (false, _) => hi - lo,
            }
        };
        let on0: Vec<f64> = (0..row0.len()).filter(|&c| row0[c] > 0.0).map(|c| m[c].value).collect();
        let delta = &step.delta;
        let accepted = self.backtrack(
            reach,
            distance(&on0),
            |p, tau| {
                let row = p.row_mut(j);
                for ((v, p0), d) in row.iter_mut().zip(&row0).zip(delta) {
                    let next = p0 + tau * d;
                    *v = if next <= NEGLIGIBLE_POWER_FRAC * p_max { 0.0 } else { next };
                }
                let sum: f64 = row.iter().sum();
                if sum > p_max {
                    row.iter_mut().for_each(|v| *v *= p_max / sum);
                }
                Ok(())
            },
            |p, rep| {
                let on: Vec<f64> = (0..row0.len())
                    .filter(|&c| p.get(j, c) > 0.0)
                    .map(|c| marginal(cl, x, p, &rep.throughput, j, c).map(|v| v.value))
                    .collect::<Result<_>>()?;
                Ok(distance(&on))
            },
        )?;
        let Some(tau) = accepted else { return Ok(false) };
        let moved: f64 = delta.iter().filter(|d| **d > 0.0).sum();
        self.record(j, StepKind::Level, c1, c2, tau * moved, step.level);
        Ok(true)
    }

    fn visit(&mut self, j: usize) -> Result<Visit> {
        let cl = self.cl;
        let z = &cl.backhaul_mbps;
        let eps = self.params.epsilon_f;
        let rbs = cl.dims().rbs;
        let m = marginals_of(cl, self.x, &self.p, &self.rep.throughput, j)?;
        let values: Vec<f64> = m.iter().map(|v| v.value).collect();
        let (c1, c2_min) = match select_rb_pair(j, &values, self.p.row(j)) {
            Ok(pair) => pair,
            Err(_) => {
                self.out.xi[j] = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                return Ok(Visit::Done);
            }
        };
        self.out.saturated[j] = false;
        self.out.blocked[j] = false;
        if c1 == c2_min || values[c1] - values[c2_min] < eps {
            self.out.xi[j] = values[c2_min];
            return Ok(if self.rescale(j, values[c2_min], c2_min, false)? {
                Visit::Stepped
            } else {
                Visit::Done
            });
        }

        if self.p.get(j, c1) > 0.0 && self.level(j, &m, c1, c2_min)? {
            return Ok(Visit::Stepped);
        }

        // donors in ascending order of marginal; the first one that can move power wins
        let mut donors: Vec<usize> = (0..rbs)
            .filter(|&c| self.p.get(j, c) > 0.0 && c != c1 && values[c1] - values[c] >= eps)
            .collect();
        donors.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let slack = self.slack();
        for c2 in donors {
            let mut t = DerivativeTriple::from_marginals(&m[c1], &m[c2]);
            t.f1 += throughput_coupling(cl, self.x, &self.p, &self.rep.throughput, j, c1, c2);
            let p2 = self.p.get(j, c2);
            let mut delta = delta_p_star(&t);
            if delta == 0.0 {
                // the model predicts the gap widens; move half and re-evaluate
                delta = 0.5 * p2;
            }
            let u2 = self.x.user(j, c2);
            let own = self.rep.throughput[u2];
            let served = crate::radio::link_rate(
                &cl.gains,
                &self.p,
                cl.noise_w,
                cl.bandwidth_mhz() / LN_2,
                u2,
                j,
                c2,
            );
            if own - served <= 1e-12 * own {
                // never switch off the only link of a user
                delta = delta.min(0.5 * p2);
            }
            let cap = delta_p_cap(cl, self.x, &self.p, &slack, j, c1, c2);
            let mut delta = delta.min(cap).min(p2);
            if p2 - delta <= NEGLIGIBLE_POWER_FRAC * cl.p_max_w[j] && cap >= p2 {
                // a remainder this small cannot move the utility; drain it
                delta = p2;
            }
            if !(delta > 0.0) {
                continue;
            }
            let (cl, x) = (self.cl, self.x);
            let accepted = self.backtrack(
                delta,
                values[c1] - values[c2],
                |p, d| apply_exchange(p, j, c1, c2, d),
                |p, rep| {
                    if p.get(j, c2) == 0.0 {
                        // a switched-off RB only needs its marginal below the level
                        return Ok(0.0);
                    }
                    let a = marginal(cl, x, p, &rep.throughput, j, c1)?;
                    let b = marginal(cl, x, p, &rep.throughput, j, c2)?;
                    Ok(a.value - b.value)
                },
            )?;
            if let Some(d) = accepted {
                self.record(j, StepKind::Exchange, c1, c2, d, 0.0);
                return Ok(Visit::Stepped);
            }
        }

        // every transfer is blocked by a backhaul limit
        self.out.xi[j] = values[c2_min];
        let own_exhausted = slack[j] <= EXHAUSTED_SLACK_FRAC * z[j];
        if own_exhausted {
            self.out.saturated[j] = true;
            // j cannot raise its own load; only the interference it causes is
            // still priced, and that part is never positive
            let xi = m[c2_min].interference;
            return Ok(if self.rescale(j, xi, c2_min, true)? {
                Visit::Stepped
            } else {
                Visit::Done
            });
        }
        self.out.blocked[j] = true;
        Ok(Visit::Done)
    }
}

/// Power control for a fixed association, starting from a backhaul-feasible `p0`.
///
/// SBSs are visited in order; each keeps transferring power until its RBs are
/// level within `epsilon_f` and its multiplier is non-negative (or it can no
/// longer move). Passes over all SBSs repeat until one changes nothing or the
/// step budget `i_p` runs out.
pub fn run_pc(cl: &Cluster, x: &Assignment, p0: &PowerMatrix, params: PcParams) -> Result<PcResult> {
    let dims = cl.dims();
    let z = &cl.backhaul_mbps;
    let rep = cl.report(x, p0);
    let slack = rep.slack(z);
    if !within_backhaul(&slack, z) {
        return Err(Error::Argument(
            "initial power violates a backhaul limit; restore it first".into(),
        ));
    }
    let mut pc = Pc {
        cl,
        x,
        params,
        p: p0.clone(),
        rep,
        out: PcResult {
            power: p0.clone(),
            xi: vec![0.0; dims.sbs],
            saturated: vec![false; dims.sbs],
            blocked: vec![false; dims.sbs],
            iterations: 0,
            converged: false,
            budget_exhausted: false,
            rejected_steps: 0,
            min_rel_slack: min_rel_slack(&slack, z),
            trace: Vec::new(),
        },
    };
    'passes: loop {
        let mut changed = false;
        for j in 0..dims.sbs {
            loop {
                if pc.out.iterations >= params.i_p {
                    pc.out.budget_exhausted = true;
                    break 'passes;
                }
                match pc.visit(j)? {
                    Visit::Stepped => changed = true,
                    Visit::Done => break,
                }
            }
        }
        if !changed {
            pc.out.converged = true;
            break;
        }
    }
    pc.out.power = pc.p;
    Ok(pc.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::Dims;
    use crate::scenario::{ChannelTensor, ScenarioConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cluster(dims: Dims, backhaul_mbps: f64, gain: impl FnMut(usize, usize, usize) -> f64) -> Cluster {
        let cfg = ScenarioConfig {
            num_users: dims.users,
            num_sbs: dims.sbs,
            num_rbs: dims.rbs,
            backhaul_capacity_bps: crate::scenario::PerSbs::Uniform(backhaul_mbps * 1e6),
            ..ScenarioConfig::default()
        };
        Cluster::with_gains(&cfg, ChannelTensor::from_fn(dims, gain)).unwrap()
    }

    fn random_cluster(seed: u64, dims: Dims, backhaul_mbps: f64) -> Cluster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // roughly 40 to 70 dB SNR at a tenth of a watt per RB
        cluster(dims, backhaul_mbps, |_, _, _| 10f64.powf(rng.random_range(-13.0..-10.0)))
    }

    fn spread(rng: &mut ChaCha8Rng, p_max: &[f64], rbs: usize) -> PowerMatrix {
        let rows = p_max
            .iter()
            .map(|&cap| {
                let w: Vec<f64> = (0..rbs).map(|_| rng.random_range(0.2..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|v| cap * v / s).collect()
            })
            .collect();
        PowerMatrix::from_rows(p_max, rows)
    }

    fn u_at(cl: &Cluster, x: &Assignment, p: &PowerMatrix) -> f64 {
        cl.report(x, p).utility
    }

    #[test]
    fn single_cell_marginal_is_waterfilling_slope() {
        let dims = Dims::new(1, 1, 3);
        let cl = cluster(dims, 1e6, |_, _, c| [1e-11, 3e-12, 5e-13][c]);
        let x = Assignment::filled(dims, 0);
        let p = cl.uniform_power();
        let lam = cl.report(&x, &p).throughput;
        for c in 0..3 {
            let snr = cl.gains.get(0, 0, c) / cl.noise_w;
            let want = cl.bandwidth_mhz() / LN_2 * snr / (1.0 + snr * p.get(0, c)) / lam[0];
            let got = marginal(&cl, &x, &p, &lam, 0, c).unwrap().value;
            assert!((got - want).abs() <= 1e-14 * want);
        }
    }

    #[test]
    fn marginal_matches_central_difference() {
        for seed in 0..20 {
            let dims = Dims::new(4, 3, 4);
            let cl = random_cluster(seed, dims, 1e6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Assignment::from_fn(dims, |_, _| rng.random_range(0..4));
            let p = spread(&mut rng, &cl.p_max_w, 4);
            let lam = cl.report(&x, &p).throughput;
            if lam.iter().any(|&l| l == 0.0) {
                continue;
            }
            for j in 0..3 {
                for c in 0..4 {
                    let h = 1e-6 * p.get(j, c);
                    let (mut up, mut dn) = (p.clone(), p.clone());
                    up.set(j, c, p.get(j, c) + h);
                    dn.set(j, c, p.get(j, c) - h);
                    let fd = (u_at(&cl, &x, &up) - u_at(&cl, &x, &dn)) / (2.0 * h);
                    let m = marginal(&cl, &x, &p, &lam, j, c).unwrap().value;
                    assert!((m - fd).abs() <= 1e-5 * m.abs().max(fd.abs()), "{m} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn marginal_vanishes_at_high_power() {
        let dims = Dims::new(1, 1, 2);
        let cl = cluster(dims, 1e6, |_, _, _| 1e-11);
        let x = Assignment::filled(dims, 0);
        let mut last = f64::INFINITY;
        for k in 0..8 {
            let p = PowerMatrix::from_rows(&[1e12], vec![vec![10f64.powi(k), 1.0]]);
            let lam = cl.report(&x, &p).throughput;
            let m = marginal(&cl, &x, &p, &lam, 0, 0).unwrap().value;
            assert!(m > 0.0 && m < last);
            last = m;
        }
        assert!(last < 1e-7);
    }

    #[test]
    fn starved_user_is_an_error() {
        let dims = Dims::new(2, 1, 2);
        let cl = cluster(dims, 1e6, |_, _, _| 1e-11);
        let x = Assignment::from_slots(dims, vec![0, 1]);
        let p = PowerMatrix::from_rows(&cl.p_max_w, vec![vec![1.0, 0.0]]);
        let lam = cl.report(&x, &p).throughput;
        assert!(matches!(
            marginal(&cl, &x, &p, &lam, 0, 1),
            Err(Error::StarvedUser { user: 1, sbs: 0, rb: 1 })
        ));
    }

    #[test]
    fn pair_selection_examples() {
        assert_eq!(select_rb_pair(0, &[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap(), (0, 1));
        assert_eq!(select_rb_pair(0, &[3.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).unwrap(), (0, 1));
        assert_eq!(select_rb_pair(0, &[3.0, 1.0], &[1.0, 0.0]).unwrap(), (0, 0));
        assert!(matches!(select_rb_pair(4, &[1.0, 2.0], &[0.0, 0.0]), Err(Error::NoDonor(4))));
    }

    #[test]
    fn delta_star_examples() {
        let zero = DerivativeTriple { f: 0.0, f1: -1.0, f2: 3.0 };
        assert_eq!(delta_p_star(&zero), 0.0);

        // symmetric RBs: same user, same SNR, same power
        let dims = Dims::new(1, 1, 2);
        let cl = cluster(dims, 1e6, |_, _, _| 1e-11);
        let x = Assignment::filled(dims, 0);
        let p = cl.uniform_power();
        let lam = cl.report(&x, &p).throughput;
        let t = derivatives(&cl, &x, &p, &lam, 0, 0, 1).unwrap();
        assert_eq!(t.f, 0.0);
        assert_eq!(delta_p_star(&t), 0.0);

        let flat = DerivativeTriple { f: 1.0, f1: 0.0, f2: 0.0 };
        assert_eq!(delta_p_star(&flat), 0.0);
        let linear = DerivativeTriple { f: 2.0, f1: -4.0, f2: 0.0 };
        assert_eq!(delta_p_star(&linear), 0.5);
    }

    #[test]
    fn gap_slope_matches_difference_with_live_throughputs() {
        for seed in 0..20 {
            let dims = Dims::new(4, 3, 4);
            let cl = random_cluster(seed, dims, 1e6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Assignment::from_fn(dims, |_, _| rng.random_range(0..4));
            let p = spread(&mut rng, &cl.p_max_w, 4);
            let (j, c1, c2) = (1, 0, 2);
            let gap = |p: &PowerMatrix| {
                let lam = cl.report(&x, p).throughput;
                let a = marginal(&cl, &x, p, &lam, j, c1).unwrap().value;
                a - marginal(&cl, &x, p, &lam, j, c2).unwrap().value
            };
            let lam = cl.report(&x, &p).throughput;
            let t = derivatives(&cl, &x, &p, &lam, j, c1, c2).unwrap();
            let h = 1e-6 * p.get(j, c2);
            let mut lo = p.clone();
            let mut hi = p.clone();
            apply_exchange(&mut hi, j, c1, c2, h).unwrap();
            apply_exchange(&mut lo, j, c2, c1, h).unwrap();
            let fd = (gap(&hi) - gap(&lo)) / (2.0 * h);
            assert!((fd - t.f1).abs() <= 1e-4 * t.f1.abs().max(1e-9), "seed {seed}: {fd} vs {}", t.f1);
        }
    }

    #[test]
    fn delta_star_solves_quadratic_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        for _ in 0..1000 {
            let t = DerivativeTriple {
                f: rng.random_range(1e-6..1.0),
                f1: -rng.random_range(1e-3..10.0),
                f2: rng.random_range(-10.0..10.0),
            };
            if t.f1 * t.f1 - 2.0 * t.f2 * t.f < 0.0 {
                continue;
            }
            let d = delta_p_star(&t);
            assert!(d > 0.0);
            assert!(t.model(d).abs() <= 1e-10 * t.f, "{t:?} -> {d}");
            checked += 1;
        }
        assert!(checked > 500);
    }

    #[test]
    fn cap_examples() {
        let dims = Dims::new(2, 2, 2);
        let cl = cluster(dims, 50.0, |_, _, _| 1e-11);
        let x = Assignment::from_slots(dims, vec![0, 1, 0, 1]);
        let p = cl.uniform_power();
        let p2 = p.get(0, 1);

        assert_eq!(delta_p_cap(&cl, &x, &p, &[5.0, 0.0], 0, 0, 1), 0.0);
        assert_eq!(delta_p_cap(&cl, &x, &p, &[0.0, 5.0], 0, 0, 1), 0.0);
        assert_eq!(delta_p_cap(&cl, &x, &p, &[1e6, 1e6], 0, 0, 1), p2);

        let w = cl.bandwidth_mhz();
        let got = delta_p_cap(&cl, &x, &p, &[0.1, 0.2], 0, 0, 1);
        let (u, g) = (x.user(0, 0), cl.gains.get(0, 0, 0));
        let level = cl.noise_w + cl.gains.get(u, 1, 0) * p.get(1, 0) + g * p.get(0, 0);
        let want = (p2 * (1.0 - (-0.2 / w).exp2())).min(((0.1 / w).exp2() - 1.0) * level / g);
        assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
    }

    #[test]
    fn cap_from_silent_rb_is_exact() {
        let dims = Dims::new(1, 1, 2);
        let cl = cluster(dims, 3.0, |_, _, c| [1e-11, 2e-12][c]);
        let x = Assignment::filled(dims, 0);
        let p = PowerMatrix::from_rows(&cl.p_max_w, vec![vec![0.0, 1.0]]);
        let slack = cl.report(&x, &p).slack(&cl.backhaul_mbps);
        let cap = delta_p_cap(&cl, &x, &p, &slack, 0, 0, 1);
        assert!(cap > 0.0 && cap < 1.0);
        // filling the silent RB with `cap` uses exactly the remaining slack
        let mut q = p.clone();
        q.set(0, 0, cap);
        let gained = cl.report(&x, &q).load[0] - cl.report(&x, &p).load[0];
        assert!((gained - slack[0]).abs() <= 1e-9 * slack[0]);
    }

    #[test]
    fn exchange_examples() {
        let mut p = PowerMatrix::from_rows(&[1.0], vec![vec![0.25, 0.5, 0.25]]);
        let orig = p.clone();
        apply_exchange(&mut p, 0, 0, 1, 0.0).unwrap();
        assert_eq!(p, orig);
        apply_exchange(&mut p, 0, 2, 1, 0.5).unwrap();
        assert_eq!(p.row(0), &[0.25, 0.0, 0.75]);
        assert!((p.sum(0) - orig.sum(0)).abs() <= 1e-15 * orig.sum(0));
        assert!(apply_exchange(&mut p, 0, 0, 2, 0.8).is_err());
        assert!(apply_exchange(&mut p, 0, 0, 2, -0.1).is_err());
    }

    #[test]
    fn total_power_examples() {
        let mut p = PowerMatrix::from_rows(&[1.0], vec![vec![0.5, 0.0, 0.5]]);
        let applied = adjust_total_power(&mut p, 0, -1.0, 0.1);
        assert!((applied + 0.1).abs() < 1e-15);
        assert_eq!(p.get(0, 1), 0.0);
        assert!((p.get(0, 0) - 0.45).abs() < 1e-15);

        let mut off = PowerMatrix::zeros(&[1.0], 3);
        assert_eq!(adjust_total_power(&mut off, 0, -1.0, 0.1), 0.0);

        let mut drained = PowerMatrix::from_rows(&[1.0], vec![vec![0.5, 0.5]]);
        adjust_total_power(&mut drained, 0, -100.0, 1.0);
        assert_eq!(drained.sum(0), 0.0);
    }

    fn pc_params(i_p: usize) -> PcParams {
        PcParams {
            epsilon_f: 1e-9,
            gamma: 0.5,
            i_p,
        }
    }

    #[test]
    fn level_step_levels_to_second_order() {
        let mut checked = 0;
        for seed in 0..200 {
            // without interference the model is always concave
            let dims = Dims::new(3, 1 + seed as usize % 2, 6);
            let cl = random_cluster(seed, dims, 1e6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Assignment::from_fn(dims, |_, _| rng.random_range(0..3));
            let p = spread(&mut rng, &cl.p_max_w, dims.rbs);
            let lam = cl.report(&x, &p).throughput;
            if lam.contains(&0.0) {
                continue;
            }
            let m = marginals_of(&cl, &x, &p, &lam, 0).unwrap();
            let Some(step) = level_step(&cl, &x, &p, &lam, 0, &m, 1e-9) else { continue };
            if step.sum_free {
                assert!(step.delta.iter().sum::<f64>() < 0.0);
            } else {
                assert!(step.delta.iter().sum::<f64>().abs() <= 1e-12);
            }
            // a small fraction of the step shrinks the spread in proportion
            let spread_at = |tau: f64| {
                let mut q = p.clone();
                for c in 0..dims.rbs {
                    q.set(0, c, p.get(0, c) + tau * step.delta[c]);
                }
                let lq = cl.report(&x, &q).throughput;
                let v: Vec<f64> = marginals_of(&cl, &x, &q, &lq, 0).unwrap().iter().map(|v| v.value).collect();
                v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
            };
            let (s0, s1) = (spread_at(0.0), spread_at(1e-4));
            assert!((s1 / s0 - (1.0 - 1e-4)).abs() < 1e-5, "seed {seed}: {s0} -> {s1}");
            checked += 1;
        }
        assert!(checked >= 60, "{checked}");
    }

    #[test]
    fn symmetric_rbs_split_evenly() {
        let dims = Dims::new(1, 1, 2);
        let cl = cluster(dims, 1e6, |_, _, _| 1e-11);
        let x = Assignment::filled(dims, 0);
        let pm = cl.p_max_w[0];
        let p0 = PowerMatrix::from_rows(&cl.p_max_w, vec![vec![0.8 * pm, 0.2 * pm]]);
        let out = run_pc(&cl, &x, &p0, pc_params(1000)).unwrap();
        assert!(out.converged);
        let p = &out.power;
        assert!((p.get(0, 0) - p.get(0, 1)).abs() <= 1e-6 * pm, "{:?}", p.row(0));
        assert!((p.sum(0) - pm).abs() <= 1e-12 * pm);
    }

    #[test]
    fn slack_backhaul_keeps_some_sbs_at_full_power() {
        for seed in 0..10 {
            let dims = Dims::new(5, 3, 5);
            let cl = random_cluster(seed, dims, 1e6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let x = Assignment::from_fn(dims, |j, c| (j * 5 + c + rng.random_range(0..2)) % 5);
            let out = run_pc(&cl, &x, &cl.uniform_power(), pc_params(100_000)).unwrap();
            assert!(out.converged, "seed {seed}: {} steps, {} rejected, last {:?}", out.iterations, out.rejected_steps, out.trace.iter().rev().take(4).collect::<Vec<_>>());
            let full = (0..3).any(|j| out.power.sum(j) >= (1.0 - 1e-6) * out.power.p_max(j));
            assert!(full, "seed {seed}");
        }
    }

    #[test]
    fn restore_brings_loads_under_limits() {
        for seed in 0..10 {
            let dims = Dims::new(4, 3, 4);
            let cl = random_cluster(seed, dims, 20.0);
            let x = Assignment::from_fn(dims, |j, c| (j + c) % 4);
            let mut p = cl.uniform_power();
            restore_backhaul(&cl, &x, &mut p);
            let rep = cl.report(&x, &p);
            assert!(rep.load.iter().zip(&cl.backhaul_mbps).all(|(l, z)| l <= z));
            assert!(crate::radio::power_violations(&p).is_empty());
        }
    }

    #[test]
    fn tight_backhaul_stays_feasible_and_cuts_power() {
        let mut cut = 0;
        for seed in 0..10 {
            let dims = Dims::new(4, 3, 4);
            let cl = random_cluster(seed, dims, 20.0);
            let x = Assignment::from_fn(dims, |j, c| (j + c) % 4);
            let mut p = cl.uniform_power();
            restore_backhaul(&cl, &x, &mut p);
            let out = run_pc(&cl, &x, &p, pc_params(2000)).unwrap();
            assert!(out.min_rel_slack >= -FEASIBILITY_TOL);
            let rep = cl.report(&x, &out.power);
            assert!(rep
                .slack(&cl.backhaul_mbps)
                .iter()
                .zip(&cl.backhaul_mbps)
                .all(|(l, z)| *l >= -FEASIBILITY_TOL * z));
            if out.trace.iter().any(|r| r.kind == StepKind::Reduce && r.xi < 0.0) {
                cut += 1;
            }
        }
        assert!(cut > 0, "no SBS took the negative-multiplier branch");
    }
}
