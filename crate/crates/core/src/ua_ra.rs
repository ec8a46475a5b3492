//! Cyclic coordinate descent over the association with ζ/ν pricing.
//!
//! Each slot (j, c) goes to the user maximizing `r_ij^c (ζ_ij^c − ν_j)`, where
//! `ζ_ij^c` is the reciprocal of user i's throughput with that slot removed.
//! With ν = 0 this rule accepts a reassignment exactly when it raises the
//! utility, so sweeps climb to an assignment that no single-slot move can
//! improve. ν prices SBS load against its backhaul capacity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{pf_utility, utility, Assignment, RateTensor};

/// Slack on utility comparisons between an assignment and its neighbours.
pub const RING_TOL: f64 = 1e-12;

/// Relative change in ν below which an SBS price counts as settled.
pub const NU_CONV_TOL: f64 = 1e-6;

/// Cap on the ν-fixed sweeps run at the end of each outer iteration.
const MAX_SETTLE_SWEEPS: usize = 1000;

/// Relative overshoot past a ν breakpoint so the allocation actually flips.
const BREAKPOINT_NUDGE: f64 = 1e-9;

/// Per-user throughputs and slot counts kept in step with an assignment.
///
/// ζ is derived from these on demand, so a reassignment only touches the
/// two users involved.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaCache {
    lambda: Vec<f64>,
    held: Vec<usize>,
}

impl ZetaCache {
    pub fn new(x: &Assignment, r: &RateTensor) -> Self {
        let dims = r.dims();
        let mut held = vec![0; dims.users];
        for &u in x.slots() {
            held[u] += 1;
        }
        ZetaCache {
            lambda: utility(x, r).throughput,
            held,
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `1/(λ_i − r_ij^c x_ij^c)`, or `+∞` when that throughput is zero.
    #[inline]
    pub fn zeta(&self, i: usize, j: usize, c: usize, x: &Assignment, r: &RateTensor) -> f64 {
        let rest = if x.user(j, c) == i {
            if self.held[i] == 1 {
                return f64::INFINITY;
            }
            self.lambda[i] - r.get(i, j, c)
        } else {
            self.lambda[i]
        };
        if rest > 0.0 {
            1.0 / rest
        } else {
            f64::INFINITY
        }
    }

    fn reassign(&mut self, j: usize, c: usize, from: usize, to: usize, r: &RateTensor) {
        self.lambda[from] -= r.get(from, j, c);
        self.held[from] -= 1;
        self.lambda[to] += r.get(to, j, c);
        self.held[to] += 1;
    }
}

/// Full ζ tensor recomputed from scratch, indexed like [`RateTensor`].
pub fn zeta_of(x: &Assignment, r: &RateTensor) -> Vec<f64> {
    let dims = r.dims();
    let cache = ZetaCache::new(x, r);
    let mut out = vec![0.0; dims.len()];
    for i in 0..dims.users {
        for j in 0..dims.sbs {
            for c in 0..dims.rbs {
                out[dims.idx(i, j, c)] = cache.zeta(i, j, c, x, r);
            }
        }
    }
    out
}

#[inline]
fn priced(rate: f64, zeta: f64, nu: f64) -> f64 {
    if rate == 0.0 {
        0.0
    } else {
        rate * (zeta - nu)
    }
}

/// The user maximizing `r (ζ − ν_j)` on slot (j, c); ties go to the lowest index.
pub fn allocate_rb(
    j: usize,
    c: usize,
    r: &RateTensor,
    nu_j: f64,
    cache: &ZetaCache,
    x: &Assignment,
) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..r.dims().users {
        let v = priced(r.get(i, j, c), cache.zeta(i, j, c, x, r), nu_j);
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// One pass over the RBs of SBS `j`. Returns whether any slot changed hands.
pub fn sweep_sbs(
    j: usize,
    x: &mut Assignment,
    r: &RateTensor,
    nu: &[f64],
    cache: &mut ZetaCache,
) -> bool {
    let mut changed = false;
    for c in 0..r.dims().rbs {
        let from = x.user(j, c);
        let to = allocate_rb(j, c, r, nu[j], cache, x);
        if to != from {
            cache.reassign(j, c, from, to, r);
            x.set(j, c, to);
            changed = true;
        }
    }
    changed
}

/// One row-major pass over every slot.
///
/// Throughputs are rebuilt from scratch first so rounding in the incremental
/// updates cannot accumulate across sweeps.
pub fn sweep(x: &mut Assignment, r: &RateTensor, nu: &[f64], cache: &mut ZetaCache) -> bool {
    *cache = ZetaCache::new(x, r);
    let mut changed = false;
    for j in 0..r.dims().sbs {
        changed |= sweep_sbs(j, x, r, nu, cache);
    }
    changed
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuUpdate {
    pub iteration: usize,
    pub sbs: usize,
    pub before: f64,
    pub after: f64,
    /// Nearest allocation-changing price on the side the step moves towards.
    pub breakpoint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingState {
    pub nu: Vec<f64>,
    /// Base ν step, 1/(Mbit/s)².
    pub alpha: f64,
    pub history: Vec<NuUpdate>,
}

impl PricingState {
    pub fn new(num_sbs: usize, alpha: f64) -> Self {
        PricingState {
            nu: vec![0.0; num_sbs],
            alpha,
            history: Vec::new(),
        }
    }
}

/// Nearest ν_j at which some slot of SBS `j` would change hands.
///
/// When `raise` is set, the smallest breakpoint above the current price
/// (a lower-rate challenger overtaking the holder); otherwise the largest
/// breakpoint below it (a higher-rate challenger).
pub fn nearest_breakpoint(
    j: usize,
    x: &Assignment,
    r: &RateTensor,
    nu_j: f64,
    cache: &ZetaCache,
    raise: bool,
) -> Option<f64> {
    let dims = r.dims();
    let mut best: Option<f64> = None;
    for c in 0..dims.rbs {
        let holder = x.user(j, c);
        let r0 = r.get(holder, j, c);
        let z0 = cache.zeta(holder, j, c, x, r);
        if !z0.is_finite() {
            continue;
        }
        for i in (0..dims.users).filter(|&i| i != holder) {
            let ri = r.get(i, j, c);
            let zi = cache.zeta(i, j, c, x, r);
            if !zi.is_finite() || (raise && ri >= r0) || (!raise && ri <= r0) {
                continue;
            }
            let beta = (ri * zi - r0 * z0) / (ri - r0);
            if raise && beta > nu_j {
                best = Some(best.map_or(beta, |b: f64| b.min(beta)));
            } else if !raise && beta < nu_j {
                best = Some(best.map_or(beta, |b: f64| b.max(beta)));
            }
        }
    }
    best
}

/// Projected price step for SBS `j` with a step stretched to reach the
/// nearest breakpoint. Returns the new ν_j and records it in `ps.history`.
pub fn nu_step(
    j: usize,
    x: &Assignment,
    r: &RateTensor,
    backhaul_mbps: &[f64],
    ps: &mut PricingState,
    cache: &ZetaCache,
    iteration: usize,
) -> f64 {
    let nu = ps.nu[j];
    let load: f64 = (0..r.dims().rbs).map(|c| r.served(x, j, c)).sum();
    let d = backhaul_mbps[j] - load;
    if d == 0.0 || (d > 0.0 && nu == 0.0) {
        return nu;
    }
    let raise = d < 0.0;
    let breakpoint = nearest_breakpoint(j, x, r, nu, cache, raise);
    let alpha = match breakpoint {
        Some(beta) => {
            let target = if raise {
                beta * (1.0 + BREAKPOINT_NUDGE)
            } else {
                (beta - BREAKPOINT_NUDGE * beta.abs()).max(0.0)
            };
            ps.alpha.max((nu - target).abs() / d.abs())
        }
        None => ps.alpha,
    };
    let after = (nu - alpha * d).max(0.0);
    ps.nu[j] = after;
    ps.history.push(NuUpdate {
        iteration,
        sbs: j,
        before: nu,
        after,
        breakpoint,
    });
    after
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alg1Params {
    /// ζ sweeps per SBS before its price update.
    pub i_zeta: usize,
    /// Outer price iterations.
    pub i_nu: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alg1TraceRow {
    pub iteration: usize,
    pub utility: f64,
    pub load: Vec<f64>,
    pub nu: Vec<f64>,
}

/// Sweeps spent by one SBS in one ζ phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZetaPhase {
    pub iteration: usize,
    pub sbs: usize,
    pub sweeps: usize,
    /// Whether a sweep without changes was observed within the budget.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alg1Result {
    pub assignment: Assignment,
    /// Prices paired with `assignment`; `assignment` is a fixed point of the
    /// allocation rule under these prices whenever `fixed_point` is set.
    pub nu: Vec<f64>,
    pub feasible: bool,
    pub fixed_point: bool,
    /// All prices settled with every backhaul constraint met.
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<Alg1TraceRow>,
    pub zeta_phases: Vec<ZetaPhase>,
    pub nu_updates: Vec<NuUpdate>,
    pub settle_sweeps: usize,
}

fn settle(x: &mut Assignment, r: &RateTensor, nu: &[f64], cache: &mut ZetaCache) -> (bool, usize) {
    for n in 1..=MAX_SETTLE_SWEEPS {
        if !sweep(x, r, nu, cache) {
            return (true, n);
        }
    }
    (false, MAX_SETTLE_SWEEPS)
}

/// Runs the priced coordinate descent from `x0` with ν starting at zero.
///
/// Each outer iteration sweeps every SBS (up to `i_zeta` times, stopping at
/// the first pass without changes) and then updates that SBS's price. The
/// iteration ends with full sweeps at the current prices until nothing moves.
/// The last such fixed point meeting every backhaul limit is returned;
/// otherwise the final iterate is returned with `feasible` unset.
pub fn run_algorithm1(
    r: &RateTensor,
    backhaul_mbps: &[f64],
    x0: &Assignment,
    params: Alg1Params,
) -> Alg1Result {
    assert!(params.i_zeta >= 1 && params.i_nu >= 1, "budgets must be positive");
    let dims = r.dims();
    let mut x = x0.clone();
    let mut ps = PricingState::new(dims.sbs, params.alpha);
    let mut cache = ZetaCache::new(&x, r);
    let mut trace = Vec::new();
    let mut phases = Vec::new();
    let mut settle_total = 0;
    let mut candidate: Option<(Assignment, Vec<f64>)> = None;
    let mut converged = false;
    let mut fixed_point = false;
    let mut iterations = 0;

    for t in 0..params.i_nu {
        iterations = t + 1;
        let nu_before = ps.nu.clone();
        for j in 0..dims.sbs {
            let mut sweeps = 0;
            let mut ok = false;
            while sweeps < params.i_zeta {
                sweeps += 1;
                if !sweep_sbs(j, &mut x, r, &ps.nu, &mut cache) {
                    ok = true;
                    break;
                }
            }
            phases.push(ZetaPhase {
                iteration: t,
                sbs: j,
                sweeps,
                converged: ok,
            });
            nu_step(j, &x, r, backhaul_mbps, &mut ps, &cache, t);
        }
        let (fp, n) = settle(&mut x, r, &ps.nu, &mut cache);
        settle_total += n;
        fixed_point = fp;

        let rep = utility(&x, r);
        let feasible = rep
            .load
            .iter()
            .zip(backhaul_mbps)
            .all(|(l, z)| l <= z);
        trace.push(Alg1TraceRow {
            iteration: t,
            utility: rep.utility,
            load: rep.load,
            nu: ps.nu.clone(),
        });
        if fp && feasible {
            candidate = Some((x.clone(), ps.nu.clone()));
        }
        let settled = ps
            .nu
            .iter()
            .zip(&nu_before)
            .all(|(a, b)| (a - b).abs() <= NU_CONV_TOL * a.max(1.0));
        if settled && feasible && fp {
            converged = true;
            break;
        }
    }

    let (assignment, nu, feasible, fixed_point) = match candidate {
        Some((cx, cnu)) => (cx, cnu, true, true),
        None => (x, ps.nu.clone(), false, fixed_point),
    };
    Alg1Result {
        assignment,
        nu,
        feasible,
        fixed_point,
        converged,
        iterations,
        trace,
        zeta_phases: phases,
        nu_updates: ps.history,
        settle_sweeps: settle_total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingReport {
    pub is_ring: bool,
    /// Largest `U(X') − U(X)` over single-slot reassignments; `-inf` if there
    /// are none.
    pub worst_neighbor_gap: f64,
    pub neighbors: usize,
}

/// Utility change from moving slot (j, c) to user `to`.
///
/// Uses `ln(1 + r_to/λ_to) + ln(1 − r_from/λ_from)` when both throughputs
/// stay positive, which avoids cancellation between two large utilities.
pub fn neighbor_gain(
    x: &Assignment,
    r: &RateTensor,
    lambda: &[f64],
    j: usize,
    c: usize,
    to: usize,
) -> f64 {
    let from = x.user(j, c);
    if from == to {
        return 0.0;
    }
    let (rt, rf) = (r.get(to, j, c), r.get(from, j, c));
    let (lt, lf) = (lambda[to], lambda[from]);
    let base = pf_utility(lambda);
    if base.is_finite() && lf - rf > 0.0 {
        return (rt / lt).ln_1p() + (-rf / lf).ln_1p();
    }
    let mut moved = lambda.to_vec();
    moved[from] = lf - rf;
    moved[to] = lt + rt;
    if rf == lf || moved[from] <= 0.0 {
        moved[from] = 0.0;
    }
    let after = pf_utility(&moved);
    match (base.is_finite(), after.is_finite()) {
        (true, _) => after - base,
        (false, true) => f64::INFINITY,
        (false, false) => 0.0,
    }
}

/// Checks that no single-slot reassignment raises the utility.
pub fn verify_ring_solution(x: &Assignment, r: &RateTensor) -> RingReport {
    let dims = r.dims();
    let lambda = utility(x, r).throughput;
    let mut worst = f64::NEG_INFINITY;
    let mut neighbors = 0;
    for j in 0..dims.sbs {
        for c in 0..dims.rbs {
            for i in (0..dims.users).filter(|&i| i != x.user(j, c)) {
                neighbors += 1;
                worst = worst.max(neighbor_gain(x, r, &lambda, j, c, i));
            }
        }
    }
    RingReport {
        is_ring: worst <= RING_TOL,
        worst_neighbor_gap: worst,
        neighbors,
    }
}

/// `max_j ε_j ν_j` for per-SBS slack ε ≥ 0.
pub fn gap_bound_from_slack(slack: &[f64], nu: &[f64]) -> Result<f64> {
    if let Some((sbs, &s)) = slack.iter().enumerate().find(|(_, s)| **s < 0.0) {
        return Err(Error::InfeasibleForBound { sbs, slack: s });
    }
    Ok(slack
        .iter()
        .zip(nu)
        .map(|(e, n)| e * n)
        .fold(0.0, f64::max))
}

/// Upper bound on the utility any backhaul-feasible single-slot neighbour of
/// a priced fixed point `x` can gain.
pub fn gap_bound(x: &Assignment, r: &RateTensor, backhaul_mbps: &[f64], nu: &[f64]) -> Result<f64> {
    gap_bound_from_slack(&utility(x, r).slack(backhaul_mbps), nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{brute_force, greedy_max_rate};
    use crate::radio::Dims;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rates(seed: u64, dims: Dims) -> RateTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RateTensor::from_fn(dims, |_, _, _| rng.random_range(0.05..2.0))
    }

    fn params(i_zeta: usize, i_nu: usize) -> Alg1Params {
        Alg1Params {
            i_zeta,
            i_nu,
            alpha: 1e-4,
        }
    }

    #[test]
    fn zeta_examples() {
        // user 0 holds only slot (0,0)
        let dims = Dims::new(2, 1, 3);
        let r = RateTensor::from_fn(dims, |i, _, c| [[1.0, 2.0, 2.0], [5.0, 2.0, 2.0]][i][c]);
        let x = Assignment::from_slots(dims, vec![0, 1, 1]);
        let z = zeta_of(&x, &r);
        assert_eq!(z[dims.idx(0, 0, 0)], f64::INFINITY);
        // user 0 elsewhere: λ_0 = 1
        assert_eq!(z[dims.idx(0, 0, 1)], 1.0);

        // user 0 holds rate 1 at (0,0) and 4 elsewhere
        let r = RateTensor::from_fn(dims, |i, _, c| if i == 0 { [1.0, 1.5, 2.5][c] } else { 1.0 });
        let x = Assignment::filled(dims, 0);
        let z = zeta_of(&x, &r);
        assert_eq!(z[dims.idx(0, 0, 0)], 0.25);

        // user 1 holds nothing at (0,0) and has λ = 5
        let r = RateTensor::from_fn(dims, |i, _, c| if i == 1 { [9.0, 2.0, 3.0][c] } else { 1.0 });
        let x = Assignment::from_slots(dims, vec![0, 1, 1]);
        assert_eq!(zeta_of(&x, &r)[dims.idx(1, 0, 0)], 0.2);
    }

    #[test]
    fn allocate_examples() {
        // both users hold another slot with throughput 1, so ζ = 1 for each on (0,0)
        let dims = Dims::new(2, 1, 3);
        let r = RateTensor::from_fn(dims, |i, _, c| match c {
            0 => [2.0, 1.0][i],
            1 => [1.0, 1e-9][i],
            _ => [1e-9, 1.0][i],
        });
        let x = Assignment::from_slots(dims, vec![0, 0, 1]);
        let mut cache = ZetaCache::new(&x, &r);
        // holder's ζ excludes the slot: user 0 has λ − r = 1
        assert_eq!(cache.zeta(0, 0, 0, &x, &r), 1.0);
        assert_eq!(cache.zeta(1, 0, 0, &x, &r), 1.0);
        assert_eq!(allocate_rb(0, 0, &r, 0.0, &cache, &x), 0);
        assert_eq!(allocate_rb(0, 0, &r, 2.0, &cache, &x), 1);

        // user 1 starving: ζ = ∞ wins even at a tiny rate
        let x = Assignment::filled(dims, 0);
        cache = ZetaCache::new(&x, &r);
        assert_eq!(allocate_rb(0, 2, &r, 0.0, &cache, &x), 1);
    }

    #[test]
    fn hand_enumerated_two_by_two() {
        // rates r[i][c] = [[3,1],[2,2]]; the only non-starving optimum is u0 on RB0, u1 on RB1
        let dims = Dims::new(2, 1, 2);
        let r = RateTensor::from_fn(dims, |i, _, c| [[3.0, 1.0], [2.0, 2.0]][i][c]);
        let mut x = Assignment::filled(dims, 0);
        let mut cache = ZetaCache::new(&x, &r);
        while sweep(&mut x, &r, &[0.0], &mut cache) {}
        // user 1 starves at the start and takes RB0; every single move from
        // (u1, u0) starves someone, so it is a ring solution below the optimum
        assert_eq!(x.slots(), &[1, 0]);
        assert!(verify_ring_solution(&x, &r).is_ring);
        for slots in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let y = Assignment::from_slots(dims, slots.to_vec());
            let d = x.hamming(&y);
            if d == 1 {
                assert!(utility(&y, &r).utility <= utility(&x, &r).utility);
            }
        }
        let (best, u) = brute_force(&r, &[1e9], 100).unwrap().best.unwrap();
        assert_eq!(best.slots(), &[0, 1]);
        assert!(utility(&x, &r).utility <= u);
    }

    #[test]
    fn fixed_point_is_left_alone() {
        for seed in 0..20 {
            let r = random_rates(seed, Dims::new(4, 2, 4));
            let mut x = greedy_max_rate(&r);
            let mut cache = ZetaCache::new(&x, &r);
            while sweep(&mut x, &r, &[0.0, 0.0], &mut cache) {}
            let before = x.clone();
            assert!(!sweep(&mut x, &r, &[0.0, 0.0], &mut cache));
            assert_eq!(x, before);
        }
    }

    #[test]
    fn sweeps_increase_utility_until_fixed_point() {
        for seed in 0..50 {
            let dims = Dims::new(5, 2, 5);
            let r = random_rates(seed, dims);
            let mut x = greedy_max_rate(&r);
            let mut cache = ZetaCache::new(&x, &r);
            let mut u = utility(&x, &r).utility;
            while sweep(&mut x, &r, &[0.0, 0.0], &mut cache) {
                let nu = utility(&x, &r).utility;
                assert!(nu > u - 1e-12 || u == f64::NEG_INFINITY, "{nu} < {u}");
                u = nu;
            }
        }
    }

    #[test]
    fn incremental_zeta_matches_recompute() {
        for seed in 0..30 {
            let dims = Dims::new(4, 3, 4);
            let r = random_rates(seed, dims);
            let mut x = greedy_max_rate(&r);
            let mut cache = ZetaCache::new(&x, &r);
            for j in 0..3 {
                sweep_sbs(j, &mut x, &r, &[0.0, 0.1, 0.3], &mut cache);
                let fresh = zeta_of(&x, &r);
                for i in 0..4 {
                    for jj in 0..3 {
                        for c in 0..4 {
                            let a = cache.zeta(i, jj, c, &x, &r);
                            let b = fresh[dims.idx(i, jj, c)];
                            assert!(a == b || (a - b).abs() <= 1e-12 * b.abs());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn nu_step_examples() {
        let dims = Dims::new(2, 1, 2);
        let r = RateTensor::from_fn(dims, |i, _, c| [[3.0, 1.0], [2.0, 2.0]][i][c]);
        let x = Assignment::from_slots(dims, vec![0, 1]);
        let cache = ZetaCache::new(&x, &r);
        let mut ps = PricingState::new(1, 1e-4);
        assert_eq!(nu_step(0, &x, &r, &[10.0], &mut ps, &cache, 0), 0.0);
        assert!(ps.history.is_empty());
        let after = nu_step(0, &x, &r, &[4.0], &mut ps, &cache, 0);
        assert!(after > 0.0);
    }

    #[test]
    fn overload_jumps_to_breakpoint() {
        // holder: r = 2, throughput elsewhere 1 (ζ = 1)
        // challenger: r = 1, λ = 2 (ζ = 0.5)
        // β = (1·0.5 − 2·1)/(1 − 2) = 1.5
        let dims = Dims::new(2, 2, 2);
        let rates = |i: usize, j: usize, c: usize| -> f64 {
            match (i, j, c) {
                (0, 0, 0) => 2.0,
                (1, 0, 0) => 1.0,
                (0, 1, 0) => 1.0,
                (1, 1, 1) => 2.0,
                _ => 1e-12,
            }
        };
        let r = RateTensor::from_fn(dims, rates);
        // user 0 holds (0,0) and (1,0); user 1 holds (0,1) and (1,1)
        let x = Assignment::from_slots(dims, vec![0, 1, 0, 1]);
        let cache = ZetaCache::new(&x, &r);
        assert_eq!(cache.zeta(0, 0, 0, &x, &r), 1.0);
        assert!((cache.zeta(1, 0, 0, &x, &r) - 1.0 / (2.0 + 1e-12)).abs() < 1e-12);
        let beta = nearest_breakpoint(0, &x, &r, 0.0, &cache, true).unwrap();
        assert!((beta - 1.5).abs() < 1e-9, "{beta}");
        let mut ps = PricingState::new(2, 1e-4);
        let after = nu_step(0, &x, &r, &[1.0, 10.0], &mut ps, &cache, 0);
        assert!(after >= 1.5, "{after}");
        let mut cache = cache;
        let mut x2 = x.clone();
        sweep_sbs(0, &mut x2, &r, &ps.nu, &mut cache);
        assert_eq!(x2.user(0, 0), 1);
    }

    #[test]
    fn gap_bound_examples() {
        assert_eq!(gap_bound_from_slack(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gap_bound_from_slack(&[1.0, 2.0], &[0.5, 0.1]).unwrap(), 0.5);
        assert!(matches!(
            gap_bound_from_slack(&[1.0, -0.1], &[0.5, 0.1]),
            Err(Error::InfeasibleForBound { sbs: 1, .. })
        ));
    }

    #[test]
    fn ring_examples() {
        let dims = Dims::new(1, 2, 3);
        let r = random_rates(3, dims);
        let rep = verify_ring_solution(&Assignment::filled(dims, 0), &r);
        assert!(rep.is_ring);
        assert_eq!(rep.neighbors, 0);

        let dims = Dims::new(3, 2, 3);
        let mut perturbed = 0;
        for seed in 0..20 {
            let r = random_rates(seed, dims);
            let out = run_algorithm1(&r, &[1e6, 1e6], &greedy_max_rate(&r), params(10, 10));
            assert!(verify_ring_solution(&out.assignment, &r).is_ring);
            // moving any slot to another user must not help
            let mut x = out.assignment.clone();
            let from = x.user(0, 0);
            x.set(0, 0, (from + 1) % 3);
            let rep = verify_ring_solution(&x, &r);
            if !rep.is_ring {
                assert!(rep.worst_neighbor_gap > 0.0);
                perturbed += 1;
            }
        }
        assert_eq!(perturbed, 20);
    }

    #[test]
    fn huge_backhaul_keeps_prices_zero() {
        let dims = Dims::new(6, 3, 6);
        for seed in 0..20 {
            let r = random_rates(seed, dims);
            let out = run_algorithm1(&r, &[1e6; 3], &greedy_max_rate(&r), params(10, 400));
            assert!(out.nu.iter().all(|&n| n == 0.0));
            assert!(out.converged && out.feasible);
            assert_eq!(out.iterations, 1);
            assert!(verify_ring_solution(&out.assignment, &r).is_ring);
        }
    }

    #[test]
    fn budget_accounting() {
        let dims = Dims::new(4, 2, 4);
        let r = random_rates(5, dims);
        let out = run_algorithm1(&r, &[0.5, 0.5], &greedy_max_rate(&r), params(1, 1));
        assert_eq!(out.iterations, 1);
        assert_eq!(out.zeta_phases.len(), 2);
        assert!(out.zeta_phases.iter().all(|p| p.sweeps == 1));
        assert_eq!(out.nu_updates.len(), 2);
    }

    #[test]
    fn tight_backhaul_lowers_load_after_price_rise() {
        let dims = Dims::new(4, 1, 6);
        let r = random_rates(8, dims);
        let greedy_load = utility(&greedy_max_rate(&r), &r).load[0];
        let z = 0.6 * greedy_load;
        let out = run_algorithm1(&r, &[z], &greedy_max_rate(&r), params(10, 400));
        let first = &out.trace[0];
        assert!(first.nu[0] > 0.0);
        assert!(first.load[0] < greedy_load);
        let rising: Vec<_> = out.trace.windows(2).filter(|w| w[1].nu[0] > w[0].nu[0]).collect();
        assert!(rising.iter().all(|w| w[1].load[0] <= w[0].load[0]));
        if out.feasible {
            assert!(utility(&out.assignment, &r).load[0] <= z);
        }
    }

    proptest! {
        #[test]
        fn unpriced_output_is_ring(seed in 0u64..100_000, n in 1usize..=6, j in 1usize..=3, c in 1usize..=6) {
            let r = random_rates(seed, Dims::new(n, j, c));
            let out = run_algorithm1(&r, &vec![1e6; j], &greedy_max_rate(&r), params(10, 400));
            prop_assert!(verify_ring_solution(&out.assignment, &r).is_ring);
        }

        #[test]
        fn priced_fixed_point_respects_gap_bound(seed in 0u64..100_000, frac in 0.3f64..0.9) {
            let dims = Dims::new(4, 2, 4);
            let r = random_rates(seed, dims);
            let g = utility(&greedy_max_rate(&r), &r).load;
            let z: Vec<f64> = g.iter().map(|l| l * frac).collect();
            let out = run_algorithm1(&r, &z, &greedy_max_rate(&r), params(10, 200));
            prop_assume!(out.feasible);
            let x = &out.assignment;
            let bound = gap_bound(x, &r, &z, &out.nu).unwrap();
            let lambda = utility(x, &r).throughput;
            for jj in 0..2 {
                for cc in 0..4 {
                    for i in 0..4 {
                        let mut y = x.clone();
                        y.set(jj, cc, i);
                        let load = utility(&y, &r).load;
                        if load.iter().zip(&z).all(|(l, zz)| l <= zz) {
                            let gain = neighbor_gain(x, &r, &lambda, jj, cc, i);
                            prop_assert!(gain <= bound + RING_TOL, "{gain} > {bound}");
                        }
                    }
                }
            }
        }
    }
}
