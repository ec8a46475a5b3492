//! Shannon rates, per-user throughputs, proportional-fairness utility,
//! backhaul loads and feasibility predicates.

use serde::{Deserialize, Serialize};

use crate::scenario::ChannelTensor;

/// Relative tolerance on backhaul and sum-power constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Relative slack allowed on the per-SBS sum-power cap.
pub const POWER_CAP_TOL: f64 = 1e-12;

/// Problem dimensions: `N` users, `J` SBSs, `C` RBs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub users: usize,
    pub sbs: usize,
    pub rbs: usize,
}

impl Dims {
    pub const fn new(users: usize, sbs: usize, rbs: usize) -> Self {
        Dims { users, sbs, rbs }
    }

    /// Number of (user, SBS, RB) triples.
    pub fn len(&self) -> usize {
        self.users * self.sbs * self.rbs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of (SBS, RB) slots.
    pub fn slots(&self) -> usize {
        self.sbs * self.rbs
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.sbs + j) * self.rbs + c
    }

    #[inline]
    pub fn slot(&self, j: usize, c: usize) -> usize {
        j * self.rbs + c
    }
}

/// Transmit power per (SBS, RB) in watts, with per-SBS sum caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMatrix {
    num_rbs: usize,
    p: Vec<f64>,
    p_max: Vec<f64>,
}

impl PowerMatrix {
    pub fn zeros(p_max: &[f64], num_rbs: usize) -> Self {
        PowerMatrix {
            num_rbs,
            p: vec![0.0; p_max.len() * num_rbs],
            p_max: p_max.to_vec(),
        }
    }

    pub fn uniform(p_max: &[f64], num_rbs: usize) -> Self {
        let mut m = Self::zeros(p_max, num_rbs);
        for (j, &cap) in p_max.iter().enumerate() {
            m.row_mut(j).fill(cap / num_rbs as f64);
        }
        m
    }

    /// Builds a matrix from row-major values (`J` rows of `C` entries).
    pub fn from_rows(p_max: &[f64], rows: Vec<Vec<f64>>) -> Self {
        let num_rbs = rows.first().map_or(0, Vec::len);
        assert_eq!(rows.len(), p_max.len(), "one row per SBS");
        assert!(rows.iter().all(|r| r.len() == num_rbs), "ragged power rows");
        PowerMatrix {
            num_rbs,
            p: rows.into_iter().flatten().collect(),
            p_max: p_max.to_vec(),
        }
    }

    pub fn num_sbs(&self) -> usize {
        self.p_max.len()
    }

    pub fn num_rbs(&self) -> usize {
        self.num_rbs
    }

    #[inline]
    pub fn get(&self, j: usize, c: usize) -> f64 {
        self.p[j * self.num_rbs + c]
    }

    #[inline]
    pub fn set(&mut self, j: usize, c: usize, v: f64) {
        self.p[j * self.num_rbs + c] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.p[j * self.num_rbs..(j + 1) * self.num_rbs]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.p[j * self.num_rbs..(j + 1) * self.num_rbs]
    }

    pub fn sum(&self, j: usize) -> f64 {
        self.row(j).iter().sum()
    }

    pub fn p_max(&self, j: usize) -> f64 {
        self.p_max[j]
    }

    pub fn p_max_all(&self) -> &[f64] {
        &self.p_max
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// The association indicator: exactly one user per (SBS, RB).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    dims: Dims,
    user_of: Vec<usize>,
}

impl Assignment {
    /// Every slot to the same user.
    pub fn filled(dims: Dims, user: usize) -> Self {
        assert!(user < dims.users);
        Assignment {
            dims,
            user_of: vec![user; dims.slots()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let mut user_of = Vec::with_capacity(dims.slots());
        for j in 0..dims.sbs {
            for c in 0..dims.rbs {
                let u = f(j, c);
                assert!(u < dims.users, "user index {u} out of range");
                user_of.push(u);
            }
        }
        Assignment { dims, user_of }
    }

    /// Builds from a row-major slot vector (slot = j*C + c).
    pub fn from_slots(dims: Dims, user_of: Vec<usize>) -> Self {
        assert_eq!(user_of.len(), dims.slots());
        assert!(user_of.iter().all(|&u| u < dims.users));
        Assignment { dims, user_of }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn user(&self, j: usize, c: usize) -> usize {
        self.user_of[self.dims.slot(j, c)]
    }

    #[inline]
    pub fn set(&mut self, j: usize, c: usize, user: usize) {
        debug_assert!(user < self.dims.users);
        let s = self.dims.slot(j, c);
        self.user_of[s] = user;
    }

    pub fn slots(&self) -> &[usize] {
        &self.user_of
    }

    /// Number of (SBS, RB) slots where `self` and `other` differ.
    pub fn hamming(&self, other: &Assignment) -> usize {
        self.user_of
            .iter()
            .zip(&other.user_of)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Achievable rate of every (user, SBS, RB) triple in Mbit/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTensor {
    dims: Dims,
    r: Vec<f64>,
}

impl RateTensor {
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut r = Vec::with_capacity(dims.len());
        for i in 0..dims.users {
            for j in 0..dims.sbs {
                for c in 0..dims.rbs {
                    r.push(f(i, j, c));
                }
            }
        }
        RateTensor { dims, r }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.r[self.dims.idx(i, j, c)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.r
    }

    /// Rate of the user that `x` places on slot (j, c).
    #[inline]
    pub fn served(&self, x: &Assignment, j: usize, c: usize) -> f64 {
        self.get(x.user(j, c), j, c)
    }

    /// Largest rate any user could get on slot (j, c).
    pub fn max_on_slot(&self, j: usize, c: usize) -> f64 {
        (0..self.dims.users)
            .map(|i| self.get(i, j, c))
            .fold(0.0, f64::max)
    }
}

/// Rate of user `i` on slot (j, c) in Mbit/s; `w_ln2` is the bandwidth in MHz
/// divided by ln 2.
#[inline]
pub(crate) fn link_rate(
    h: &ChannelTensor,
    p: &PowerMatrix,
    noise_w: f64,
    w_ln2: f64,
    i: usize,
    j: usize,
    c: usize,
) -> f64 {
    let pj = p.get(j, c);
    if pj <= 0.0 {
        return 0.0;
    }
    let interference: f64 = (0..p.num_sbs())
        .filter(|&k| k != j)
        .map(|k| h.get(i, k, c) * p.get(k, c))
        .sum();
    w_ln2 * (h.get(i, j, c) * pj / (noise_w + interference)).ln_1p()
}

/// Rates for all users on all slots under power `p`.
///
/// `r = W log2(1 + g p / (σ² + Σ_{k≠j} g_k p_k))`, returned in Mbit/s for a
/// bandwidth `bandwidth_hz` given in Hz.
pub fn compute_rates(
    h: &ChannelTensor,
    p: &PowerMatrix,
    noise_w: f64,
    bandwidth_hz: f64,
) -> RateTensor {
    let dims = h.dims();
    assert_eq!(p.num_sbs(), dims.sbs);
    assert_eq!(p.num_rbs(), dims.rbs);
    let w_ln2 = bandwidth_hz / 1e6 / std::f64::consts::LN_2;
    RateTensor::from_fn(dims, |i, j, c| link_rate(h, p, noise_w, w_ln2, i, j, c))
}

/// Utility report of `x` under power `p`, evaluating only the served links.
///
/// Equal to `utility(x, &compute_rates(..))` bit for bit.
pub fn served_utility(
    h: &ChannelTensor,
    x: &Assignment,
    p: &PowerMatrix,
    noise_w: f64,
    bandwidth_hz: f64,
) -> UtilityReport {
    let dims = h.dims();
    let w_ln2 = bandwidth_hz / 1e6 / std::f64::consts::LN_2;
    let mut throughput = vec![0.0; dims.users];
    let mut load = vec![0.0; dims.sbs];
    for j in 0..dims.sbs {
        for c in 0..dims.rbs {
            let u = x.user(j, c);
            let rate = link_rate(h, p, noise_w, w_ln2, u, j, c);
            throughput[u] += rate;
            load[j] += rate;
        }
    }
    UtilityReport {
        utility: pf_utility(&throughput),
        throughput,
        load,
    }
}

/// Throughputs, utility and backhaul loads of one (X, P) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    /// λ_i in Mbit/s.
    pub throughput: Vec<f64>,
    /// Σ ln λ_i in nats, or `-inf` if any user has zero throughput.
    pub utility: f64,
    /// Σ of served rates per SBS in Mbit/s.
    pub load: Vec<f64>,
}

impl UtilityReport {
    /// Remaining backhaul capacity `Z_j - load_j` per SBS.
    pub fn slack(&self, backhaul_mbps: &[f64]) -> Vec<f64> {
        backhaul_mbps
            .iter()
            .zip(&self.load)
            .map(|(z, l)| z - l)
            .collect()
    }
}

/// Proportional-fairness utility `Σ ln λ_i`; `-inf` when a user is starved.
pub fn pf_utility(throughput: &[f64]) -> f64 {
    if throughput.iter().any(|&l| l <= 0.0) {
        return f64::NEG_INFINITY;
    }
    throughput.iter().map(|l| l.ln()).sum()
}

pub fn utility(x: &Assignment, r: &RateTensor) -> UtilityReport {
    let dims = r.dims();
    assert_eq!(x.dims(), dims);
    let mut throughput = vec![0.0; dims.users];
    let mut load = vec![0.0; dims.sbs];
    for j in 0..dims.sbs {
        for c in 0..dims.rbs {
            let u = x.user(j, c);
            let rate = r.get(u, j, c);
            throughput[u] += rate;
            load[j] += rate;
        }
    }
    UtilityReport {
        utility: pf_utility(&throughput),
        throughput,
        load,
    }
}

pub fn backhaul_slack(x: &Assignment, r: &RateTensor, backhaul_mbps: &[f64]) -> Vec<f64> {
    utility(x, r).slack(backhaul_mbps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Backhaul { sbs: usize, slack_mbps: f64 },
    NegativePower { sbs: usize, rb: usize, power_w: f64 },
    SumPower { sbs: usize, total_w: f64, max_w: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Power constraints only: non-negativity and per-SBS sum caps.
pub fn power_violations(p: &PowerMatrix) -> Vec<Violation> {
    let mut out = Vec::new();
    for j in 0..p.num_sbs() {
        for (c, &v) in p.row(j).iter().enumerate() {
            if !(v >= 0.0) {
                out.push(Violation::NegativePower {
                    sbs: j,
                    rb: c,
                    power_w: v,
                });
            }
        }
        let total = p.sum(j);
        if total > p.p_max(j) * (1.0 + POWER_CAP_TOL) {
            out.push(Violation::SumPower {
                sbs: j,
                total_w: total,
                max_w: p.p_max(j),
            });
        }
    }
    out
}

/// Checks backhaul (relative tolerance [`FEASIBILITY_TOL`]) and power constraints.
pub fn is_feasible(
    x: &Assignment,
    r: &RateTensor,
    backhaul_mbps: &[f64],
    p: &PowerMatrix,
) -> Feasibility {
    let mut violations = Vec::new();
    for (j, (slack, z)) in backhaul_slack(x, r, backhaul_mbps)
        .into_iter()
        .zip(backhaul_mbps)
        .enumerate()
    {
        if slack < -FEASIBILITY_TOL * z {
            violations.push(Violation::Backhaul {
                sbs: j,
                slack_mbps: slack,
            });
        }
    }
    violations.extend(power_violations(p));
    Feasibility {
        feasible: violations.is_empty(),
        violations,
    }
}
