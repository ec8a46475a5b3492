//! Reference methods: max-rate greedy, exhaustive search and a genetic algorithm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radio::{pf_utility, utility, Assignment, RateTensor};

/// Default cap on the number of assignments [`brute_force`] will cover.
pub const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

/// Each slot to its highest-rate user; ties go to the lowest index.
pub fn greedy_max_rate(r: &RateTensor) -> Assignment {
    let dims = r.dims();
    Assignment::from_fn(dims, |j, c| {
        let mut best = 0;
        for i in 1..dims.users {
            if r.get(i, j, c) > r.get(best, j, c) {
                best = i;
            }
        }
        best
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Best backhaul-feasible assignment and its utility, if any is feasible.
    pub best: Option<(Assignment, f64)>,
    /// Assignments covered, either evaluated or excluded with their subtree.
    pub num_enumerated: u64,
    /// Assignments evaluated at a leaf.
    pub num_evaluated: u64,
    /// Assignments excluded because a prefix already exceeds some backhaul limit.
    pub num_infeasible_pruned: u64,
    /// Assignments excluded because their utility bound cannot beat the incumbent.
    pub num_bound_pruned: u64,
}

struct Search<'a> {
    r: &'a RateTensor,
    z_tol: Vec<f64>,
    /// `suffix[s * N + i]`: rate user i could collect on slots s.. at most.
    suffix: Vec<f64>,
    /// `count[s]`: number of completions of a prefix of length s.
    count: Vec<u64>,
    /// Throughputs after each prefix length, `N` entries per level.
    lambda: Vec<f64>,
    /// Loads after each prefix length, `J` entries per level.
    load: Vec<f64>,
    slots: Vec<usize>,
    best: Option<(Vec<usize>, f64)>,
    out: OracleResult,
}

impl Search<'_> {
    fn rate(&self, s: usize, i: usize) -> f64 {
        let rbs = self.r.dims().rbs;
        self.r.get(i, s / rbs, s % rbs)
    }

    fn visit(&mut self, s: usize) {
        let dims = self.r.dims();
        let (n, nj) = (dims.users, dims.sbs);
        let lam = s * n;
        if s == dims.slots() {
            self.out.num_enumerated += 1;
            self.out.num_evaluated += 1;
            let u = pf_utility(&self.lambda[lam..lam + n]);
            if self.best.as_ref().is_none_or(|(_, b)| u > *b) {
                self.best = Some((self.slots.clone(), u));
            }
            return;
        }
        if let Some((_, b)) = &self.best {
            let ub = pf_utility(
                &(0..n)
                    .map(|i| self.lambda[lam + i] + self.suffix[s * n + i])
                    .collect::<Vec<_>>(),
            );
            // a later leaf only replaces the incumbent when strictly better
            if ub <= *b && b.is_finite() {
                self.out.num_enumerated += self.count[s];
                self.out.num_bound_pruned += self.count[s];
                return;
            }
        }
        let j = s / dims.rbs;
        for i in 0..n {
            let rate = self.rate(s, i);
            let load = self.load[s * nj + j] + rate;
            if load > self.z_tol[j] {
                self.out.num_enumerated += self.count[s + 1];
                self.out.num_infeasible_pruned += self.count[s + 1];
                continue;
            }
            self.lambda.copy_within(lam..lam + n, lam + n);
            self.lambda[lam + n + i] += rate;
            self.load.copy_within(s * nj..(s + 1) * nj, (s + 1) * nj);
            self.load[(s + 1) * nj + j] = load;
            self.slots[s] = i;
            self.visit(s + 1);
        }
    }
}

/// Exhaustive search for the best backhaul-feasible assignment.
///
/// Slots are assigned in row-major order with users ascending, so the search
/// runs in lexicographic order and keeps the first assignment reaching the
/// best utility. Subtrees whose prefix already breaks a backhaul limit, or
/// whose optimistic utility cannot beat the incumbent, are skipped whole.
/// Backhaul is checked with relative tolerance [`crate::radio::FEASIBILITY_TOL`].
pub fn brute_force(r: &RateTensor, backhaul_mbps: &[f64], limit: u64) -> Result<OracleResult> {
    let dims = r.dims();
    let needed = (dims.users as f64).powi(dims.slots() as i32);
    if needed > limit as f64 {
        return Err(Error::SearchTooLarge { needed, limit });
    }
    let slots = dims.slots();
    let n = dims.users;
    let mut suffix = vec![0.0; (slots + 1) * n];
    for s in (0..slots).rev() {
        for i in 0..n {
            let (j, c) = (s / dims.rbs, s % dims.rbs);
            suffix[s * n + i] = suffix[(s + 1) * n + i] + r.get(i, j, c);
        }
    }
    let count = (0..=slots)
        .map(|s| (n as u64).pow((slots - s) as u32))
        .collect();
    let mut search = Search {
        r,
        z_tol: backhaul_mbps
            .iter()
            .map(|z| z * (1.0 + crate::radio::FEASIBILITY_TOL))
            .collect(),
        suffix,
        count,
        lambda: vec![0.0; (slots + 1) * n],
        load: vec![0.0; (slots + 1) * dims.sbs],
        slots: vec![0; slots],
        best: None,
        out: OracleResult {
            best: None,
            num_enumerated: 0,
            num_evaluated: 0,
            num_infeasible_pruned: 0,
            num_bound_pruned: 0,
        },
    };
    search.visit(0);
    let mut out = search.out;
    out.best = search
        .best
        .map(|(s, u)| (Assignment::from_slots(dims, s), u));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population: usize,
    pub crossover_fraction: f64,
    pub max_generations: usize,
    pub elite: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population: 100,
            crossover_fraction: 0.8,
            max_generations: 1000,
            elite: 50,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub assignment: Assignment,
    pub utility: f64,
    /// Best fitness in the population after each generation; entry 0 is the
    /// initial population.
    pub best_per_generation: Vec<f64>,
}

fn tournament(rng: &mut ChaCha8Rng, fitness: &[f64]) -> usize {
    let a = rng.random_range(0..fitness.len());
    let b = rng.random_range(0..fitness.len());
    if fitness[b] > fitness[a] {
        b
    } else {
        a
    }
}

/// Genetic search over assignments at fixed rates, ignoring backhaul.
///
/// A chromosome is the user index of every slot. Each generation keeps the
/// `elite` fittest, fills `round(crossover_fraction · (population − elite))`
/// slots with uniform-crossover children of two tournament winners, and the
/// rest with mutated copies (per-gene rate `1/(J·C)`).
pub fn genetic_opt(r: &RateTensor, params: &GaParams) -> Result<GaResult> {
    if params.population == 0 || params.elite > params.population {
        return Err(Error::Argument(format!(
            "GA needs a positive population and elite <= population, got elite {} population {}",
            params.elite, params.population
        )));
    }
    if !(0.0..=1.0).contains(&params.crossover_fraction) {
        return Err(Error::Argument("crossover fraction must lie in [0, 1]".into()));
    }
    let dims = r.dims();
    let genes = dims.slots();
    let mutation_rate = 1.0 / genes as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let fit = |g: &[usize]| utility(&Assignment::from_slots(dims, g.to_vec()), r).utility;

    let mut pop: Vec<Vec<usize>> = (0..params.population)
        .map(|_| (0..genes).map(|_| rng.random_range(0..dims.users)).collect())
        .collect();
    let mut fitness: Vec<f64> = pop.iter().map(|g| fit(g)).collect();
    let n_free = params.population - params.elite;
    let n_cross = (params.crossover_fraction * n_free as f64).round() as usize;
    let mut history = Vec::with_capacity(params.max_generations + 1);

    let rank = |fitness: &[f64]| {
        let mut order: Vec<usize> = (0..fitness.len()).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        order
    };
    let mut order = rank(&fitness);
    history.push(fitness[order[0]]);

    for _ in 0..params.max_generations {
        let mut next: Vec<Vec<usize>> = order[..params.elite].iter().map(|&k| pop[k].clone()).collect();
        let mut next_fit: Vec<f64> = order[..params.elite].iter().map(|&k| fitness[k]).collect();
        for k in 0..n_free {
            let child: Vec<usize> = if k < n_cross {
                let a = &pop[tournament(&mut rng, &fitness)];
                let b = &pop[tournament(&mut rng, &fitness)];
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| if rng.random_bool(0.5) { x } else { y })
                    .collect()
            } else {
                let mut g = pop[tournament(&mut rng, &fitness)].clone();
                for gene in g.iter_mut() {
                    if rng.random_bool(mutation_rate) {
                        *gene = rng.random_range(0..dims.users);
                    }
                }
                g
            };
            next_fit.push(fit(&child));
            next.push(child);
        }
        pop = next;
        fitness = next_fit;
        order = rank(&fitness);
        history.push(fitness[order[0]]);
    }
    let best = order[0];
    Ok(GaResult {
        assignment: Assignment::from_slots(dims, pop[best].clone()),
        utility: fitness[best],
        best_per_generation: history,
    })
}
