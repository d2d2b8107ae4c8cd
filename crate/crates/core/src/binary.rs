//! Binary offloading: every task runs wholly on the device or wholly at the
//! edge server.
//!
//! All methods work on subproblems with two disjoint locked sets, `K0`
//! (local) and `K1` (offload). A [`SubproblemSolver`] provides the fixed
//! and relaxed versions of those subproblems; the NOMA solver lives here and
//! the TDMA one in [`crate::benchmarks`].

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{check_profiles, SystemConfig, UserProfile};
use crate::partial::{solve_bounded, solve_bounded_from, Bounds, OffloadSolution, P1Settings};
use crate::scalar::Scalar;

/// Relative optimality gap at which branch-and-bound stops.
pub const DEFAULT_GAP: f64 = 1e-3;
/// Primal–dual accuracy of the inner convex solves.
pub const DEFAULT_INNER_EPSILON: f64 = 1e-4;
pub const DEFAULT_NODE_BUDGET: usize = 100_000;
pub const MAX_BNB_USERS: usize = 20;
pub const MAX_EXHAUSTIVE_USERS: usize = 12;

/// Users locked to local computing (`K0`) and to offloading (`K1`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionSets {
    locked_local: BTreeSet<usize>,
    locked_offload: BTreeSet<usize>,
}

impl DecisionSets {
    pub fn new(
        local: impl IntoIterator<Item = usize>,
        offload: impl IntoIterator<Item = usize>,
        users: usize,
    ) -> Result<Self> {
        let locked_local: BTreeSet<usize> = local.into_iter().collect();
        let locked_offload: BTreeSet<usize> = offload.into_iter().collect();
        if let Some(k) = locked_local.intersection(&locked_offload).next() {
            return Err(domain(format!(
                "user {k} is locked both local and offloading"
            )));
        }
        if let Some(k) = locked_local
            .iter()
            .chain(&locked_offload)
            .find(|k| **k >= users)
        {
            return Err(domain(format!("user {k} out of range for {users} users")));
        }
        Ok(Self {
            locked_local,
            locked_offload,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Full partition from offloading decisions.
    pub fn from_decisions(offload: &[bool]) -> Self {
        let (on, off): (Vec<usize>, Vec<usize>) = (0..offload.len()).partition(|k| offload[*k]);
        Self {
            locked_local: off.into_iter().collect(),
            locked_offload: on.into_iter().collect(),
        }
    }

    pub fn locked_local(&self) -> &BTreeSet<usize> {
        &self.locked_local
    }

    pub fn locked_offload(&self) -> &BTreeSet<usize> {
        &self.locked_offload
    }

    /// Unlocked users in increasing order.
    pub fn free(&self, users: usize) -> Vec<usize> {
        (0..users)
            .filter(|k| !self.locked_local.contains(k) && !self.locked_offload.contains(k))
            .collect()
    }

    pub fn is_full(&self, users: usize) -> bool {
        self.locked_local.len() + self.locked_offload.len() == users
    }

    pub fn with_local(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.locked_offload.remove(&k);
        s.locked_local.insert(k);
        s
    }

    pub fn with_offload(&self, k: usize) -> Self {
        let mut s = self.clone();
        s.locked_local.remove(&k);
        s.locked_offload.insert(k);
        s
    }

    /// `ξ_k = 1` for locked offloaders, else 0.
    pub fn decisions(&self, users: usize) -> Vec<bool> {
        (0..users)
            .map(|k| self.locked_offload.contains(&k))
            .collect()
    }

    /// Per-user offload bounds: `{0}`, `{L_k}` or `[0, L_k]`.
    pub fn bounds<T: Scalar>(&self, profiles: &[UserProfile<T>]) -> Vec<Bounds<T>> {
        profiles
            .iter()
            .enumerate()
            .map(|(k, u)| {
                if self.locked_local.contains(&k) {
                    Bounds::local(u)
                } else if self.locked_offload.contains(&k) {
                    Bounds::offload(u)
                } else {
                    Bounds::free(u)
                }
            })
            .collect()
    }
}

/// Rounds a fractional decision: `ξ̃_k ≥ 0.5` offloads.
pub fn round_decision<T: Scalar>(xi: &[T]) -> DecisionSets {
    let half = T::lit(0.5);
    DecisionSets::from_decisions(&xi.iter().map(|x| *x >= half).collect::<Vec<_>>())
}

/// Most undecided free user, `argmin |ξ̃_k − ½|`, lowest index on ties.
pub fn branch_select<T: Scalar>(xi: &[T], free: &[usize]) -> Result<usize> {
    let half = T::lit(0.5);
    let mut best: Option<(usize, T)> = None;
    let mut sorted = free.to_vec();
    sorted.sort_unstable();
    for k in sorted {
        let x = *xi
            .get(k)
            .ok_or_else(|| domain(format!("free user {k} has no relaxed decision")))?;
        let d = (x - half).abs();
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| domain("no free user to branch on"))
}

/// Relaxed subproblem result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar, S: Serialize + serde::de::DeserializeOwned")]
pub struct Relaxed<T, S> {
    /// Energy of the recovered relaxed primal.
    pub value: T,
    /// Certified lower bound on the relaxed optimum.
    pub lower_bound: T,
    /// `ξ̃_k = ℓ_k / L_k`.
    pub xi: Vec<T>,
    pub solution: S,
}

/// Inner convex problems for a fixed multiple-access scheme.
pub trait SubproblemSolver<T: Scalar> {
    type Solution: Clone;

    fn profiles(&self) -> &[UserProfile<T>];

    /// Optimum of the subproblem with every user locked.
    fn solve_fixed(&self, sets: &DecisionSets) -> Result<(T, Self::Solution)>;

    /// [`Self::solve_fixed`] started from a nearby solution, such as the
    /// relaxation the partition was rounded from.
    fn solve_fixed_near(
        &self,
        sets: &DecisionSets,
        _near: &Self::Solution,
    ) -> Result<(T, Self::Solution)> {
        self.solve_fixed(sets)
    }

    /// Continuous relaxation with the free users' decisions in `[0, 1]`.
    fn solve_relaxed(&self, sets: &DecisionSets) -> Result<Relaxed<T, Self::Solution>>;
}

/// NOMA subproblems solved by the partial-offloading dual method.
#[derive(Debug, Clone)]
pub struct NomaSubproblem<'a, T> {
    pub profiles: &'a [UserProfile<T>],
    pub config: &'a SystemConfig<T>,
    pub settings: P1Settings<T>,
}

impl<T: Scalar> SubproblemSolver<T> for NomaSubproblem<'_, T> {
    type Solution = OffloadSolution<T>;

    fn profiles(&self) -> &[UserProfile<T>] {
        self.profiles
    }

    fn solve_fixed(&self, sets: &DecisionSets) -> Result<(T, OffloadSolution<T>)> {
        let sol = solve_sp(sets, self.profiles, self.config, &self.settings)?;
        Ok((sol.weighted_total, sol))
    }

    fn solve_fixed_near(
        &self,
        sets: &DecisionSets,
        near: &OffloadSolution<T>,
    ) -> Result<(T, OffloadSolution<T>)> {
        if !sets.is_full(self.profiles.len()) {
            return Err(domain("fixed subproblem needs every user locked"));
        }
        let bounds = sets.bounds(self.profiles);
        let sol = solve_bounded_from(
            self.profiles,
            self.config,
            &bounds,
            &self.settings,
            &near.report.dual,
        )?;
        Ok((sol.weighted_total, sol))
    }

    fn solve_relaxed(&self, sets: &DecisionSets) -> Result<Relaxed<T, OffloadSolution<T>>> {
        solve_sp_relaxed(sets, self.profiles, self.config, &self.settings)
    }
}

/// SP(K0, K1) for a full partition: `ℓ_k = 0` on `K0`, `ℓ_k = L_k` on `K1`.
pub fn solve_sp<T: Scalar>(
    sets: &DecisionSets,
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    settings: &P1Settings<T>,
) -> Result<OffloadSolution<T>> {
    if !sets.is_full(profiles.len()) {
        return Err(domain("fixed subproblem needs every user locked"));
    }
    solve_bounded(profiles, config, &sets.bounds(profiles), settings)
}

/// Continuous relaxation of SP(K0, K1).
pub fn solve_sp_relaxed<T: Scalar>(
    sets: &DecisionSets,
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    settings: &P1Settings<T>,
) -> Result<Relaxed<T, OffloadSolution<T>>> {
    let sol = solve_bounded(profiles, config, &sets.bounds(profiles), settings)?;
    let xi = relaxed_decisions(profiles, sol.partition.as_slice());
    Ok(Relaxed {
        value: sol.weighted_total,
        lower_bound: sol.report.lower_bound.min(sol.weighted_total),
        xi,
        solution: sol,
    })
}

/// `ℓ_k / L_k`, with empty tasks counted as local.
pub fn relaxed_decisions<T: Scalar>(profiles: &[UserProfile<T>], ell: &[T]) -> Vec<T> {
    profiles
        .iter()
        .zip(ell)
        .map(|(u, l)| {
            if u.task_bits > T::zero() {
                (*l / u.task_bits).max(T::zero()).min(T::one())
            } else {
                T::zero()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bnb,
    Greedy,
    Relaxation,
    Exhaustive,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bnb => "bnb",
            Method::Greedy => "greedy",
            Method::Relaxation => "relaxation",
            Method::Exhaustive => "exhaustive",
        }
    }
}

/// Work counters of a binary solve.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Inner solves of subproblems with at least one possible offloader.
    pub convex_solves: usize,
    /// All-local subproblems, evaluated in closed form.
    pub closed_form: usize,
    /// Subproblems answered from the cache.
    pub cache_hits: usize,
    /// Tree nodes created (branch-and-bound only).
    pub nodes: usize,
    /// Accepted moves (greedy only).
    pub iterations: usize,
    /// Whether the returned value is certified within the requested gap.
    pub certified: bool,
}

/// One branch-and-bound node, also the search-trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BnbNode<T> {
    pub id: usize,
    pub parent: Option<usize>,
    pub sets: DecisionSets,
    /// Lower bound from the relaxation.
    pub lower_bound: T,
    /// Value of the rounded relaxation.
    pub upper_bound: T,
    pub relaxed_xi: Vec<T>,
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar, S: Serialize + serde::de::DeserializeOwned")]
pub struct BinarySolution<T, S = OffloadSolution<T>> {
    /// Offloading decisions `ξ_k`.
    pub xi: Vec<bool>,
    pub inner: S,
    pub value: T,
    /// Certified lower bound on the binary optimum (branch-and-bound and
    /// exhaustive search); `None` for the heuristics.
    pub lower_bound: Option<T>,
    pub method: Method,
    pub stats: SolveStats,
    /// Branch-and-bound search trace.
    pub trace: Vec<BnbNode<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySettings<T> {
    /// Relative gap `ε_gap`: stop once `upper − lower ≤ ε_gap · upper`.
    pub gap: T,
    pub node_budget: usize,
    pub max_users: usize,
    pub inner: P1Settings<T>,
}

impl<T: Scalar> Default for BinarySettings<T> {
    fn default() -> Self {
        Self {
            gap: T::lit(DEFAULT_GAP),
            node_budget: DEFAULT_NODE_BUDGET,
            max_users: MAX_BNB_USERS,
            inner: P1Settings::with_epsilon(T::lit(DEFAULT_INNER_EPSILON)),
        }
    }
}

/// Users that never offload: weightless users (their local energy is free
/// while their transmissions would only interfere) and empty tasks.
pub fn base_sets<T: Scalar>(profiles: &[UserProfile<T>]) -> DecisionSets {
    DecisionSets {
        locked_local: (0..profiles.len())
            .filter(|&k| profiles[k].weight == T::zero() || profiles[k].task_bits == T::zero())
            .collect(),
        locked_offload: BTreeSet::new(),
    }
}

/// Memoizing, counting wrapper around a subproblem solver.
struct Memo<'s, T: Scalar, S: SubproblemSolver<T>> {
    solver: &'s S,
    fixed: RefCell<HashMap<DecisionSets, (T, S::Solution)>>,
    relaxed: RefCell<HashMap<DecisionSets, Relaxed<T, S::Solution>>>,
    stats: RefCell<SolveStats>,
}

impl<'s, T: Scalar, S: SubproblemSolver<T>> Memo<'s, T, S> {
    fn new(solver: &'s S) -> Self {
        Self {
            solver,
            fixed: RefCell::new(HashMap::new()),
            relaxed: RefCell::new(HashMap::new()),
            stats: RefCell::new(SolveStats::default()),
        }
    }

    fn users(&self) -> usize {
        self.solver.profiles().len()
    }

    fn count(&self, sets: &DecisionSets) {
        let mut st = self.stats.borrow_mut();
        if sets.locked_local.len() == self.users() {
            st.closed_form += 1;
        } else {
            st.convex_solves += 1;
        }
    }

    fn fixed(&self, sets: &DecisionSets) -> Result<(T, S::Solution)> {
        if let Some(hit) = self.fixed.borrow().get(sets) {
            self.stats.borrow_mut().cache_hits += 1;
            return Ok(hit.clone());
        }
        self.count(sets);
        let out = self.solver.solve_fixed(sets)?;
        self.fixed.borrow_mut().insert(sets.clone(), out.clone());
        Ok(out)
    }

    fn fixed_near(&self, sets: &DecisionSets, near: &S::Solution) -> Result<(T, S::Solution)> {
        if let Some(hit) = self.fixed.borrow().get(sets) {
            self.stats.borrow_mut().cache_hits += 1;
            return Ok(hit.clone());
        }
        self.count(sets);
        let out = self.solver.solve_fixed_near(sets, near)?;
        self.fixed.borrow_mut().insert(sets.clone(), out.clone());
        Ok(out)
    }

    fn relaxed(&self, sets: &DecisionSets) -> Result<Relaxed<T, S::Solution>> {
        if let Some(hit) = self.relaxed.borrow().get(sets) {
            self.stats.borrow_mut().cache_hits += 1;
            return Ok(hit.clone());
        }
        self.count(sets);
        let out = self.solver.solve_relaxed(sets)?;
        self.relaxed.borrow_mut().insert(sets.clone(), out.clone());
        Ok(out)
    }

    fn finish(self) -> SolveStats {
        self.stats.into_inner()
    }
}

fn solution<T: Scalar, S: Clone>(
    users: usize,
    sets: &DecisionSets,
    best: (T, S),
    method: Method,
    stats: SolveStats,
) -> BinarySolution<T, S> {
    BinarySolution {
        xi: sets.decisions(users),
        inner: best.1,
        value: best.0,
        lower_bound: None,
        method,
        stats,
        trace: Vec::new(),
    }
}

/// Open node ordered by lower bound, then creation order.
struct Open<T> {
    key: T,
    id: usize,
}

impl<T: Scalar> PartialEq for Open<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Open<T> {}

impl<T: Scalar> PartialOrd for Open<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Open<T> {
    // Reversed so that `BinaryHeap` pops the smallest bound first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .as_f64()
            .total_cmp(&self.key.as_f64())
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Best-first branch-and-bound over any subproblem solver.
pub fn bnb_with<T: Scalar, S: SubproblemSolver<T>>(
    solver: &S,
    settings: &BinarySettings<T>,
) -> Result<BinarySolution<T, S::Solution>> {
    let profiles = solver.profiles();
    let users = profiles.len();
    if users > settings.max_users {
        return Err(Error::Capability(format!(
            "branch-and-bound is limited to {} users, got {users}",
            settings.max_users
        )));
    }
    if !(settings.gap >= T::zero()) {
        return Err(domain("gap must be non-negative"));
    }
    let memo = Memo::new(solver);
    let mut nodes: Vec<BnbNode<T>> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut incumbent: Option<(DecisionSets, (T, S::Solution))> = None;

    let create = |sets: DecisionSets,
                  parent: Option<usize>,
                  parent_lb: T,
                  nodes: &mut Vec<BnbNode<T>>,
                  incumbent: &mut Option<(DecisionSets, (T, S::Solution))>|
     -> Result<usize> {
        let relaxed = memo.relaxed(&sets)?;
        let rounded = round_decision(&relaxed.xi);
        let fixed = memo.fixed(&rounded)?;
        let upper = fixed.0;
        if incumbent.as_ref().is_none_or(|(_, (v, _))| upper < *v) {
            *incumbent = Some((rounded, fixed));
        }
        let id = nodes.len();
        nodes.push(BnbNode {
            id,
            parent,
            sets,
            lower_bound: relaxed.lower_bound.max(parent_lb),
            upper_bound: upper,
            relaxed_xi: relaxed.xi,
            pruned: false,
        });
        Ok(id)
    };
    let slack = |inc: T| settings.gap * inc.abs();

    let root = create(
        base_sets(profiles),
        None,
        T::neg_infinity(),
        &mut nodes,
        &mut incumbent,
    )?;
    heap.push(Open {
        key: nodes[root].lower_bound,
        id: root,
    });
    let mut certified = true;
    while let Some(Open { id, .. }) = heap.pop() {
        let inc = incumbent.as_ref().expect("root sets an incumbent").1 .0;
        let lb = nodes[id].lower_bound;
        if lb >= inc - slack(inc) {
            // Best-first: every remaining node is bounded at least as high.
            nodes[id].pruned = true;
            while let Some(rest) = heap.pop() {
                nodes[rest.id].pruned = true;
            }
            break;
        }
        let free = nodes[id].sets.free(users);
        if free.is_empty() {
            continue;
        }
        if nodes.len() + 2 > settings.node_budget {
            certified = false;
            heap.push(Open { key: lb, id });
            break;
        }
        let k = branch_select(&nodes[id].relaxed_xi, &free)?;
        let children = [nodes[id].sets.with_local(k), nodes[id].sets.with_offload(k)];
        for child in children {
            let cid = create(child, Some(id), lb, &mut nodes, &mut incumbent)?;
            let inc = incumbent.as_ref().expect("root sets an incumbent").1 .0;
            if nodes[cid].lower_bound >= inc - slack(inc) {
                nodes[cid].pruned = true;
            } else {
                heap.push(Open {
                    key: nodes[cid].lower_bound,
                    id: cid,
                });
            }
        }
    }
    let (sets, best) = incumbent.expect("root sets an incumbent");
    // Every leaf of the tree is pruned, still open, or an exactly solved
    // partition no better than the incumbent.
    let lower = nodes
        .iter()
        .filter(|n| n.pruned)
        .map(|n| n.lower_bound)
        .chain(heap.iter().map(|o| o.key))
        .fold(best.0, |a, b| a.min(b));
    let mut stats = memo.finish();
    stats.nodes = nodes.len();
    stats.certified = certified;
    let mut sol = solution(users, &sets, best, Method::Bnb, stats);
    sol.lower_bound = Some(lower);
    sol.trace = nodes;
    Ok(sol)
}

/// Greedy offloading: starting from all-local, repeatedly move the user
/// whose transfer lowers the energy most, while that strictly improves.
pub fn greedy_with<T: Scalar, S: SubproblemSolver<T>>(
    solver: &S,
) -> Result<BinarySolution<T, S::Solution>> {
    let profiles = solver.profiles();
    let users = profiles.len();
    let memo = Memo::new(solver);
    let mut current = DecisionSets::from_decisions(&vec![false; users]);
    let mut best = memo.fixed(&current)?;
    let mut candidates = base_sets(profiles).free(users);
    let mut moves = 0;
    while !candidates.is_empty() {
        let mut round: Option<(usize, DecisionSets, (T, S::Solution))> = None;
        for &k in &candidates {
            let trial = current.with_offload(k);
            let out = memo.fixed(&trial)?;
            if round.as_ref().is_none_or(|(_, _, (v, _))| out.0 < *v) {
                round = Some((k, trial, out));
            }
        }
        let (k, sets, out) = round.expect("candidates are non-empty");
        if out.0 >= best.0 {
            break;
        }
        current = sets;
        best = out;
        candidates.retain(|&u| u != k);
        moves += 1;
    }
    let mut stats = memo.finish();
    stats.iterations = moves;
    Ok(solution(users, &current, best, Method::Greedy, stats))
}

/// Relax, round, re-solve: exactly two inner solves.
pub fn relaxation_with<T: Scalar, S: SubproblemSolver<T>>(
    solver: &S,
) -> Result<BinarySolution<T, S::Solution>> {
    let users = solver.profiles().len();
    let memo = Memo::new(solver);
    let relaxed = memo.relaxed(&base_sets(solver.profiles()))?;
    let sets = round_decision(&relaxed.xi);
    let best = memo.fixed_near(&sets, &relaxed.solution)?;
    Ok(solution(
        users,
        &sets,
        best,
        Method::Relaxation,
        memo.finish(),
    ))
}

/// Enumerates every offloading set; ties keep the first set found.
pub fn exhaustive_with<T: Scalar, S: SubproblemSolver<T>>(
    solver: &S,
    max_users: usize,
) -> Result<BinarySolution<T, S::Solution>> {
    let profiles = solver.profiles();
    let users = profiles.len();
    let free = base_sets(profiles).free(users);
    if free.len() > max_users {
        return Err(Error::Capability(format!(
            "exhaustive search is limited to {max_users} undecided users, got {}",
            free.len()
        )));
    }
    let memo = Memo::new(solver);
    let mut best: Option<(DecisionSets, (T, S::Solution))> = None;
    for mask in 0u64..(1u64 << free.len()) {
        let mut xi = vec![false; users];
        for (bit, &k) in free.iter().enumerate() {
            xi[k] = mask >> bit & 1 == 1;
        }
        let sets = DecisionSets::from_decisions(&xi);
        let out = memo.fixed(&sets)?;
        if best.as_ref().is_none_or(|(_, (v, _))| out.0 < *v) {
            best = Some((sets, out));
        }
    }
    let (sets, best) = best.expect("at least one partition");
    let mut stats = memo.finish();
    stats.certified = true;
    let mut sol = solution(users, &sets, best, Method::Exhaustive, stats);
    sol.lower_bound = Some(sol.value);
    Ok(sol)
}

fn noma<'a, T: Scalar>(
    profiles: &'a [UserProfile<T>],
    config: &'a SystemConfig<T>,
    inner: &P1Settings<T>,
) -> Result<NomaSubproblem<'a, T>> {
    check_profiles(profiles, config)?;
    Ok(NomaSubproblem {
        profiles,
        config,
        settings: *inner,
    })
}

/// Exact binary offloading by branch-and-bound.
pub fn solve_bnb<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    settings: &BinarySettings<T>,
) -> Result<BinarySolution<T>> {
    bnb_with(&noma(profiles, config, &settings.inner)?, settings)
}

/// Greedy binary offloading, at most `K(K+1)/2` inner solves.
pub fn solve_greedy<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    inner: &P1Settings<T>,
) -> Result<BinarySolution<T>> {
    greedy_with(&noma(profiles, config, inner)?)
}

/// Binary offloading by rounding the continuous relaxation.
pub fn solve_relaxation<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    inner: &P1Settings<T>,
) -> Result<BinarySolution<T>> {
    relaxation_with(&noma(profiles, config, inner)?)
}

/// Reference solver enumerating all `2^K` offloading sets.
pub fn solve_exhaustive<T: Scalar>(
    profiles: &[UserProfile<T>],
    config: &SystemConfig<T>,
    inner: &P1Settings<T>,
) -> Result<BinarySolution<T>> {
    exhaustive_with(&noma(profiles, config, inner)?, MAX_EXHAUSTIVE_USERS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelVector;
    use crate::partial::{local_energy, solve_p1};
    use crate::scenario::Scenario;

    fn mixed(users: usize) -> Scenario {
        Scenario {
            users,
            capacitance: 1e-32,
            ..Scenario::default()
        }
    }

    #[test]
    fn sets_validate_and_branch() {
        assert!(DecisionSets::new([0], [0], 2).is_err());
        assert!(DecisionSets::new([0], [3], 2).is_err());
        let s = DecisionSets::new([1], [], 3).unwrap();
        assert_eq!(s.free(3), vec![0, 2]);
        let t = s.with_offload(0).with_local(2);
        assert!(t.is_full(3));
        assert_eq!(t.decisions(3), vec![true, false, false]);
    }

    #[test]
    fn rounding_examples() {
        let r = round_decision(&[0.0, 1.0, 0.3, 0.8]);
        assert_eq!(
            r.locked_local().iter().copied().collect::<Vec<_>>(),
            vec![0, 2]
        );
        assert_eq!(
            r.locked_offload().iter().copied().collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert_eq!(round_decision(&[0.5, 0.5, 0.5]).decisions(3), vec![true; 3]);
        assert_eq!(round_decision(&[1.0, 0.0]).decisions(2), vec![true, false]);
    }

    #[test]
    fn branching_rule() {
        assert_eq!(branch_select(&[0.9, 0.45, 0.1], &[0, 1, 2]).unwrap(), 1);
        assert_eq!(branch_select(&[0.6, 0.4], &[1, 0]).unwrap(), 0);
        assert_eq!(branch_select(&[1.0, 0.0, 1.0], &[2, 1]).unwrap(), 1);
        assert!(branch_select::<f64>(&[0.5], &[]).is_err());
    }

    #[test]
    fn all_local_is_closed_form() {
        let (p, c) = Scenario::default().instance::<f64>(0, 0).unwrap();
        let sets = DecisionSets::from_decisions(&[false; 4]);
        let sol = solve_sp(&sets, &p, &c, &P1Settings::default()).unwrap();
        let expect: f64 = p
            .iter()
            .map(|u| u.weight * local_energy(u, u.task_bits, c.block_length))
            .sum();
        assert_eq!(sol.weighted_total, expect);
        assert!(solve_sp(&DecisionSets::empty(), &p, &c, &P1Settings::default()).is_err());
    }

    #[test]
    fn single_offloader_inverts_rate() {
        let (p, c) = mixed(1).instance::<f64>(2, 0).unwrap();
        let sets = DecisionSets::from_decisions(&[true]);
        let sol = solve_sp(&sets, &p, &c, &P1Settings::with_epsilon(1e-6)).unwrap();
        let power = ((p[0].task_bits / (c.offload_window * c.bandwidth)).exp2() - 1.0)
            / p[0].channel.gain();
        assert!((sol.powers.as_slice()[0] / power - 1.0).abs() < 1e-5);
        assert!((sol.weighted_total / (power * c.offload_window) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn relaxation_of_empty_sets_is_partial_offloading() {
        let (p, c) = mixed(3).instance::<f64>(1, 0).unwrap();
        let s = P1Settings::with_epsilon(1e-4);
        let r = solve_sp_relaxed(&DecisionSets::empty(), &p, &c, &s).unwrap();
        let q = solve_p1(&p, &c, &s).unwrap();
        assert_eq!(r.value, q.weighted_total);
        let full = DecisionSets::from_decisions(&[true, false, true]);
        let a = solve_sp_relaxed(&full, &p, &c, &s).unwrap();
        let b = solve_sp(&full, &p, &c, &s).unwrap();
        assert_eq!(a.value, b.weighted_total);
        assert_eq!(a.xi, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn single_user_bnb_picks_cheaper_side() {
        for seed in 0..4 {
            let (p, c) = mixed(1).instance::<f64>(seed, 0).unwrap();
            let sol = solve_bnb(&p, &c, &BinarySettings::default()).unwrap();
            let local = local_energy(&p[0], p[0].task_bits, c.block_length);
            let power = ((p[0].task_bits / (c.offload_window * c.bandwidth)).exp2() - 1.0)
                / p[0].channel.gain();
            let remote = power * c.offload_window;
            assert!((sol.value / local.min(remote) - 1.0).abs() < 1e-3);
            assert_eq!(sol.xi[0], remote < local);
        }
    }

    #[test]
    fn bnb_matches_exhaustive_and_counters_hold() {
        let settings = BinarySettings::default();
        for (users, seed) in [(3, 0), (4, 1), (5, 2)] {
            let (p, c) = mixed(users).instance::<f64>(seed, 0).unwrap();
            let bnb = solve_bnb(&p, &c, &settings).unwrap();
            let ex = solve_exhaustive(&p, &c, &settings.inner).unwrap();
            assert!(bnb.stats.certified);
            assert!(bnb.value >= ex.value && bnb.value <= ex.value * (1.0 + 1e-3));
            assert!(bnb.stats.nodes < 1 << (users + 1));
            assert!(bnb.lower_bound.unwrap() <= ex.value);
            let greedy = solve_greedy(&p, &c, &settings.inner).unwrap();
            assert!(greedy.stats.convex_solves <= users * (users + 1) / 2);
            assert!(greedy.value >= ex.value);
            let relax = solve_relaxation(&p, &c, &settings.inner).unwrap();
            assert!(relax.stats.convex_solves + relax.stats.closed_form == 2);
            assert!(relax.value >= ex.value);
            assert_eq!(ex.stats.convex_solves + ex.stats.closed_form, 1 << users);
        }
    }

    #[test]
    fn greedy_limiting_regimes() {
        let heavy = Scenario {
            capacitance: 1e-22,
            ..Scenario::default()
        };
        let (p, c) = heavy.instance::<f64>(0, 0).unwrap();
        let g = solve_greedy(&p, &c, &P1Settings::default()).unwrap();
        assert_eq!(g.xi, vec![true; 4]);
        assert_eq!(g.stats.iterations, 4);
        let light = Scenario {
            capacitance: 1e-40,
            ..Scenario::default()
        };
        let (p, c) = light.instance::<f64>(0, 0).unwrap();
        let g = solve_greedy(&p, &c, &P1Settings::default()).unwrap();
        assert_eq!(g.xi, vec![false; 4]);
        assert_eq!(g.stats.iterations, 0);
        assert_eq!(g.stats.convex_solves, 4);
    }

    #[test]
    fn weightless_users_stay_local() {
        let (mut p, c) = mixed(3).instance::<f64>(3, 0).unwrap();
        p[1].weight = 0.0;
        let bnb = solve_bnb(&p, &c, &BinarySettings::default()).unwrap();
        assert!(!bnb.xi[1]);
        let ex = solve_exhaustive(&p, &c, &P1Settings::default()).unwrap();
        assert_eq!(ex.stats.convex_solves + ex.stats.closed_form, 4);
    }

    #[test]
    fn orthogonal_users_follow_threshold() {
        let n = 3;
        let c = SystemConfig::new(0.3, 0.27, 2e6, n).unwrap();
        let gains = [3.0f64, 400.0, 5000.0];
        let bits = [4e5, 6e5, 8e5];
        let p: Vec<UserProfile<f64>> = (0..n)
            .map(|k| {
                let mut h = vec![0.0; n];
                h[k] = gains[k].sqrt();
                UserProfile::new(
                    bits[k],
                    4e3,
                    2e-31,
                    1.0,
                    ChannelVector::from_real(&h).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let sol = solve_bnb(&p, &c, &BinarySettings::default()).unwrap();
        for k in 0..n {
            let u = &p[k];
            let tx = u.weight
                * ((u.task_bits / (c.offload_window * c.bandwidth)).exp2() - 1.0)
                * c.offload_window
                / u.channel.gain();
            let local = u.weight * local_energy(u, u.task_bits, c.block_length);
            assert_eq!(sol.xi[k], tx < local, "user {k}: tx {tx} local {local}");
        }
        assert!(sol.xi.contains(&true) && sol.xi.contains(&false));
    }

    #[test]
    fn trace_records_tree() {
        let (p, c) = mixed(4).instance::<f64>(1, 0).unwrap();
        let sol = solve_bnb(&p, &c, &BinarySettings::default()).unwrap();
        assert_eq!(sol.trace.len(), sol.stats.nodes);
        assert_eq!(sol.trace[0].parent, None);
        for node in &sol.trace[1..] {
            let parent = &sol.trace[node.parent.unwrap()];
            assert!(node.lower_bound >= parent.lower_bound);
            assert_eq!(node.sets.free(4).len() + 1, parent.sets.free(4).len());
        }
    }

    #[test]
    fn node_budget_leaves_result_uncertified() {
        let (p, c) = mixed(4).instance::<f64>(1, 0).unwrap();
        let settings = BinarySettings {
            node_budget: 1,
            ..BinarySettings::default()
        };
        let sol = solve_bnb(&p, &c, &settings).unwrap();
        assert_eq!(sol.stats.nodes, 1);
        let exact = solve_bnb(&p, &c, &BinarySettings::default()).unwrap();
        if exact.stats.nodes > 1 {
            assert!(!sol.stats.certified);
        }
        assert!(sol.lower_bound.unwrap() <= exact.value);
    }
}
