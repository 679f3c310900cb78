//! Distributional policy goals, M-convexity checks and implied type bounds.
//!
//! Goals are predicates on [`Distribution`]s. Set-level checks work on the
//! explicit enumeration of Ξ^0, the distributions that place every student
//! without exceeding any school's capacity.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_rational::Ratio;
use num_traits::Zero;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{DistrictId, Distribution, Problem, SchoolId, TypeId, Verdict};

pub type Rational = Ratio<i64>;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("enumeration universe too large: {size} distributions")]
    UniverseTooLarge { size: u128 },
    #[error("no legitimate matching satisfies the district, type, capacity and ceiling constraints")]
    InfeasibleConstraints,
    #[error("ideal distribution must place every student within capacities")]
    IdealOutsideXi0,
    #[error("invalid goal: {0}")]
    InvalidGoal(String),
}

/// Default bound on the number of distributions an enumeration may produce.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

/// A policy function on distributions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicyFunction {
    /// f(ξ) = −Σ|ξ_c^t − ξ̂_c^t|.
    ManhattanIdeal(Distribution),
    /// 1 on the set, 0 elsewhere.
    Indicator(BTreeSet<Distribution>),
    Table { values: BTreeMap<Distribution, Rational>, default: Rational },
}

impl PolicyFunction {
    /// Manhattan score against an ideal that must itself lie in Ξ^0.
    pub fn manhattan(ideal: Distribution, p: &Problem) -> Result<PolicyFunction, PolicyError> {
        if !in_xi0(&ideal, p) {
            return Err(PolicyError::IdealOutsideXi0);
        }
        Ok(PolicyFunction::ManhattanIdeal(ideal))
    }

    pub fn eval(&self, xi: &Distribution) -> Rational {
        match self {
            PolicyFunction::ManhattanIdeal(ideal) => {
                let d: i64 = xi
                    .counts()
                    .iter()
                    .zip(ideal.counts())
                    .map(|(&a, &b)| (a as i64 - b as i64).abs())
                    .sum();
                Rational::from_integer(-d)
            }
            PolicyFunction::Indicator(set) => Rational::from_integer(set.contains(xi) as i64),
            PolicyFunction::Table { values, default } => *values.get(xi).unwrap_or(default),
        }
    }
}

/// The 0/1 function of `S ∩ Ξ^0`.
pub fn indicator_of<'a>(s: impl IntoIterator<Item = &'a Distribution>, p: &Problem) -> PolicyFunction {
    PolicyFunction::Indicator(s.into_iter().filter(|xi| in_xi0(xi, p)).cloned().collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GoalForm {
    Unconstrained,
    ExplicitSet(BTreeSet<Distribution>),
    /// Every district serves exactly k_d students.
    BalancedExchange,
    /// p_c^t ≤ ξ_c^t ≤ q_c^t on the listed cells.
    SchoolDiversity {
        floors: BTreeMap<(SchoolId, TypeId), u32>,
        ceilings: BTreeMap<(SchoolId, TypeId), u32>,
    },
    /// Balanced exchange together with school-level floors and ceilings.
    Combination {
        floors: BTreeMap<(SchoolId, TypeId), u32>,
        ceilings: BTreeMap<(SchoolId, TypeId), u32>,
    },
    FLambda { f: PolicyFunction, lambda: Rational },
    /// ξ_d^t ≤ q_d^t. Breaks the positive results; kept for counterexamples.
    DistrictCeilings(BTreeMap<(DistrictId, TypeId), u32>),
    /// Type shares differ by at most α across districts.
    AlphaDiversity(Rational),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyGoal {
    pub form: GoalForm,
    pub intersect_xi0: bool,
}

impl PolicyGoal {
    pub fn new(form: GoalForm, intersect_xi0: bool) -> Self {
        PolicyGoal { form, intersect_xi0 }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if let GoalForm::SchoolDiversity { floors, ceilings } | GoalForm::Combination { floors, ceilings } =
            &self.form
        {
            for (cell, &lo) in floors {
                if ceilings.get(cell).is_some_and(|&hi| hi < lo) {
                    return Err(PolicyError::InvalidGoal(format!("floor above ceiling at {cell:?}")));
                }
            }
        }
        Ok(())
    }

    /// Set when the goal belongs to a class with no positive guarantees.
    pub fn warning(&self) -> Option<&'static str> {
        match self.form {
            GoalForm::DistrictCeilings(_) => {
                Some("district-level type ceilings admit no stable or efficient mechanism in general")
            }
            _ => None,
        }
    }

    pub fn contains(&self, xi: &Distribution, p: &Problem) -> bool {
        if self.intersect_xi0 && !in_xi0(xi, p) {
            return false;
        }
        match &self.form {
            GoalForm::Unconstrained => true,
            GoalForm::ExplicitSet(set) => set.contains(xi),
            GoalForm::BalancedExchange => balanced(xi, p),
            GoalForm::SchoolDiversity { floors, ceilings } => within_cells(xi, floors, ceilings),
            GoalForm::Combination { floors, ceilings } => balanced(xi, p) && within_cells(xi, floors, ceilings),
            GoalForm::FLambda { f, lambda } => f.eval(xi) >= *lambda,
            GoalForm::DistrictCeilings(caps) => {
                caps.iter().all(|(&(d, t), &q)| xi.district_type(p, d, t) <= q)
            }
            GoalForm::AlphaDiversity(alpha) => alpha_gap(xi, p) <= *alpha,
        }
    }

    /// Members of the goal within Ξ^0, in lexicographic order.
    pub fn members(&self, p: &Problem, budget: u128) -> Result<Vec<Distribution>, PolicyError> {
        Ok(enumerate_xi0(p, budget)?.into_iter().filter(|xi| self.contains(xi, p)).collect())
    }
}

fn balanced(xi: &Distribution, p: &Problem) -> bool {
    p.district_ids().all(|d| xi.district_total(p, d) as usize == p.k_d(d))
}

fn within_cells(
    xi: &Distribution,
    floors: &BTreeMap<(SchoolId, TypeId), u32>,
    ceilings: &BTreeMap<(SchoolId, TypeId), u32>,
) -> bool {
    floors.iter().all(|(&(c, t), &lo)| xi.get(c, t) >= lo)
        && ceilings.iter().all(|(&(c, t), &hi)| xi.get(c, t) <= hi)
}

/// Max over (d, d′) of ξ_d^t/k_d − ξ_{d′}^t/k_{d′} for one type.
pub fn type_gap(xi: &Distribution, p: &Problem, t: TypeId) -> Rational {
    let shares: Vec<Rational> = p
        .district_ids()
        .map(|d| Rational::new(xi.district_type(p, d, t) as i64, p.k_d(d).max(1) as i64))
        .collect();
    let hi = shares.iter().max().copied().unwrap_or_else(Rational::zero);
    let lo = shares.iter().min().copied().unwrap_or_else(Rational::zero);
    hi - lo
}

/// Max over (t, d, d′) of ξ_d^t/k_d − ξ_{d′}^t/k_{d′}.
pub fn alpha_gap(xi: &Distribution, p: &Problem) -> Rational {
    p.type_ids().map(|t| type_gap(xi, p, t)).max().unwrap_or_else(Rational::zero)
}

/// ξ ∈ Ξ^0: total Σk_d and every school within capacity.
pub fn in_xi0(xi: &Distribution, p: &Problem) -> bool {
    xi.n_schools() == p.n_schools()
        && xi.n_types() == p.n_types()
        && xi.total() as usize == p.total_students()
        && p.school_ids().all(|c| xi.school_total(c) <= p.capacity(c))
}

fn binom(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// |Ξ^0| by dynamic programming over schools.
pub fn count_xi0(p: &Problem) -> u128 {
    let total = p.total_students();
    let nt = p.n_types() as u128;
    // ways[m]: number of distributions of m students over the schools seen so far
    let mut ways = vec![0u128; total + 1];
    ways[0] = 1;
    for c in p.school_ids() {
        let cap = (p.capacity(c) as usize).min(total);
        let mut next = vec![0u128; total + 1];
        for (m, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for j in 0..=cap.min(total - m) {
                // compositions of j into nt non-negative parts
                let per = binom(j as u128 + nt - 1, nt - 1);
                next[m + j] = next[m + j].saturating_add(w.saturating_mul(per));
            }
        }
        ways = next;
    }
    ways[total]
}

/// Every element of Ξ^0 in lexicographic order of the row-major counts.
pub fn enumerate_xi0(p: &Problem, budget: u128) -> Result<Vec<Distribution>, PolicyError> {
    let size = count_xi0(p);
    if size > budget {
        return Err(PolicyError::UniverseTooLarge { size });
    }
    let nt = p.n_types();
    let cells = p.n_schools() * nt;
    let mut out = Vec::with_capacity(size as usize);
    let mut cur = vec![0u32; cells];
    // remaining capacity after each school, for pruning
    let mut cap_after = vec![0u32; p.n_schools() + 1];
    for c in (0..p.n_schools()).rev() {
        cap_after[c] = cap_after[c + 1] + p.capacity(SchoolId(c));
    }

    #[allow(clippy::too_many_arguments)]
    fn rec(
        i: usize,
        left: u32,
        school_left: u32,
        cur: &mut Vec<u32>,
        p: &Problem,
        nt: usize,
        cap_after: &[u32],
        out: &mut Vec<Distribution>,
    ) {
        if i == cur.len() {
            if left == 0 {
                out.push(Distribution::from_counts(nt, cur.clone()));
            }
            return;
        }
        let c = i / nt;
        let last_cell = i % nt == nt - 1;
        let room_later = cap_after[c + 1];
        for v in 0..=left.min(school_left) {
            if last_cell && left - v > room_later {
                continue;
            }
            cur[i] = v;
            let sl = match (last_cell, c + 1 < p.n_schools()) {
                (true, true) => p.capacity(SchoolId(c + 1)),
                (true, false) => 0,
                (false, _) => school_left - v,
            };
            rec(i + 1, left - v, sl, cur, p, nt, cap_after, out);
        }
        cur[i] = 0;
    }
    if cells == 0 {
        return Ok(out);
    }
    rec(0, p.total_students() as u32, p.capacity(SchoolId(0)), &mut cur, p, nt, &cap_after, &mut out);
    Ok(out)
}

/// A pair and coordinate at which the exchange property breaks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MConvexWitness {
    pub xi: Distribution,
    pub xi_tilde: Distribution,
    pub cell: (SchoolId, TypeId),
}

pub type MConvexVerdict = Verdict<MConvexWitness>;

fn exchange_ok(set: &HashSet<&Distribution>, a: &Distribution, b: &Distribution, ct: (SchoolId, TypeId)) -> bool {
    b.cells().any(|ct2| {
        a.get(ct2.0, ct2.1) < b.get(ct2.0, ct2.1)
            && a.exchange(ct, ct2).is_some_and(|x| set.contains(&x))
            && b.exchange(ct2, ct).is_some_and(|y| set.contains(&y))
    })
}

/// Coordinates (c,t) with ξ_c^t > ξ̃_c^t for which no exchange partner keeps both sides in `s`.
pub fn exchange_fails_at(s: &[Distribution], a: &Distribution, b: &Distribution) -> Vec<(SchoolId, TypeId)> {
    let set: HashSet<&Distribution> = s.iter().collect();
    a.cells()
        .filter(|&(c, t)| a.get(c, t) > b.get(c, t) && !exchange_ok(&set, a, b, (c, t)))
        .collect()
}

/// Exchange property over every ordered pair; the witness is the first
/// failure with pairs taken in the order of `s`.
pub fn is_mconvex(s: &[Distribution]) -> MConvexVerdict {
    let set: HashSet<&Distribution> = s.iter().collect();
    let found = (0..s.len()).into_par_iter().find_map_first(|i| {
        let a = &s[i];
        s.iter().filter(|b| *b != a).find_map(|b| {
            a.cells()
                .find(|&(c, t)| a.get(c, t) > b.get(c, t) && !exchange_ok(&set, a, b, (c, t)))
                .map(|cell| MConvexWitness { xi: a.clone(), xi_tilde: b.clone(), cell })
        })
    });
    match found {
        None => Verdict::Holds,
        Some(w) => Verdict::Fails(w),
    }
}

/// A distinct pair of Ξ^0 with no improving double exchange.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConcavityWitness {
    pub xi: Distribution,
    pub xi_tilde: Distribution,
}

/// f lives on Ξ^0, so both exchanged distributions must stay inside it.
fn pair_has_exchange(
    f: &PolicyFunction,
    p: &Problem,
    a: &Distribution,
    b: &Distribution,
    fa: Rational,
    fb: Rational,
) -> bool {
    let floor = fa.min(fb);
    a.cells().filter(|&(c, t)| a.get(c, t) > b.get(c, t)).any(|ct| {
        b.cells().filter(|&(c, t)| a.get(c, t) < b.get(c, t)).any(|ct2| {
            let (Some(x), Some(y)) = (a.exchange(ct, ct2), b.exchange(ct2, ct)) else {
                return false;
            };
            in_xi0(&x, p) && in_xi0(&y, p) && f.eval(&x).min(f.eval(&y)) >= floor
        })
    })
}

/// Pseudo M-concavity: every distinct pair in Ξ^0 admits some double
/// exchange whose worse side is no worse than the worse of the pair.
pub fn is_pseudo_mconcave(
    f: &PolicyFunction,
    p: &Problem,
    budget: u128,
) -> Result<Verdict<ConcavityWitness>, PolicyError> {
    let xi0 = enumerate_xi0(p, budget)?;
    let values: Vec<Rational> = xi0.par_iter().map(|xi| f.eval(xi)).collect();
    let found = (0..xi0.len()).into_par_iter().find_map_first(|i| {
        (0..xi0.len()).find_map(|j| {
            (i != j && !pair_has_exchange(f, p, &xi0[i], &xi0[j], values[i], values[j]))
                .then(|| ConcavityWitness { xi: xi0[i].clone(), xi_tilde: xi0[j].clone() })
        })
    });
    Ok(match found {
        None => Verdict::Holds,
        Some(w) => Verdict::Fails(w),
    })
}

/// {ξ ∈ Ξ^0 : f(ξ) ≥ λ}.
pub fn upper_contour(
    f: &PolicyFunction,
    lambda: Rational,
    p: &Problem,
    budget: u128,
) -> Result<Vec<Distribution>, PolicyError> {
    Ok(enumerate_xi0(p, budget)?.into_iter().filter(|xi| f.eval(xi) >= lambda).collect())
}

/// The distinct values f attains on Ξ^0, ascending.
pub fn attained_values(f: &PolicyFunction, p: &Problem, budget: u128) -> Result<Vec<Rational>, PolicyError> {
    let set: BTreeSet<Rational> = enumerate_xi0(p, budget)?.iter().map(|xi| f.eval(xi)).collect();
    Ok(set.into_iter().collect())
}

/// A directed arc with residual bookkeeping.
#[derive(Clone, Debug)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub cap: i64,
    pub cost: i64,
    pub flow: i64,
}

/// Integral min-cost flow by successive shortest paths with potentials.
#[derive(Clone, Debug, Default)]
pub struct FlowNetwork {
    n: usize,
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(n: usize) -> Self {
        FlowNetwork { n, arcs: Vec::new(), adj: vec![Vec::new(); n] }
    }

    pub fn add_arc(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> usize {
        let id = self.arcs.len();
        self.arcs.push(Arc { from, to, cap, cost, flow: 0 });
        self.arcs.push(Arc { from: to, to: from, cap: 0, cost: -cost, flow: 0 });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Forward arcs only, with their final flows.
    pub fn arcs(&self) -> impl Iterator<Item = &Arc> + '_ {
        self.arcs.iter().step_by(2)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    fn residual(&self, e: usize) -> i64 {
        let a = &self.arcs[e];
        if e.is_multiple_of(2) {
            a.cap - a.flow
        } else {
            self.arcs[e - 1].flow
        }
    }

    fn push(&mut self, e: usize, amount: i64) {
        if e.is_multiple_of(2) {
            self.arcs[e].flow += amount;
        } else {
            self.arcs[e - 1].flow -= amount;
        }
    }

    /// Send up to `want` units from `s` to `t` at minimum cost.
    /// Returns (units sent, total cost).
    pub fn min_cost_flow(&mut self, s: usize, t: usize, want: i64) -> (i64, i64) {
        const INF: i64 = i64::MAX / 4;
        // Bellman-Ford for initial potentials, since costs may be negative
        let mut pot = vec![INF; self.n];
        pot[s] = 0;
        for _ in 0..self.n {
            let mut changed = false;
            for e in 0..self.arcs.len() {
                let a = &self.arcs[e];
                if self.residual(e) > 0 && pot[a.from] < INF && pot[a.from] + a.cost < pot[a.to] {
                    pot[a.to] = pot[a.from] + a.cost;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for v in pot.iter_mut() {
            if *v == INF {
                *v = 0;
            }
        }

        let (mut sent, mut cost) = (0i64, 0i64);
        while sent < want {
            let mut dist = vec![INF; self.n];
            let mut prev = vec![usize::MAX; self.n];
            let mut done = vec![false; self.n];
            dist[s] = 0;
            let mut heap = std::collections::BinaryHeap::new();
            heap.push(std::cmp::Reverse((0i64, s)));
            while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                for &e in &self.adj[u] {
                    if self.residual(e) <= 0 {
                        continue;
                    }
                    let a = &self.arcs[e];
                    let nd = d + a.cost + pot[u] - pot[a.to];
                    if nd < dist[a.to] {
                        dist[a.to] = nd;
                        prev[a.to] = e;
                        heap.push(std::cmp::Reverse((nd, a.to)));
                    }
                }
            }
            if dist[t] == INF {
                break;
            }
            for v in 0..self.n {
                if dist[v] < INF {
                    pot[v] += dist[v];
                }
            }
            let mut amount = want - sent;
            let mut v = t;
            while v != s {
                let e = prev[v];
                amount = amount.min(self.residual(e));
                v = self.arcs[e].from;
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.push(e, amount);
                cost += amount * self.arcs[e].cost;
                v = self.arcs[e].from;
            }
            sent += amount;
        }
        (sent, cost)
    }

    /// Net outflow at every node; zero except at the terminals for a valid flow.
    pub fn imbalance(&self) -> Vec<i64> {
        let mut net = vec![0; self.n];
        for a in self.arcs() {
            net[a.from] += a.flow;
            net[a.to] -= a.flow;
        }
        net
    }
}

/// Source → district (k_d) → school (q_c) → type (q_c^t) → sink (k^t).
/// The school→type arcs of the target district and type carry `weight`.
fn legitimacy_network(
    p: &Problem,
    ceilings: &BTreeMap<(SchoolId, TypeId), u32>,
    target: Option<(DistrictId, TypeId, i64)>,
) -> (FlowNetwork, usize, usize) {
    let (nd, nc, nt) = (p.n_districts(), p.n_schools(), p.n_types());
    let src = 0;
    let dist0 = 1;
    let sch0 = dist0 + nd;
    let typ0 = sch0 + nc;
    let sink = typ0 + nt;
    let mut g = FlowNetwork::new(sink + 1);
    for d in p.district_ids() {
        g.add_arc(src, dist0 + d.0, p.k_d(d) as i64, 0);
    }
    for c in p.school_ids() {
        g.add_arc(dist0 + p.school_district(c).0, sch0 + c.0, p.capacity(c) as i64, 0);
        for t in p.type_ids() {
            let cap = ceilings.get(&(c, t)).copied().unwrap_or(p.capacity(c)).min(p.capacity(c));
            let cost = match target {
                Some((d, tt, w)) if tt == t && p.school_district(c) == d => w,
                _ => 0,
            };
            g.add_arc(sch0 + c.0, typ0 + t.0, cap as i64, cost);
        }
    }
    for t in p.type_ids() {
        g.add_arc(typ0 + t.0, sink, p.k_t(t) as i64, 0);
    }
    (g, src, sink)
}

/// Implied floors p̂_d^t and ceilings q̂_d^t over legitimate matchings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImpliedBounds {
    pub floor: BTreeMap<(DistrictId, TypeId), u32>,
    pub ceiling: BTreeMap<(DistrictId, TypeId), u32>,
}

/// Min and max of Σ_{c∈d} y_c^t for every (d,t), each solved as a min-cost flow.
pub fn implied_bounds(
    p: &Problem,
    ceilings: &BTreeMap<(SchoolId, TypeId), u32>,
) -> Result<ImpliedBounds, PolicyError> {
    let need = p.total_students() as i64;
    let cells: Vec<(DistrictId, TypeId)> =
        p.district_ids().flat_map(|d| p.type_ids().map(move |t| (d, t))).collect();
    let solved: Vec<Option<(i64, i64)>> = cells
        .par_iter()
        .map(|&(d, t)| {
            let (mut lo, s, k) = legitimacy_network(p, ceilings, Some((d, t, 1)));
            let (sent_lo, min_cost) = lo.min_cost_flow(s, k, need);
            let (mut hi, s, k) = legitimacy_network(p, ceilings, Some((d, t, -1)));
            let (sent_hi, neg_max) = hi.min_cost_flow(s, k, need);
            (sent_lo == need && sent_hi == need).then_some((min_cost, -neg_max))
        })
        .collect();
    let mut out = ImpliedBounds { floor: BTreeMap::new(), ceiling: BTreeMap::new() };
    for (&cell, r) in cells.iter().zip(solved) {
        let (lo, hi) = r.ok_or(PolicyError::InfeasibleConstraints)?;
        out.floor.insert(cell, lo as u32);
        out.ceiling.insert(cell, hi as u32);
    }
    Ok(out)
}

/// One difference q̂_d^t/k_d − p̂_{d′}^t/k_{d′}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delta {
    pub ty: TypeId,
    pub d: DistrictId,
    pub d_prime: DistrictId,
    pub value: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionReport {
    pub bounds: ImpliedBounds,
    /// Type-major, then d, then d′ ≠ d.
    pub deltas: Vec<Delta>,
    pub alpha: Rational,
    pub satisfied: bool,
}

impl ConditionReport {
    pub fn max_delta(&self) -> Option<Rational> {
        self.deltas.iter().map(|d| d.value).max()
    }
}

pub fn diversity_condition(
    p: &Problem,
    ceilings: &BTreeMap<(SchoolId, TypeId), u32>,
    alpha: Rational,
) -> Result<ConditionReport, PolicyError> {
    let bounds = implied_bounds(p, ceilings)?;
    let mut deltas = Vec::new();
    for t in p.type_ids() {
        for d in p.district_ids() {
            for d2 in p.district_ids().filter(|&x| x != d) {
                let value = Rational::new(bounds.ceiling[&(d, t)] as i64, p.k_d(d) as i64)
                    - Rational::new(bounds.floor[&(d2, t)] as i64, p.k_d(d2) as i64);
                deltas.push(Delta { ty: t, d, d_prime: d2, value });
            }
        }
    }
    let satisfied = deltas.iter().all(|x| x.value <= alpha);
    Ok(ConditionReport { bounds, deltas, alpha, satisfied })
}

/// Distributions of legitimate matchings: district totals k_d, type totals
/// k^t, capacities and school-type ceilings.
pub fn legitimate_distributions(
    p: &Problem,
    ceilings: &BTreeMap<(SchoolId, TypeId), u32>,
    budget: u128,
) -> Result<Vec<Distribution>, PolicyError> {
    Ok(enumerate_xi0(p, budget)?
        .into_iter()
        .filter(|xi| {
            balanced(xi, p)
                && p.type_ids().all(|t| xi.type_total(t) as usize == p.k_t(t))
                && ceilings.iter().all(|(&(c, t), &q)| xi.get(c, t) <= q)
        })
        .collect())
}
