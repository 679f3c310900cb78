//! Brute-force ground truth for desk-scale markets.

use std::collections::{BTreeMap, HashMap};
use std::ops::ControlFlow;

use itertools::Itertools;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    distribution_of, Contract, DistrictId, FeasibleMatchings, Matching, ModelError, Problem, SchoolId, StudentId,
    TypeId,
};
use crate::policy::{PolicyError, PolicyGoal};
use crate::rules::{for_each_subset, ChoiceTable, RuleError, RuleProfile, RuleSpec, TableDomain};
use crate::spda::{check_individual_rationality, is_stable, run_spda, SpdaError};
use crate::ttc::{run_ttc, TtcError};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("enumeration universe too large: {size}")]
    UniverseTooLarge { size: u128 },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Spda(#[from] SpdaError),
    #[error(transparent)]
    Ttc(#[from] TtcError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("search budget of {nodes} nodes exceeded")]
    SearchBudgetExceeded { nodes: u64 },
    #[error("no matching satisfies the goal and individual rationality")]
    EmptyEfficientSet,
}

pub const DEFAULT_BUDGET: u128 = 10_000_000;

/// Every matching feasible for students and capacities, lexicographically.
pub fn enumerate_feasible_matchings(p: &Problem, budget: u128) -> Result<FeasibleMatchings<'_>, OracleError> {
    FeasibleMatchings::new(p, budget).map_err(|size| OracleError::UniverseTooLarge { size })
}

pub fn enumerate_stable_matchings(
    p: &Problem,
    rules: &RuleProfile,
    budget: u128,
) -> Result<Vec<Matching>, OracleError> {
    let all: Vec<Matching> = enumerate_feasible_matchings(p, budget)?.collect();
    let verdicts: Vec<Result<bool, RuleError>> =
        all.par_iter().map(|x| is_stable(x, p, rules).map(|v| v.holds())).collect();
    let mut out = Vec::new();
    for (x, v) in all.into_iter().zip(verdicts) {
        if v? {
            out.push(x);
        }
    }
    Ok(out)
}

fn satisfies(goal: &PolicyGoal, x: &Matching, p: &Problem) -> bool {
    distribution_of(x, p).is_ok_and(|xi| goal.contains(&xi, p))
}

fn ranks(x: &Matching, p: &Problem) -> Vec<usize> {
    p.student_ids().map(|s| p.outcome_rank(s, x.school_of(s))).collect()
}

fn dominates(a: &[usize], b: &[usize]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a != b
}

/// Individually rational goal-satisfying matchings that no goal-satisfying
/// feasible matching Pareto dominates.
pub fn constrained_efficient_ir_matchings(
    p: &Problem,
    goal: &PolicyGoal,
    budget: u128,
) -> Result<Vec<Matching>, OracleError> {
    let admissible: Vec<(Matching, Vec<usize>)> = enumerate_feasible_matchings(p, budget)?
        .filter(|x| satisfies(goal, x, p))
        .map(|x| {
            let r = ranks(&x, p);
            (x, r)
        })
        .collect();
    let keep: Vec<bool> = admissible
        .par_iter()
        .map(|(x, r)| {
            check_individual_rationality(x, p).holds() && !admissible.iter().any(|(_, o)| dominates(o, r))
        })
        .collect();
    Ok(admissible.into_iter().zip(keep).filter(|(_, k)| *k).map(|((x, _), _)| x).collect())
}

/// A direct mechanism: reported preferences in, matching out.
#[derive(Clone, Debug)]
pub enum Mechanism {
    Spda(RuleProfile),
    Ttc { goal: PolicyGoal, master: Vec<StudentId> },
    /// The smallest member of the constrained-efficient IR set.
    EfficientSelector { goal: PolicyGoal, budget: u128 },
}

impl Mechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::Spda(_) => "spda",
            Mechanism::Ttc { .. } => "ttc",
            Mechanism::EfficientSelector { .. } => "efficient-selector",
        }
    }

    pub fn run(&self, p: &Problem) -> Result<Matching, OracleError> {
        match self {
            Mechanism::Spda(rules) => Ok(run_spda(p, rules)?.outcome),
            Mechanism::Ttc { goal, master } => Ok(run_ttc(p, goal, master)?.outcome),
            Mechanism::EfficientSelector { goal, budget } => constrained_efficient_ir_matchings(p, goal, *budget)?
                .into_iter()
                .next()
                .ok_or(OracleError::EmptyEfficientSet),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuditConfig {
    /// Largest number of misreport runs.
    pub max_runs: u128,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { max_runs: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub student: StudentId,
    pub truth: Vec<SchoolId>,
    pub misreport: Vec<SchoolId>,
    pub honest: Option<SchoolId>,
    pub deviant: Option<SchoolId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub mechanism: String,
    pub findings: Vec<Finding>,
    pub exhaustive: bool,
    pub runs: u128,
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

/// Try every unilateral misreport (all orders of the schools) for every
/// student, up to the run budget, and record strict improvements.
pub fn audit_strategy_proofness(mech: &Mechanism, p: &Problem, cfg: &AuditConfig) -> Result<AuditReport, OracleError> {
    let per = factorial(p.n_schools());
    let planned = per.saturating_mul(p.n_students() as u128);
    let honest = mech.run(p)?;
    let students: Vec<StudentId> = p.student_ids().collect();
    let per_student: Vec<Result<Vec<Finding>, OracleError>> = students
        .par_iter()
        .map(|&s| {
            let offset = s.0 as u128 * per;
            let allowed = cfg.max_runs.saturating_sub(offset).min(per);
            let truth = p.preferences(s).to_vec();
            let mut found = Vec::new();
            let schools: Vec<SchoolId> = p.school_ids().collect();
            for report in schools.into_iter().permutations(p.n_schools()).take(allowed as usize) {
                let q = p.with_preferences(s, &report)?;
                let out = mech.run(&q)?;
                if p.prefers(s, out.school_of(s), honest.school_of(s)) {
                    found.push(Finding {
                        student: s,
                        truth: truth.clone(),
                        misreport: report,
                        honest: honest.school_of(s),
                        deviant: out.school_of(s),
                    });
                }
            }
            Ok(found)
        })
        .collect();
    let mut findings = Vec::new();
    for f in per_student {
        findings.extend(f?);
    }
    Ok(AuditReport {
        mechanism: mech.name().to_string(),
        findings,
        exhaustive: planned <= cfg.max_runs,
        runs: planned.min(cfg.max_runs),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deviation {
    /// The efficient matching the mechanism is supposed to pick.
    pub against: Matching,
    pub student: StudentId,
    pub misreport: Vec<SchoolId>,
    /// The unique efficient IR matching under the misreport.
    pub result: Matching,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImpossibilityCertificate {
    pub profile: Vec<Vec<SchoolId>>,
    pub efficient: Vec<Matching>,
    pub deviations: Vec<Deviation>,
}

fn try_deviation(
    p: &Problem,
    goal: &PolicyGoal,
    budget: u128,
    against: &Matching,
    s: StudentId,
    report: &[SchoolId],
) -> Result<Option<Deviation>, OracleError> {
    let q = p.with_preferences(s, report)?;
    let eff = constrained_efficient_ir_matchings(&q, goal, budget)?;
    if let [only] = eff.as_slice() {
        if p.prefers(s, only.school_of(s), against.school_of(s)) {
            return Ok(Some(Deviation { against: against.clone(), student: s, misreport: report.to_vec(), result: only.clone() }));
        }
    }
    Ok(None)
}

/// Show that no mechanism picking from the constrained-efficient IR set can
/// be strategy-proof: whichever of the two efficient matchings it picks,
/// some student can misreport so that the other becomes the only option.
///
/// Misreports that put the other matching's school first and the initial
/// school second are tried first; every order is tried after that.
pub fn replay_example3_impossibility(p: &Problem, goal: &PolicyGoal, budget: u128) -> Result<ImpossibilityCertificate, OracleError> {
    let efficient = constrained_efficient_ir_matchings(p, goal, budget)?;
    if efficient.len() != 2 {
        return Err(OracleError::NotApplicable(format!(
            "expected two constrained-efficient IR matchings, found {}",
            efficient.len()
        )));
    }
    let mut deviations = Vec::new();
    for (i, against) in efficient.iter().enumerate() {
        let other = &efficient[1 - i];
        let mut found = None;
        for s in p.student_ids() {
            let (Some(want), Some(_)) = (other.school_of(s), against.school_of(s)) else { continue };
            if !p.prefers(s, Some(want), against.school_of(s)) {
                continue;
            }
            let c0 = p.initial_school(s);
            let mut report = vec![want];
            if c0 != want {
                report.push(c0);
            }
            report.extend(p.preferences(s).iter().copied().filter(|&c| c != want && c != c0));
            if let Some(d) = try_deviation(p, goal, budget, against, s, &report)? {
                found = Some(d);
                break;
            }
        }
        if found.is_none() {
            'outer: for s in p.student_ids() {
                let schools: Vec<SchoolId> = p.school_ids().collect();
                for report in schools.into_iter().permutations(p.n_schools()) {
                    if let Some(d) = try_deviation(p, goal, budget, against, s, &report)? {
                        found = Some(d);
                        break 'outer;
                    }
                }
            }
        }
        match found {
            Some(d) => deviations.push(d),
            None => {
                return Err(OracleError::NotApplicable(format!(
                    "no profitable deviation against {}",
                    against.display(p)
                )))
            }
        }
    }
    Ok(ImpossibilityCertificate {
        profile: p.student_ids().map(|s| p.preferences(s).to_vec()).collect(),
        efficient,
        deviations,
    })
}

/// A district, its type ceilings and the search options for the question
/// whether some admissions rule is d-weakly acceptant, respects the
/// ceilings, and satisfies IRC and weak substitutability.
#[derive(Clone, Debug)]
pub struct NonexistenceInstance {
    pub problem: Problem,
    pub district: DistrictId,
    pub ceilings: BTreeMap<TypeId, u32>,
    /// Fix the chosen student on the all-at-first-school set when the
    /// instance is symmetric across types and within types.
    pub symmetry: bool,
    pub max_nodes: u64,
}

impl NonexistenceInstance {
    pub fn new(problem: Problem, district: DistrictId, ceilings: BTreeMap<TypeId, u32>) -> Self {
        NonexistenceInstance { problem, district, ceilings, symmetry: true, max_nodes: 1_000_000 }
    }
}

/// Case split of a failed search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Refutation {
    /// Propagation left no admissible value for this set.
    Wipeout { set: Matching },
    /// Every candidate value of `set` leads to a contradiction.
    Branch { set: Matching, cases: Vec<(Matching, Refutation)> },
}

impl Refutation {
    pub fn size(&self) -> usize {
        match self {
            Refutation::Wipeout { .. } => 1,
            Refutation::Branch { cases, .. } => 1 + cases.iter().map(|(_, r)| r.size()).sum::<usize>(),
        }
    }

    /// Indented case analysis.
    pub fn render(&self, p: &Problem) -> String {
        fn go(r: &Refutation, p: &Problem, depth: usize, out: &mut String) {
            let pad = "  ".repeat(depth);
            match r {
                Refutation::Wipeout { set } => {
                    out.push_str(&format!("{pad}no admissible value for Ch({})\n", set.display(p)));
                }
                Refutation::Branch { set, cases } => {
                    for (value, sub) in cases {
                        out.push_str(&format!("{pad}Ch({}) = {}\n", set.display(p), value.display(p)));
                        go(sub, p, depth + 1, out);
                    }
                }
            }
        }
        let mut out = String::new();
        go(self, p, 0, &mut out);
        out
    }
}

#[derive(Clone, Debug)]
pub enum SearchResult {
    Unsatisfiable { refutation: Refutation, nodes: u64 },
    /// An explicit table rule satisfying every requirement.
    Satisfiable { rule: RuleSpec, nodes: u64 },
}

struct Csp {
    universe: Vec<Contract>,
    vars: Vec<u64>,
    /// arcs[v]: (neighbour, removed contract bit, v is the superset)
    arcs: Vec<Vec<(usize, u64, bool)>>,
    nodes: u64,
    max_nodes: u64,
}

type Domains = Vec<Vec<u64>>;

/// Whether (Ch(Y), Ch(Y∖{y})) = (a, b) is consistent with IRC and weak substitutability.
fn pair_ok(a: u64, b: u64, bit: u64) -> bool {
    if a & bit == 0 {
        a == b
    } else {
        a & !bit & !b == 0
    }
}

impl Csp {
    fn supported(&self, doms: &Domains, val: u64, w: usize, bit: u64, v_super: bool) -> bool {
        doms[w].iter().any(|&o| if v_super { pair_ok(val, o, bit) } else { pair_ok(o, val, bit) })
    }

    /// AC-3. Returns the first variable whose domain empties.
    fn propagate(&self, doms: &mut Domains, seeds: Vec<usize>) -> Option<usize> {
        let mut queue: std::collections::VecDeque<usize> = seeds.into_iter().collect();
        let mut queued = vec![false; self.vars.len()];
        for &v in &queue {
            queued[v] = true;
        }
        while let Some(w) = queue.pop_front() {
            queued[w] = false;
            for &(v, bit, w_super) in &self.arcs[w] {
                // revise v against w; v is the superset exactly when w is not
                let v_super = !w_super;
                let before = doms[v].len();
                let keep: Vec<u64> =
                    doms[v].iter().copied().filter(|&val| self.supported(doms, val, w, bit, v_super)).collect();
                if keep.len() != before {
                    doms[v] = keep;
                    if doms[v].is_empty() {
                        return Some(v);
                    }
                    if !queued[v] {
                        queued[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        None
    }

    fn set(&self, mask: u64) -> Matching {
        (0..64).filter(|i| mask >> i & 1 == 1).map(|i| self.universe[i]).collect()
    }

    fn solve(&mut self, doms: Domains) -> Result<Result<Domains, Refutation>, OracleError> {
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Err(OracleError::SearchBudgetExceeded { nodes: self.max_nodes });
        }
        let pick = (0..self.vars.len()).filter(|&v| doms[v].len() > 1).min_by_key(|&v| (doms[v].len(), v));
        let Some(v) = pick else {
            return Ok(Ok(doms));
        };
        let mut cases = Vec::new();
        for &val in &doms[v] {
            let mut next = doms.clone();
            next[v] = vec![val];
            let sub = match self.propagate(&mut next, vec![v]) {
                Some(w) => Refutation::Wipeout { set: self.set(self.vars[w]) },
                None => match self.solve(next)? {
                    Ok(solution) => return Ok(Ok(solution)),
                    Err(r) => r,
                },
            };
            cases.push((self.set(val), sub));
        }
        Ok(Err(Refutation::Branch { set: self.set(self.vars[v]), cases }))
    }
}

fn count_bits(mask: u64, universe: &[Contract], pred: impl Fn(&Contract) -> bool) -> u32 {
    (0..universe.len()).filter(|&i| mask >> i & 1 == 1 && pred(&universe[i])).count() as u32
}

/// Backtracking search for a choice function on the district's
/// feasible-for-students sets.
pub fn search_rule_nonexistence(inst: &NonexistenceInstance) -> Result<SearchResult, OracleError> {
    let p = &inst.problem;
    let d = inst.district;
    let universe = p.district_contracts(d);
    if universe.len() > 63 {
        return Err(OracleError::UniverseTooLarge { size: universe.len() as u128 });
    }
    let ceiling = |t: TypeId| inst.ceilings.get(&t).copied().unwrap_or(u32::MAX);
    let k_d = p.k_d(d) as u32;

    let mut vars = Vec::new();
    let _ = for_each_subset(&universe, true, |set| {
        vars.push(set.iter().map(|x| 1u64 << universe.binary_search(x).unwrap()).fold(0, |a, b| a | b));
        ControlFlow::Continue(())
    });
    let index: HashMap<u64, usize> = vars.iter().enumerate().map(|(i, &m)| (m, i)).collect();

    let local_ok = |y: u64, z: u64| -> bool {
        for &c in p.schools_of(d) {
            if count_bits(z, &universe, |x| x.school == c) > p.capacity(c) {
                return false;
            }
        }
        for t in p.type_ids() {
            if count_bits(z, &universe, |x| p.student_type(x.student) == t) > ceiling(t) {
                return false;
            }
        }
        let size = z.count_ones();
        (0..universe.len()).filter(|&i| (y & !z) >> i & 1 == 1).all(|i| {
            let x = universe[i];
            let t = p.student_type(x.student);
            count_bits(z, &universe, |o| o.school == x.school) >= p.capacity(x.school)
                || size >= k_d
                || count_bits(z, &universe, |o| p.student_type(o.student) == t) >= ceiling(t)
        })
    };

    let mut doms: Domains = vars
        .iter()
        .map(|&y| {
            let mut vals = Vec::new();
            // submasks of y, ascending
            let mut z = 0u64;
            loop {
                if local_ok(y, z) {
                    vals.push(z);
                }
                if z == y {
                    break;
                }
                z = (z.wrapping_sub(y)) & y;
            }
            vals
        })
        .collect();

    if inst.symmetry {
        let d_students: Vec<StudentId> = {
            let mut v: Vec<StudentId> = universe.iter().map(|x| x.student).collect();
            v.dedup();
            v
        };
        let sizes: Vec<usize> =
            p.type_ids().map(|t| d_students.iter().filter(|&&s| p.student_type(s) == t).count()).collect();
        let symmetric = sizes.windows(2).all(|w| w[0] == w[1])
            && p.type_ids().map(ceiling).collect::<Vec<_>>().windows(2).all(|w| w[0] == w[1]);
        if let (true, Some(&c1), Some(&s0)) = (symmetric, p.schools_of(d).first(), d_students.first()) {
            if p.capacity(c1) == 1 && d_students.len() > 1 {
                let all_at_c1 = universe
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| x.school == c1)
                    .fold(0u64, |a, (i, _)| a | 1 << i);
                let s0_bit = 1u64 << universe.binary_search(&p.contract(s0, c1)).unwrap();
                if let Some(&v) = index.get(&all_at_c1) {
                    doms[v].retain(|&z| z & s0_bit != 0);
                }
            }
        }
    }

    let mut arcs = vec![Vec::new(); vars.len()];
    for (v, &y) in vars.iter().enumerate() {
        for i in (0..universe.len()).filter(|&i| y >> i & 1 == 1) {
            let bit = 1u64 << i;
            let w = index[&(y & !bit)];
            arcs[v].push((w, bit, true));
            arcs[w].push((v, bit, false));
        }
    }

    let mut csp = Csp { universe: universe.clone(), vars, arcs, nodes: 0, max_nodes: inst.max_nodes };
    if let Some(v) = doms.iter().position(Vec::is_empty) {
        return Ok(SearchResult::Unsatisfiable { refutation: Refutation::Wipeout { set: csp.set(csp.vars[v]) }, nodes: 0 });
    }
    let all: Vec<usize> = (0..csp.vars.len()).collect();
    if let Some(v) = csp.propagate(&mut doms, all) {
        return Ok(SearchResult::Unsatisfiable { refutation: Refutation::Wipeout { set: csp.set(csp.vars[v]) }, nodes: 1 });
    }
    let outcome = csp.solve(doms)?;
    let nodes = csp.nodes;
    Ok(match outcome {
        Err(refutation) => SearchResult::Unsatisfiable { refutation, nodes },
        Ok(solution) => {
            let entries: BTreeMap<Matching, Matching> =
                csp.vars.iter().zip(&solution).map(|(&y, vals)| (csp.set(y), csp.set(vals[0]))).collect();
            let mut rule = RuleSpec::table(d, ChoiceTable { domain: TableDomain::FeasibleForStudents, entries });
            rule.district_ceilings = inst.ceilings.clone();
            SearchResult::Satisfiable { rule, nodes }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::policy::GoalForm;

    #[test]
    fn one_student_two_schools_has_three_matchings() {
        let p = fixtures::build(
            &["d1", "d2"],
            &["t"],
            &[("c1", "d1", 1), ("c2", "d2", 1)],
            &[("s1", "d1", "t", &["c1", "c2"])],
            &[("s1", "c1")],
        );
        assert_eq!(enumerate_feasible_matchings(&p, 100).unwrap().count(), 3);
    }

    #[test]
    fn no_students_gives_empty_matching() {
        let p = fixtures::build(&["d1", "d2"], &["t"], &[("c1", "d1", 1), ("c2", "d2", 1)], &[], &[]);
        let all: Vec<Matching> = enumerate_feasible_matchings(&p, 100).unwrap().collect();
        assert_eq!(all, vec![Matching::new()]);
    }

    #[test]
    fn top_ranked_initial_schools_leave_only_initial() {
        let base = fixtures::simple_market();
        let mut p = base.clone();
        for s in base.student_ids() {
            let c0 = base.initial_school(s);
            let mut prefs = vec![c0];
            prefs.extend(base.preferences(s).iter().copied().filter(|&c| c != c0));
            p = p.with_preferences(s, &prefs).unwrap();
        }
        let goal = PolicyGoal::new(GoalForm::Unconstrained, true);
        assert_eq!(constrained_efficient_ir_matchings(&p, &goal, DEFAULT_BUDGET).unwrap(), vec![p.initial_matching()]);
    }

    #[test]
    fn zero_budget_audit_is_not_exhaustive() {
        let p = fixtures::simple_market();
        let rules = RuleProfile::new(fixtures::simple_rules(&p), &p).unwrap();
        let r = audit_strategy_proofness(&Mechanism::Spda(rules), &p, &AuditConfig { max_runs: 0 }).unwrap();
        assert!(!r.exhaustive);
        assert_eq!(r.runs, 0);
        assert!(r.findings.is_empty());
    }

    #[test]
    fn pair_constraint() {
        // y rejected: the choice must not change
        assert!(pair_ok(0b01, 0b01, 0b10));
        assert!(!pair_ok(0b01, 0b00, 0b10));
        // y chosen: what else was chosen stays chosen
        assert!(pair_ok(0b11, 0b01, 0b10));
        assert!(!pair_ok(0b11, 0b00, 0b10));
    }
}
