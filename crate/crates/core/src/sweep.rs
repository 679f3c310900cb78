//! Randomized cross-checks of the mechanisms against the oracle.
//!
//! Each instance is generated from its own seed, so the sweep runs in
//! parallel and still reports the same violations on every run.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::generate::{random_order, random_problem, random_rules, random_school_diversity, GenConfig, RuleFamily};
use crate::model::{distribution_of, validate_problem, Matching, Problem};
use crate::oracle::{
    audit_strategy_proofness, constrained_efficient_ir_matchings, enumerate_stable_matchings, AuditConfig, Mechanism,
    DEFAULT_BUDGET,
};
use crate::policy::{
    attained_values, enumerate_xi0, indicator_of, is_mconvex, is_pseudo_mconcave, upper_contour, GoalForm,
    PolicyFunction, PolicyGoal,
};
use crate::rules::RuleProfile;
use crate::spda::{check_balanced_exchange, check_individual_rationality, first_worse_off, is_stable, run_intradistrict_spda, run_spda};
use crate::ttc::run_ttc;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepConfig {
    pub seed: u64,
    pub instances: usize,
    pub gen: GenConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { seed: 0x5eed, instances: 240, gen: GenConfig::default() }
    }
}

/// The checked claims, keyed by short labels.
pub const CLAUSES: [&str; 14] = [
    "a.spda-stable",
    "a.spda-student-optimal",
    "b.spda-audit",
    "c.respecting-ir",
    "c.rationed-balanced",
    "d.ttc-goal",
    "d.ttc-ir",
    "d.ttc-efficient",
    "d.ttc-audit",
    "d.goal-mconvex",
    "e.concave-iff-contours",
    "e.indicator-round-trip",
    "e.manhattan-concave-slack",
    "f.favors-own-welfare",
];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClauseTally {
    pub checked: usize,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepReport {
    pub instances: usize,
    pub clauses: BTreeMap<&'static str, ClauseTally>,
}

impl SweepReport {
    pub fn violations(&self) -> usize {
        self.clauses.values().map(|c| c.violations.len()).sum()
    }

    pub fn clean(&self) -> bool {
        self.violations() == 0
    }
}

#[derive(Default)]
struct Log {
    entries: Vec<(&'static str, Option<String>)>,
}

impl Log {
    fn check(&mut self, clause: &'static str, ok: bool, detail: impl FnOnce() -> String) {
        self.entries.push((clause, (!ok).then(detail)));
    }
}

fn weakly_better_for_all(x: &Matching, y: &Matching, p: &Problem) -> bool {
    p.student_ids().all(|s| !p.prefers(s, y.school_of(s), x.school_of(s)))
}

fn check_spda(p: &Problem, family: RuleFamily, rules: &RuleProfile, tag: &str, log: &mut Log) {
    let out = match run_spda(p, rules) {
        Ok(t) => t.outcome,
        Err(e) => {
            log.check("a.spda-stable", false, || format!("{tag}: {e}"));
            return;
        }
    };
    let stable = is_stable(&out, p, rules).is_ok_and(|v| v.holds());
    log.check("a.spda-stable", stable, || format!("{tag}: {} is not stable", out.display(p)));

    // student-optimality is measured against matchings stable under the completions
    let optimal = rules
        .completions(p)
        .ok()
        .and_then(|c| enumerate_stable_matchings(p, &c, DEFAULT_BUDGET).ok())
        .is_some_and(|all| all.contains(&out) && all.iter().all(|y| weakly_better_for_all(&out, y, p)));
    log.check("a.spda-student-optimal", optimal, || format!("{tag}: {} is not student-optimal", out.display(p)));

    let audit = audit_strategy_proofness(&Mechanism::Spda(rules.clone()), p, &AuditConfig::default());
    let clean = audit.as_ref().is_ok_and(|r| r.exhaustive && r.findings.is_empty());
    log.check("b.spda-audit", clean, || format!("{tag}: {audit:?}"));

    match family {
        RuleFamily::InitialRespecting => {
            let ir = check_individual_rationality(&out, p);
            log.check("c.respecting-ir", ir.holds(), || format!("{tag}: {ir:?}"));
        }
        RuleFamily::Rationed => {
            let b = check_balanced_exchange(&out, p);
            log.check("c.rationed-balanced", b.holds(), || format!("{tag}: {b:?}"));
        }
        RuleFamily::FavorsOwn => {
            let worse = run_intradistrict_spda(p, rules).map(|t| first_worse_off(&out, &t.outcome, p));
            log.check("f.favors-own-welfare", matches!(worse, Ok(None)), || format!("{tag}: {worse:?}"));
        }
        RuleFamily::Sequential => {}
    }
}

fn check_ttc(p: &Problem, goal: &PolicyGoal, master: &[crate::model::StudentId], tag: &str, log: &mut Log) {
    let out = match run_ttc(p, goal, master) {
        Ok(t) => t.outcome,
        Err(e) => {
            log.check("d.ttc-goal", false, || format!("{tag}: {e}"));
            return;
        }
    };
    let in_goal = distribution_of(&out, p).is_ok_and(|xi| goal.contains(&xi, p));
    log.check("d.ttc-goal", in_goal, || format!("{tag}: {} outside goal", out.display(p)));
    let ir = check_individual_rationality(&out, p);
    log.check("d.ttc-ir", ir.holds(), || format!("{tag}: {ir:?}"));
    let efficient = constrained_efficient_ir_matchings(p, goal, DEFAULT_BUDGET).is_ok_and(|e| e.contains(&out));
    log.check("d.ttc-efficient", efficient, || format!("{tag}: {} not constrained efficient", out.display(p)));
    let mech = Mechanism::Ttc { goal: goal.clone(), master: master.to_vec() };
    let audit = audit_strategy_proofness(&mech, p, &AuditConfig::default());
    let clean = audit.as_ref().is_ok_and(|r| r.exhaustive && r.findings.is_empty());
    log.check("d.ttc-audit", clean, || format!("{tag}: {audit:?}"));
}

fn contours_mconvex(f: &PolicyFunction, p: &Problem) -> bool {
    attained_values(f, p, DEFAULT_BUDGET).is_ok_and(|vals| {
        vals.iter().all(|&l| upper_contour(f, l, p, DEFAULT_BUDGET).is_ok_and(|s| is_mconvex(&s).holds()))
    })
}

/// The same market with every school able to seat everyone.
fn slack_capacities(p: &Problem) -> Problem {
    let mut spec = p.to_spec();
    for school in &mut spec.schools {
        school.capacity = p.total_students() as u32;
    }
    validate_problem(&spec).expect("raising capacities keeps the problem valid")
}

fn check_functions(p: &Problem, goals: &[PolicyGoal], rng: &mut ChaCha8Rng, tag: &str, log: &mut Log) {
    let Ok(xi0) = enumerate_xi0(p, DEFAULT_BUDGET) else { return };
    let mut functions = Vec::new();
    for goal in goals {
        let members = goal.members(p, DEFAULT_BUDGET).unwrap_or_default();
        let f = indicator_of(&members, p);
        let convex = is_mconvex(&members).holds();
        log.check("d.goal-mconvex", convex, || format!("{tag}: {goal:?}"));
        if convex {
            let concave = is_pseudo_mconcave(&f, p, DEFAULT_BUDGET).is_ok_and(|v| v.holds());
            let back = upper_contour(&f, 1.into(), p, DEFAULT_BUDGET).is_ok_and(|s| s == members);
            log.check("e.indicator-round-trip", concave && back, || format!("{tag}: {goal:?}"));
        }
        functions.push(f);
    }
    if let Some(ideal) = xi0.choose(rng) {
        if let Ok(f) = PolicyFunction::manhattan(ideal.clone(), p) {
            functions.push(f);
        }
    }
    // with capacities that never bind, every Manhattan score is pseudo M-concave
    let slack = slack_capacities(p);
    if let Some(ideal) = enumerate_xi0(&slack, DEFAULT_BUDGET).ok().and_then(|all| all.choose(rng).cloned()) {
        if let Ok(f) = PolicyFunction::manhattan(ideal.clone(), &slack) {
            let concave = is_pseudo_mconcave(&f, &slack, DEFAULT_BUDGET).is_ok_and(|v| v.holds());
            log.check("e.manhattan-concave-slack", concave, || format!("{tag}: ideal {:?}", ideal.counts()));
        }
    }
    // an arbitrary subset, usually not M-convex, exercises the other direction
    let random: Vec<_> = xi0.iter().filter(|_| rand::Rng::gen_bool(rng, 0.5)).cloned().collect();
    functions.push(indicator_of(&random, p));
    for f in &functions {
        let lhs = is_pseudo_mconcave(f, p, DEFAULT_BUDGET).is_ok_and(|v| v.holds());
        let rhs = contours_mconvex(f, p);
        log.check("e.concave-iff-contours", lhs == rhs, || format!("{tag}: concave {lhs}, contours {rhs}"));
    }
}

fn run_instance(cfg: &SweepConfig, i: usize) -> Log {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
    let p = random_problem(&mut rng, &cfg.gen);
    let family = RuleFamily::ALL[i % RuleFamily::ALL.len()];
    let tag = format!("instance {i} ({family:?})");
    let mut log = Log::default();
    match RuleProfile::new(random_rules(&mut rng, &p, family), &p) {
        Ok(rules) => check_spda(&p, family, &rules, &tag, &mut log),
        Err(e) => log.check("a.spda-stable", false, || format!("{tag}: {e}")),
    }
    let goals = [
        PolicyGoal::new(GoalForm::BalancedExchange, true),
        random_school_diversity(&mut rng, &p, false),
        random_school_diversity(&mut rng, &p, true),
    ];
    let master = random_order(&mut rng, &p);
    for goal in &goals {
        check_ttc(&p, goal, &master, &tag, &mut log);
    }
    check_functions(&p, &goals, &mut rng, &tag, &mut log);
    log
}

pub fn run_sweep(cfg: &SweepConfig) -> SweepReport {
    let logs: Vec<Log> = (0..cfg.instances).into_par_iter().map(|i| run_instance(cfg, i)).collect();
    let mut clauses: BTreeMap<&'static str, ClauseTally> = CLAUSES.iter().map(|&c| (c, ClauseTally::default())).collect();
    for log in logs {
        for (clause, violation) in log.entries {
            let tally = clauses.entry(clause).or_default();
            tally.checked += 1;
            tally.violations.extend(violation);
        }
    }
    SweepReport { instances: cfg.instances, clauses }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_is_clean_and_deterministic() {
        let cfg = SweepConfig { instances: 12, ..SweepConfig::default() };
        let a = run_sweep(&cfg);
        assert!(a.clean(), "{a:?}");
        assert_eq!(a, run_sweep(&cfg));
    }
}
