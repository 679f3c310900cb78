//! Student-proposing deferred acceptance over district admissions rules.

use thiserror::Error;

use crate::model::{distribution_of, Contract, DistrictId, Matching, ModelError, Problem, SchoolId, StudentId, Verdict};
use crate::policy::{alpha_gap, type_gap, Rational};
use crate::rules::{RuleError, RuleProfile};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpdaStep {
    /// Contracts proposed for the first time in this step.
    pub proposals: Matching,
    /// Tentatively held after the districts choose.
    pub tentative: Matching,
    pub rejected: Matching,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpdaTrace {
    pub steps: Vec<SpdaStep>,
    pub outcome: Matching,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SpdaError {
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("rule violation after {} steps: {detail}", steps.len())]
    RuleViolation { detail: String, steps: Vec<SpdaStep> },
}

fn step_guard(p: &Problem) -> usize {
    p.n_students() * p.n_schools() + 1
}

fn check_choice(
    d: DistrictId,
    offered: &Matching,
    chosen: &Matching,
    p: &Problem,
    steps: &[SpdaStep],
) -> Result<(), SpdaError> {
    if !chosen.is_subset(offered) || !chosen.is_feasible_for_students() {
        return Err(SpdaError::RuleViolation {
            detail: format!(
                "{} chose {} from {}",
                p.district_name(d),
                chosen.display(p),
                offered.display(p)
            ),
            steps: steps.to_vec(),
        });
    }
    Ok(())
}

fn deferred_acceptance(
    p: &Problem,
    rules: &RuleProfile,
    lists: &[Vec<SchoolId>],
) -> Result<SpdaTrace, SpdaError> {
    let mut next = vec![0usize; p.n_students()];
    let mut held = Matching::new();
    let mut steps: Vec<SpdaStep> = Vec::new();
    loop {
        if steps.len() >= step_guard(p) {
            return Err(SpdaError::RuleViolation {
                detail: format!("no termination within {} steps", step_guard(p)),
                steps,
            });
        }
        let mut proposals = Matching::new();
        for s in p.student_ids() {
            if held.school_of(s).is_none() && next[s.0] < lists[s.0].len() {
                proposals.insert(p.contract(s, lists[s.0][next[s.0]]));
                next[s.0] += 1;
            }
        }
        let offered = held.union(&proposals);
        let mut tentative = Matching::new();
        for d in p.district_ids() {
            let xd = offered.for_district(d);
            let chosen = rules.choose(d, &xd)?;
            check_choice(d, &xd, &chosen, p, &steps)?;
            tentative = tentative.union(&chosen);
        }
        let rejected = offered.difference(&tentative);
        let stop = rejected.is_empty();
        held = tentative.clone();
        steps.push(SpdaStep { proposals, tentative, rejected });
        if stop {
            return Ok(SpdaTrace { steps, outcome: held });
        }
    }
}

fn full_lists(p: &Problem) -> Vec<Vec<SchoolId>> {
    p.student_ids().map(|s| p.preferences(s).to_vec()).collect()
}

/// Simultaneous proposals; stops at the first step without rejections.
pub fn run_spda(p: &Problem, rules: &RuleProfile) -> Result<SpdaTrace, SpdaError> {
    deferred_acceptance(p, rules, &full_lists(p))
}

/// Each district runs deferred acceptance on its own students and schools.
pub fn run_intradistrict_spda(p: &Problem, rules: &RuleProfile) -> Result<SpdaTrace, SpdaError> {
    let lists: Vec<Vec<SchoolId>> = p
        .student_ids()
        .map(|s| {
            let home = p.home_district(s);
            p.preferences(s).iter().copied().filter(|&c| p.school_district(c) == home).collect()
        })
        .collect();
    deferred_acceptance(p, rules, &lists)
}

/// One proposal at a time: the lowest-indexed student without a held
/// contract proposes to her next school and only that district chooses.
pub fn run_spda_sequential(p: &Problem, rules: &RuleProfile) -> Result<Matching, SpdaError> {
    let lists = full_lists(p);
    let mut next = vec![0usize; p.n_students()];
    let mut held = Matching::new();
    let guard = p.n_students() * p.n_schools() + 1;
    for _ in 0..=guard {
        let Some(s) = p
            .student_ids()
            .find(|&s| held.school_of(s).is_none() && next[s.0] < lists[s.0].len())
        else {
            return Ok(held);
        };
        let x = p.contract(s, lists[s.0][next[s.0]]);
        next[s.0] += 1;
        let xd = held.for_district(x.district).with(x);
        let chosen = rules.choose(x.district, &xd)?;
        check_choice(x.district, &xd, &chosen, p, &[])?;
        held = held.difference(&xd).union(&chosen);
    }
    Err(SpdaError::RuleViolation { detail: "sequential run did not terminate".into(), steps: Vec::new() })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StabilityWitness {
    /// The district would drop some of its assigned contracts.
    DistrictRejects { district: DistrictId, chosen: Matching },
    Blocking(Contract),
}

/// Stability: every district keeps its assignment and no contract that a
/// student prefers would be chosen by its district.
pub fn is_stable(x: &Matching, p: &Problem, rules: &RuleProfile) -> Result<Verdict<StabilityWitness>, RuleError> {
    for d in p.district_ids() {
        let xd = x.for_district(d);
        let chosen = rules.choose(d, &xd)?;
        if chosen != xd {
            return Ok(Verdict::Fails(StabilityWitness::DistrictRejects { district: d, chosen }));
        }
    }
    for s in p.student_ids() {
        let current = x.school_of(s);
        for &c in p.preferences(s) {
            if Some(c) == current {
                break;
            }
            let y = p.contract(s, c);
            if rules.choose(y.district, &x.for_district(y.district).with(y))?.contains(&y) {
                return Ok(Verdict::Fails(StabilityWitness::Blocking(y)));
            }
        }
    }
    Ok(Verdict::Holds)
}

/// Every student weakly prefers her assignment to her initial school. The
/// witness is the student who loses the most rank positions.
pub fn check_individual_rationality(x: &Matching, p: &Problem) -> Verdict<StudentId> {
    let worst = p
        .student_ids()
        .map(|s| {
            let got = p.outcome_rank(s, x.school_of(s)) as i64;
            (got - p.rank(s, p.initial_school(s)) as i64, s)
        })
        .filter(|&(drop, _)| drop > 0)
        .max_by_key(|&(drop, s)| (drop, std::cmp::Reverse(s)));
    match worst {
        None => Verdict::Holds,
        Some((_, s)) => Verdict::Fails(s),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Imbalance {
    pub district: DistrictId,
    pub assigned: usize,
    pub k_d: usize,
}

/// |X_d| = k_d for every district.
pub fn check_balanced_exchange(x: &Matching, p: &Problem) -> Verdict<Imbalance> {
    for d in p.district_ids() {
        let assigned = x.iter().filter(|c| c.district == d).count();
        if assigned != p.k_d(d) {
            return Verdict::Fails(Imbalance { district: d, assigned, k_d: p.k_d(d) });
        }
    }
    Verdict::Holds
}

/// Largest difference in a type's share between two districts.
pub fn alpha_diversity_gap(x: &Matching, p: &Problem) -> Result<Rational, ModelError> {
    Ok(alpha_gap(&distribution_of(x, p)?, p))
}

/// The gap restricted to each type, in type order.
pub fn alpha_gaps_by_type(x: &Matching, p: &Problem) -> Result<Vec<Rational>, ModelError> {
    let xi = distribution_of(x, p)?;
    Ok(p.type_ids().map(|t| type_gap(&xi, p, t)).collect())
}

/// The first student strictly worse off in `x` than in `y`, if any.
pub fn first_worse_off(x: &Matching, y: &Matching, p: &Problem) -> Option<StudentId> {
    p.student_ids().find(|&s| p.prefers(s, y.school_of(s), x.school_of(s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn profile(p: &Problem, specs: Vec<crate::rules::RuleSpec>) -> RuleProfile {
        RuleProfile::new(specs, p).unwrap()
    }

    #[test]
    fn intradistrict_keeps_d2_students_home() {
        let p = fixtures::simple_market();
        let r = profile(&p, fixtures::simple_rules(&p));
        let out = run_intradistrict_spda(&p, &r).unwrap().outcome;
        let c3 = p.school("c3").unwrap();
        assert_eq!(out.school_of(p.student("s3").unwrap()), Some(c3));
        assert_eq!(out.school_of(p.student("s4").unwrap()), Some(c3));
    }

    #[test]
    fn empty_matching_is_blocked() {
        let p = fixtures::simple_market();
        let r = profile(&p, fixtures::simple_rules(&p));
        let v = is_stable(&Matching::new(), &p, &r).unwrap();
        assert!(matches!(v, Verdict::Fails(StabilityWitness::Blocking(_))));
    }

    #[test]
    fn initial_matching_is_ir_and_balanced() {
        let p = fixtures::simple_market();
        let x = p.initial_matching();
        assert!(check_individual_rationality(&x, &p).holds());
        assert!(check_balanced_exchange(&x, &p).holds());
    }

    #[test]
    fn symmetric_matching_has_zero_gap() {
        let p = fixtures::build(
            &["d1", "d2"],
            &["a", "b"],
            &[("c1", "d1", 2), ("c2", "d2", 2)],
            &[
                ("s1", "d1", "a", &["c1", "c2"]),
                ("s2", "d1", "b", &["c1", "c2"]),
                ("s3", "d2", "a", &["c2", "c1"]),
                ("s4", "d2", "b", &["c2", "c1"]),
            ],
            &[("s1", "c1"), ("s2", "c1"), ("s3", "c2"), ("s4", "c2")],
        );
        assert_eq!(alpha_diversity_gap(&p.initial_matching(), &p).unwrap(), Rational::from_integer(0));
    }
}
