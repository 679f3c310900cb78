//! Worked examples with printed outcomes.

use std::collections::BTreeMap;

use interdistrict::fixtures;
use interdistrict::policy::{
    diversity_condition, exchange_fails_at, implied_bounds, indicator_of, is_mconvex, is_pseudo_mconcave,
    legitimate_distributions, upper_contour, PolicyError, DEFAULT_BUDGET,
};
use interdistrict::spda::{
    alpha_gaps_by_type, check_balanced_exchange, check_individual_rationality, is_stable, run_spda,
    run_spda_sequential,
};
use interdistrict::ttc::{run_ttc, TtcError};
use interdistrict::*;

fn m(p: &Problem, pairs: &[(&str, &str)]) -> Matching {
    Matching::from_names(p, pairs)
}

fn profile(p: &Problem, specs: Vec<RuleSpec>) -> RuleProfile {
    RuleProfile::new(specs, p).unwrap()
}

fn order(p: &Problem) -> Vec<StudentId> {
    p.student_ids().collect()
}

#[test]
fn example1_spda_outcome_and_first_step() {
    let p = fixtures::simple_market();
    let t = run_spda(&p, &profile(&p, fixtures::simple_rules(&p))).unwrap();
    assert_eq!(t.outcome, m(&p, &[("s1", "c2"), ("s2", "c3"), ("s3", "c1"), ("s4", "c2")]));
    assert_eq!(t.steps.len(), 2);
    assert_eq!(t.steps[0].tentative, m(&p, &[("s2", "c3"), ("s3", "c1"), ("s4", "c2")]));
}

#[test]
fn example1_outcome_is_not_individually_rational() {
    let p = fixtures::simple_market();
    let t = run_spda(&p, &profile(&p, fixtures::simple_rules(&p))).unwrap();
    assert!(!check_individual_rationality(&t.outcome, &p).holds());
}

#[test]
fn respecting_variant_is_individually_rational() {
    let p = fixtures::simple_market();
    let out = run_spda(&p, &profile(&p, fixtures::respecting_rules(&p))).unwrap().outcome;
    assert_eq!(out, m(&p, &[("s1", "c1"), ("s2", "c3"), ("s3", "c2"), ("s4", "c2")]));
    assert!(check_individual_rationality(&out, &p).holds());
}

#[test]
fn rationed_variant_is_balanced() {
    let p = fixtures::simple_market();
    let out = run_spda(&p, &profile(&p, fixtures::rationed_rules(&p))).unwrap().outcome;
    assert_eq!(out, m(&p, &[("s1", "c2"), ("s2", "c3"), ("s3", "c1"), ("s4", "c3")]));
    assert!(check_balanced_exchange(&out, &p).holds());
}

#[test]
fn sequential_proposals_reach_the_same_outcome() {
    let p = fixtures::simple_market();
    for specs in [fixtures::simple_rules(&p), fixtures::respecting_rules(&p), fixtures::rationed_rules(&p)] {
        let r = profile(&p, specs);
        let out = run_spda(&p, &r).unwrap().outcome;
        assert_eq!(run_spda_sequential(&p, &r).unwrap(), out);
        assert!(is_stable(&out, &p, &r).unwrap().holds());
    }
}

#[test]
fn reserves_bounds_and_deltas() {
    let p = fixtures::reserves_market();
    let ceil = fixtures::reserves_ceilings(&p);
    let rep = diversity_condition(&p, &ceil, Rational::new(3, 4)).unwrap();
    let cells: Vec<(DistrictId, TypeId)> =
        p.district_ids().flat_map(|d| p.type_ids().map(move |t| (d, t))).collect();
    let floor: Vec<u32> = cells.iter().map(|c| rep.bounds.floor[c]).collect();
    let ceiling: Vec<u32> = cells.iter().map(|c| rep.bounds.ceiling[c]).collect();
    assert_eq!(floor, vec![1, 2, 2, 0]);
    assert_eq!(ceiling, vec![2, 3, 3, 1]);
    let mut deltas: Vec<Rational> = rep.deltas.iter().map(|d| d.value).collect();
    deltas.sort();
    assert_eq!(
        deltas,
        vec![Rational::new(-1, 6), Rational::new(-1, 6), Rational::new(3, 4), Rational::new(3, 4)]
    );
    assert!(rep.satisfied);
    assert!(!diversity_condition(&p, &ceil, Rational::new(1, 6)).unwrap().satisfied);
    assert!(!diversity_condition(&p, &ceil, Rational::new(7, 10)).unwrap().satisfied);
}

#[test]
fn reserves_flow_matches_enumeration() {
    let p = fixtures::reserves_market();
    let ceil = fixtures::reserves_ceilings(&p);
    let bounds = implied_bounds(&p, &ceil).unwrap();
    let legit = legitimate_distributions(&p, &ceil, DEFAULT_BUDGET).unwrap();
    for d in p.district_ids() {
        for t in p.type_ids() {
            let vals: Vec<u32> = legit.iter().map(|xi| xi.district_type(&p, d, t)).collect();
            assert_eq!(bounds.floor[&(d, t)], *vals.iter().min().unwrap());
            assert_eq!(bounds.ceiling[&(d, t)], *vals.iter().max().unwrap());
        }
    }
}

#[test]
fn reserves_alternative_scenarios_are_legitimate() {
    let p = fixtures::reserves_market();
    let legit = legitimate_distributions(&p, &fixtures::reserves_ceilings(&p), DEFAULT_BUDGET).unwrap();
    let d1 = p.district("d1").unwrap();
    let (t1, t2) = (p.type_id("t1").unwrap(), p.type_id("t2").unwrap());
    for (a, b) in [(1, 3), (2, 2)] {
        assert!(legit.iter().any(|xi| xi.district_type(&p, d1, t1) == a && xi.district_type(&p, d1, t2) == b));
    }
}

#[test]
fn joint_attainability_of_bounds() {
    let p = fixtures::reserves_market();
    let ceil = fixtures::reserves_ceilings(&p);
    let bounds = implied_bounds(&p, &ceil).unwrap();
    let legit = legitimate_distributions(&p, &ceil, DEFAULT_BUDGET).unwrap();
    for t in p.type_ids() {
        for d in p.district_ids() {
            for d2 in p.district_ids().filter(|&x| x != d) {
                assert!(legit.iter().any(|xi| xi.district_type(&p, d, t) == bounds.ceiling[&(d, t)]
                    && xi.district_type(&p, d2, t) == bounds.floor[&(d2, t)]));
            }
        }
    }
}

#[test]
fn zero_ceilings_are_infeasible() {
    let p = fixtures::reserves_market();
    let zero: BTreeMap<(SchoolId, TypeId), u32> = fixtures::reserves_ceilings(&p).into_keys().map(|k| (k, 0)).collect();
    assert_eq!(implied_bounds(&p, &zero), Err(PolicyError::InfeasibleConstraints));
    assert!(legitimate_distributions(&p, &zero, DEFAULT_BUDGET).unwrap().is_empty());
}

#[test]
fn reserves_spda_outcome_and_gaps() {
    let p = fixtures::reserves_market();
    let out = run_spda(&p, &profile(&p, fixtures::reserves_rules(&p))).unwrap().outcome;
    let want = m(
        &p,
        &[("s1", "c2"), ("s2", "c3"), ("s3", "c2"), ("s4", "c1"), ("s5", "c1"), ("s6", "c4"), ("s7", "c3")],
    );
    assert_eq!(out, want);
    assert_eq!(alpha_gaps_by_type(&out, &p).unwrap(), vec![Rational::new(1, 6); 2]);
}

#[test]
fn example5_ttc_outcome_and_cycles() {
    let p = fixtures::ttc_market();
    let t = run_ttc(&p, &fixtures::ttc_goal(&p), &order(&p)).unwrap();
    let want = m(
        &p,
        &[("s1", "c3"), ("s2", "c1"), ("s3", "c4"), ("s4", "c2"), ("s5", "c1"), ("s6", "c3"), ("s7", "c2")],
    );
    assert_eq!(t.outcome, want);
    assert_eq!(t.steps.len(), 5);
    let s = |n: &str| p.student(n).unwrap();
    let pair = |c: &str, ty: &str| (p.school(c).unwrap(), p.type_id(ty).unwrap());

    let first = &t.steps[0].cycles;
    assert_eq!(first.len(), 1);
    assert_eq!(first[0].students, vec![s("s3"), s("s7")]);
    assert_eq!(first[0].pairs, vec![pair("c4", "t1"), pair("c2", "t2")]);

    let second = &t.steps[1].cycles;
    assert_eq!(second.len(), 1);
    assert_eq!(second[0].students, vec![s("s4")]);
    assert_eq!(second[0].pairs, vec![pair("c2", "t1")]);
}

#[test]
fn example5_ttc_is_individually_rational_and_in_goal() {
    let p = fixtures::ttc_market();
    let goal = fixtures::ttc_goal(&p);
    let t = run_ttc(&p, &goal, &order(&p)).unwrap();
    assert!(check_individual_rationality(&t.outcome, &p).holds());
    assert!(goal.contains(&distribution_of(&t.outcome, &p).unwrap(), &p));
}

fn example3_pair(p: &Problem) -> (Distribution, Distribution) {
    let x = m(p, &[("s1", "c6"), ("s2", "c2"), ("s3", "c4"), ("s4", "c3"), ("s5", "c5"), ("s6", "c1")]);
    let x2 = m(p, &[("s1", "c1"), ("s2", "c6"), ("s3", "c5"), ("s4", "c4"), ("s5", "c3"), ("s6", "c2")]);
    (distribution_of(&x, p).unwrap(), distribution_of(&x2, p).unwrap())
}

#[test]
fn example3_goal_membership() {
    let p = fixtures::ceiling_market();
    let goal = fixtures::ceiling_goal(&p, 1);
    let (a, b) = example3_pair(&p);
    assert!(goal.contains(&a, &p));
    assert!(goal.contains(&b, &p));
    let c3 = p.school("c3").unwrap();
    let moved = a.exchange((c3, p.type_id("t1").unwrap()), (c3, p.type_id("t2").unwrap())).unwrap();
    assert!(!goal.contains(&moved, &p));
}

#[test]
fn example3_goal_is_not_mconvex_at_c3_t1() {
    let p = fixtures::ceiling_market();
    let s = fixtures::ceiling_goal(&p, 1).members(&p, DEFAULT_BUDGET).unwrap();
    assert!(!is_mconvex(&s).holds());
    let (a, b) = example3_pair(&p);
    let cell = (p.school("c3").unwrap(), p.type_id("t1").unwrap());
    assert!(exchange_fails_at(&s, &a, &b).contains(&cell));
}

#[test]
fn example3_indicator_is_not_pseudo_concave() {
    let p = fixtures::ceiling_market();
    let s = fixtures::ceiling_goal(&p, 1).members(&p, DEFAULT_BUDGET).unwrap();
    let f = indicator_of(&s, &p);
    assert!(!is_pseudo_mconcave(&f, &p, DEFAULT_BUDGET).unwrap().holds());
    assert_eq!(upper_contour(&f, Rational::from_integer(1), &p, DEFAULT_BUDGET).unwrap(), s);
}

#[test]
fn example3_ttc_keeps_everyone_home() {
    // every school is full with one seat, so no cross-school trade keeps capacities
    let p = fixtures::ceiling_market();
    let t = run_ttc(&p, &fixtures::ceiling_goal(&p, 1), &order(&p)).unwrap();
    assert_eq!(t.outcome, p.initial_matching());
}

#[test]
fn stuck_fixture_reports_stuck() {
    let p = fixtures::stuck_market();
    let err = run_ttc(&p, &fixtures::stuck_goal(&p), &order(&p)).unwrap_err();
    assert!(matches!(err, TtcError::Stuck { .. }));
}

#[test]
fn initial_matching_outside_goal_fails_fast() {
    let p = fixtures::ttc_market();
    let c1 = p.school("c1").unwrap();
    let t1 = p.type_id("t1").unwrap();
    let mut ceilings = BTreeMap::new();
    ceilings.insert((c1, t1), 0);
    let goal = PolicyGoal::new(GoalForm::SchoolDiversity { floors: BTreeMap::new(), ceilings }, true);
    assert_eq!(run_ttc(&p, &goal, &order(&p)).unwrap_err(), TtcError::PolicyViolatedAtStart);
}
