//! Invariants over random desk-scale markets.

use std::collections::BTreeMap;

use interdistrict::fixtures;
use interdistrict::generate::{random_order, random_problem, random_school_diversity, GenConfig};
use interdistrict::policy::{
    count_xi0, enumerate_xi0, implied_bounds, is_mconvex, is_pseudo_mconcave, legitimate_distributions,
    PolicyError, DEFAULT_BUDGET,
};
use interdistrict::sweep::{run_sweep, SweepConfig};
use interdistrict::ttc::run_ttc;
use interdistrict::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn market(seed: u64) -> (Problem, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_problem(&mut rng, &GenConfig::default());
    (p, rng)
}

#[test]
fn random_sweep_has_no_violations() {
    let cfg = SweepConfig::default();
    assert!(cfg.instances >= 200);
    let report = run_sweep(&cfg);
    for (clause, tally) in &report.clauses {
        assert!(tally.checked > 0, "{clause} never checked");
        assert!(tally.violations.is_empty(), "{clause}: {:?}", tally.violations);
    }
}

#[test]
fn corollary_goals_are_mconvex_on_every_fixture() {
    for (name, p) in fixtures::all_markets() {
        for goal in [
            PolicyGoal::new(GoalForm::BalancedExchange, true),
            fixtures::band_goal(&p, false),
            fixtures::band_goal(&p, true),
        ] {
            let members = goal.members(&p, DEFAULT_BUDGET).unwrap();
            assert!(is_mconvex(&members).holds(), "{name}: {goal:?}");
        }
    }
}

#[test]
fn manhattan_score_on_a_roomy_toy_is_pseudo_concave() {
    let p = fixtures::build(
        &["d1", "d2"],
        &["t1", "t2"],
        &[("c1", "d1", 4), ("c2", "d2", 4)],
        &[
            ("s1", "d1", "t1", &["c1", "c2"]),
            ("s2", "d1", "t2", &["c2", "c1"]),
            ("s3", "d2", "t1", &["c1", "c2"]),
            ("s4", "d2", "t2", &["c2", "c1"]),
        ],
        &[("s1", "c1"), ("s2", "c1"), ("s3", "c2"), ("s4", "c2")],
    );
    for ideal in enumerate_xi0(&p, DEFAULT_BUDGET).unwrap() {
        let f = PolicyFunction::manhattan(ideal, &p).unwrap();
        assert!(is_pseudo_mconcave(&f, &p, DEFAULT_BUDGET).unwrap().holds());
    }
}

#[test]
fn manhattan_score_breaks_when_a_capacity_binds() {
    // the only exchanges that keep the score move a second student into c2
    let p = fixtures::build(
        &["d1", "d2"],
        &["t1", "t2"],
        &[("c1", "d1", 2), ("c2", "d2", 1)],
        &[("s1", "d1", "t2", &["c2", "c1"]), ("s2", "d2", "t1", &["c1", "c2"])],
        &[("s1", "c1"), ("s2", "c2")],
    );
    let ideal = Distribution::from_counts(2, vec![0, 1, 0, 1]);
    let f = PolicyFunction::manhattan(ideal, &p).unwrap();
    assert!(!is_pseudo_mconcave(&f, &p, DEFAULT_BUDGET).unwrap().holds());
}

#[test]
fn ideal_outside_xi0_is_rejected() {
    let p = fixtures::simple_market();
    let over = Distribution::from_counts(1, vec![4, 0, 0]);
    assert_eq!(PolicyFunction::manhattan(over, &p), Err(PolicyError::IdealOutsideXi0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn xi0_count_agrees_with_enumeration(seed in any::<u64>()) {
        let (p, _) = market(seed);
        let all = enumerate_xi0(&p, DEFAULT_BUDGET).unwrap();
        prop_assert_eq!(all.len() as u128, count_xi0(&p));
        prop_assert!(all.windows(2).all(|w| w[0].counts() < w[1].counts()));
    }

    #[test]
    fn flow_bounds_equal_enumerated_extremes(seed in any::<u64>()) {
        let (p, mut rng) = market(seed);
        let mut ceilings = BTreeMap::new();
        for c in p.school_ids() {
            for t in p.type_ids() {
                ceilings.insert((c, t), rng.gen_range(0..=p.capacity(c)));
            }
        }
        let legit = legitimate_distributions(&p, &ceilings, DEFAULT_BUDGET).unwrap();
        match implied_bounds(&p, &ceilings) {
            Err(PolicyError::InfeasibleConstraints) => prop_assert!(legit.is_empty()),
            Err(e) => prop_assert!(false, "{e}"),
            Ok(b) => {
                for d in p.district_ids() {
                    for t in p.type_ids() {
                        let vals = legit.iter().map(|xi| xi.district_type(&p, d, t));
                        prop_assert_eq!(b.floor[&(d, t)], vals.clone().min().unwrap());
                        prop_assert_eq!(b.ceiling[&(d, t)], vals.max().unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn problem_spec_round_trips(seed in any::<u64>()) {
        let (p, _) = market(seed);
        let back = validate_problem(&p.to_spec()).unwrap();
        prop_assert_eq!(back.to_spec(), p.to_spec());
    }

    #[test]
    fn ttc_on_an_mconvex_goal_never_sticks(seed in any::<u64>()) {
        let (p, mut rng) = market(seed);
        let combine = rng.gen_bool(0.5);
        let goal = random_school_diversity(&mut rng, &p, combine);
        let master = random_order(&mut rng, &p);
        prop_assume!(is_mconvex(&goal.members(&p, DEFAULT_BUDGET).unwrap()).holds());
        let t = run_ttc(&p, &goal, &master);
        prop_assert!(t.is_ok(), "{:?}", t.err());
        let out = t.unwrap().outcome;
        prop_assert!(goal.contains(&distribution_of(&out, &p).unwrap(), &p));
    }
}
