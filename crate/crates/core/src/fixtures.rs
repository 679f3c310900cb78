//! Worked markets used by tests, benches and the command-line fixtures.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    validate_problem, distribution_of, DistrictId, Problem, ProblemSpec, SchoolId, SchoolSpec, StudentId,
    StudentSpec, TypeId,
};
use crate::policy::{GoalForm, PolicyGoal};
use crate::rules::{RuleKind, RuleSpec};

type StudentRow<'a> = (&'a str, &'a str, &'a str, &'a [&'a str]);

/// Build a validated problem from literal rows. Panics on invalid input.
pub fn build(
    districts: &[&str],
    types: &[&str],
    schools: &[(&str, &str, u32)],
    students: &[StudentRow<'_>],
    initial: &[(&str, &str)],
) -> Problem {
    let spec = ProblemSpec {
        districts: districts.iter().map(|s| s.to_string()).collect(),
        types: types.iter().map(|s| s.to_string()).collect(),
        schools: schools
            .iter()
            .map(|(n, d, q)| SchoolSpec { name: n.to_string(), district: d.to_string(), capacity: *q })
            .collect(),
        students: students
            .iter()
            .map(|(n, d, t, prefs)| StudentSpec {
                name: n.to_string(),
                district: d.to_string(),
                ty: t.to_string(),
                preferences: prefs.iter().map(|s| s.to_string()).collect(),
            })
            .collect(),
        initial: initial.iter().map(|(s, c)| (s.to_string(), c.to_string())).collect(),
    };
    validate_problem(&spec).expect("fixture must validate")
}

fn ids(p: &Problem, names: &[&str]) -> Vec<StudentId> {
    names.iter().map(|n| p.student(n).expect("student")).collect()
}

fn school(p: &Problem, n: &str) -> SchoolId {
    p.school(n).expect("school")
}

fn district(p: &Problem, n: &str) -> DistrictId {
    p.district(n).expect("district")
}

fn ty(p: &Problem, n: &str) -> TypeId {
    p.type_id(n).expect("type")
}

/// Two districts, three schools, four students of one type.
pub fn simple_market() -> Problem {
    build(
        &["d1", "d2"],
        &["t"],
        &[("c1", "d1", 1), ("c2", "d1", 2), ("c3", "d2", 2)],
        &[
            ("s1", "d1", "t", &["c1", "c2", "c3"]),
            ("s2", "d1", "t", &["c3", "c1", "c2"]),
            ("s3", "d2", "t", &["c1", "c2", "c3"]),
            ("s4", "d2", "t", &["c2", "c1", "c3"]),
        ],
        &[("s1", "c1"), ("s2", "c2"), ("s3", "c3"), ("s4", "c3")],
    )
}

fn simple_d2(p: &Problem) -> RuleSpec {
    RuleSpec::new(district(p, "d2"), RuleKind::SequentialResponsive)
        .with_priority(school(p, "c3"), ids(p, &["s3", "s4", "s1", "s2"]))
}

/// d1: c1 then c2; c1 ranks outsiders first.
pub fn simple_rules(p: &Problem) -> Vec<RuleSpec> {
    vec![
        RuleSpec::new(district(p, "d1"), RuleKind::SequentialResponsive)
            .with_order(vec![school(p, "c1"), school(p, "c2")])
            .with_priority(school(p, "c1"), ids(p, &["s3", "s4", "s1", "s2"]))
            .with_priority(school(p, "c2"), ids(p, &["s1", "s2", "s3", "s4"])),
        simple_d2(p),
    ]
}

/// As [`simple_rules`] with s1 on top at c1 and initial students lifted.
pub fn respecting_rules(p: &Problem) -> Vec<RuleSpec> {
    vec![
        RuleSpec::new(district(p, "d1"), RuleKind::InitialRespecting)
            .with_order(vec![school(p, "c1"), school(p, "c2")])
            .with_priority(school(p, "c1"), ids(p, &["s1", "s2", "s3", "s4"]))
            .with_priority(school(p, "c2"), ids(p, &["s1", "s2", "s3", "s4"])),
        RuleSpec { kind: RuleKind::InitialRespecting, ..simple_d2(p) },
    ]
}

/// As [`simple_rules`] with d1 capped at k_d1 = 2.
pub fn rationed_rules(p: &Problem) -> Vec<RuleSpec> {
    let mut v = simple_rules(p);
    v[0].kind = RuleKind::RationedSequential;
    v
}

/// Six unit-capacity schools, three types, one student per school.
pub fn ceiling_market() -> Problem {
    build(
        &["d1", "d2"],
        &["t1", "t2", "t3"],
        &[
            ("c1", "d1", 1),
            ("c2", "d1", 1),
            ("c3", "d1", 1),
            ("c4", "d2", 1),
            ("c5", "d2", 1),
            ("c6", "d2", 1),
        ],
        &[
            ("s1", "d1", "t1", &["c6", "c1", "c2", "c3", "c4", "c5"]),
            ("s2", "d1", "t2", &["c6", "c2", "c1", "c3", "c4", "c5"]),
            ("s3", "d1", "t3", &["c5", "c4", "c3", "c1", "c2", "c6"]),
            ("s4", "d2", "t1", &["c3", "c4", "c1", "c2", "c5", "c6"]),
            ("s5", "d2", "t2", &["c3", "c5", "c1", "c2", "c4", "c6"]),
            ("s6", "d2", "t3", &["c1", "c2", "c6", "c3", "c4", "c5"]),
        ],
        &[("s1", "c1"), ("s2", "c2"), ("s3", "c3"), ("s4", "c4"), ("s5", "c5"), ("s6", "c6")],
    )
}

/// District ceilings of one for the first two types in both districts.
pub fn ceiling_goal(p: &Problem, ceiling: u32) -> PolicyGoal {
    let mut caps = BTreeMap::new();
    for d in p.district_ids() {
        caps.insert((d, ty(p, "t1")), ceiling);
        caps.insert((d, ty(p, "t2")), ceiling);
    }
    PolicyGoal::new(GoalForm::DistrictCeilings(caps), true)
}

/// Two districts, four schools, seven students of two types.
pub fn ttc_market() -> Problem {
    build(
        &["d1", "d2"],
        &["t1", "t2"],
        &[("c1", "d1", 3), ("c2", "d1", 2), ("c3", "d2", 2), ("c4", "d2", 1)],
        &[
            ("s1", "d1", "t1", &["c2", "c3", "c1", "c4"]),
            ("s2", "d1", "t1", &["c3", "c1", "c2", "c4"]),
            ("s3", "d1", "t1", &["c4", "c2", "c1", "c3"]),
            ("s4", "d1", "t1", &["c2", "c3", "c1", "c4"]),
            ("s5", "d2", "t2", &["c1", "c2", "c3", "c4"]),
            ("s6", "d2", "t2", &["c4", "c1", "c3", "c2"]),
            ("s7", "d2", "t2", &["c2", "c3", "c1", "c4"]),
        ],
        &[("s1", "c1"), ("s2", "c1"), ("s3", "c2"), ("s4", "c2"), ("s5", "c3"), ("s6", "c3"), ("s7", "c4")],
    )
}

/// Capacities plus at most one type-t2 student at c1.
pub fn ttc_goal(p: &Problem) -> PolicyGoal {
    let mut ceilings = BTreeMap::new();
    ceilings.insert((school(p, "c1"), ty(p, "t2")), 1);
    PolicyGoal::new(GoalForm::SchoolDiversity { floors: BTreeMap::new(), ceilings }, true)
}

/// The TTC market with types reassigned, used for reserves and ceilings.
pub fn reserves_market() -> Problem {
    build(
        &["d1", "d2"],
        &["t1", "t2"],
        &[("c1", "d1", 3), ("c2", "d1", 2), ("c3", "d2", 2), ("c4", "d2", 1)],
        &[
            ("s1", "d1", "t1", &["c2", "c1", "c3", "c4"]),
            ("s2", "d1", "t2", &["c3", "c1", "c2", "c4"]),
            ("s3", "d1", "t2", &["c4", "c2", "c1", "c3"]),
            ("s4", "d1", "t2", &["c1", "c3", "c2", "c4"]),
            ("s5", "d2", "t1", &["c1", "c2", "c3", "c4"]),
            ("s6", "d2", "t1", &["c1", "c4", "c3", "c2"]),
            ("s7", "d2", "t1", &["c2", "c3", "c1", "c4"]),
        ],
        &[("s1", "c1"), ("s2", "c1"), ("s3", "c2"), ("s4", "c2"), ("s5", "c3"), ("s6", "c3"), ("s7", "c4")],
    )
}

/// School-type ceilings q_c^t of the reserves market.
pub fn reserves_ceilings(p: &Problem) -> BTreeMap<(SchoolId, TypeId), u32> {
    let rows = [("c1", 1, 2), ("c2", 1, 1), ("c3", 2, 1), ("c4", 1, 1)];
    let mut out = BTreeMap::new();
    for (c, a, b) in rows {
        out.insert((school(p, c), ty(p, "t1")), a);
        out.insert((school(p, c), ty(p, "t2")), b);
    }
    out
}

/// Reserve-then-open-seat rules with one seat reserved per school and type,
/// except none for t2 at c4; every school ranks students by index.
pub fn reserves_rules(p: &Problem) -> Vec<RuleSpec> {
    let ceilings = reserves_ceilings(p);
    let master: Vec<StudentId> = p.student_ids().collect();
    p.district_ids()
        .map(|d| {
            let mut spec = RuleSpec::new(d, RuleKind::ReservesAndCeilings).with_master(master.clone());
            spec.type_order = Some(p.type_ids().collect());
            for &c in p.schools_of(d) {
                for t in p.type_ids() {
                    spec.ceilings.insert((c, t), ceilings[&(c, t)]);
                    let r = if p.school_name(c) == "c4" && p.type_name(t) == "t2" { 0 } else { 1 };
                    spec.reserves.insert((c, t), r);
                }
            }
            spec
        })
        .collect()
}

/// District d (k_d = 2, three unit schools) facing four students, two per type.
/// s1 and s3 live in d; s2 and s4 live in d', whose single school holds two.
pub fn nonexistence_market() -> Problem {
    build(
        &["d", "d'"],
        &["t1", "t2"],
        &[("c1", "d", 1), ("c2", "d", 1), ("c3", "d", 1), ("c4", "d'", 2)],
        &[
            ("s1", "d", "t1", &["c1", "c2", "c3", "c4"]),
            ("s2", "d'", "t1", &["c1", "c2", "c3", "c4"]),
            ("s3", "d", "t2", &["c1", "c2", "c3", "c4"]),
            ("s4", "d'", "t2", &["c1", "c2", "c3", "c4"]),
        ],
        &[("s1", "c1"), ("s2", "c4"), ("s3", "c2"), ("s4", "c4")],
    )
}

/// One student of each type, both from district d.
pub fn nonexistence_market_small() -> Problem {
    build(
        &["d", "d'"],
        &["t1", "t2"],
        &[("c1", "d", 1), ("c2", "d", 1), ("c3", "d", 1), ("c4", "d'", 1)],
        &[("s1", "d", "t1", &["c1", "c2", "c3", "c4"]), ("s2", "d", "t2", &["c1", "c2", "c3", "c4"])],
        &[("s1", "c1"), ("s2", "c2")],
    )
}

/// Two students who each want the other school of their own district.
pub fn stuck_market() -> Problem {
    build(
        &["d1", "d2"],
        &["t1"],
        &[("c1", "d1", 2), ("c2", "d1", 2), ("c3", "d2", 2), ("c4", "d2", 2)],
        &[("s1", "d1", "t1", &["c2", "c1", "c3", "c4"]), ("s2", "d2", "t1", &["c4", "c3", "c1", "c2"])],
        &[("s1", "c1"), ("s2", "c3")],
    )
}

/// The initial distribution and each single move, but not both moves together.
pub fn stuck_goal(p: &Problem) -> PolicyGoal {
    let xi0 = distribution_of(&p.initial_matching(), p).expect("feasible");
    let t = ty(p, "t1");
    let a = xi0.exchange((school(p, "c1"), t), (school(p, "c2"), t)).expect("occupied");
    let b = xi0.exchange((school(p, "c3"), t), (school(p, "c4"), t)).expect("occupied");
    PolicyGoal::new(GoalForm::ExplicitSet(BTreeSet::from([xi0, a, b])), true)
}

/// Floors one below and ceilings one above the initial count in every cell.
pub fn band_goal(p: &Problem, combine: bool) -> PolicyGoal {
    let xi0 = distribution_of(&p.initial_matching(), p).expect("feasible");
    let mut floors = BTreeMap::new();
    let mut ceilings = BTreeMap::new();
    for (c, t) in xi0.cells().collect::<Vec<_>>() {
        let v = xi0.get(c, t);
        floors.insert((c, t), v.saturating_sub(1));
        ceilings.insert((c, t), v + 1);
    }
    let form = if combine {
        GoalForm::Combination { floors, ceilings }
    } else {
        GoalForm::SchoolDiversity { floors, ceilings }
    };
    PolicyGoal::new(form, true)
}

/// Every shipped market, by fixture name.
pub fn all_markets() -> Vec<(&'static str, Problem)> {
    vec![
        ("example1", simple_market()),
        ("example3", ceiling_market()),
        ("example5", ttc_market()),
        ("reserves", reserves_market()),
        ("type-ceilings", nonexistence_market()),
        ("type-ceilings-small", nonexistence_market_small()),
        ("stuck", stuck_market()),
    ]
}
