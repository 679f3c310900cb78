//! Deterministic renderings of matchings, traces and witnesses.

use interdistrict::spda::SpdaTrace;
use interdistrict::ttc::{Pair, TtcTrace};
use interdistrict::*;
use serde_json::{json, Value};

use crate::schema::contract_entries;

/// One row per student: `student,school,district`, blank when unmatched.
pub fn matching_csv(p: &Problem, x: &Matching) -> String {
    let mut out = String::from("student,school,district\n");
    for s in p.student_ids() {
        match x.school_of(s) {
            Some(c) => out.push_str(&format!(
                "{},{},{}\n",
                p.student_name(s),
                p.school_name(c),
                p.district_name(p.school_district(c))
            )),
            None => out.push_str(&format!("{},,\n", p.student_name(s))),
        }
    }
    out
}

pub fn schools(p: &Problem, list: &[SchoolId]) -> String {
    let names: Vec<&str> = list.iter().map(|&c| p.school_name(c)).collect();
    format!("[{}]", names.join(", "))
}

pub fn school_or_none(p: &Problem, c: Option<SchoolId>) -> &str {
    c.map_or("unmatched", |c| p.school_name(c))
}

pub fn pair(p: &Problem, (c, t): Pair) -> String {
    format!("({},{})", p.school_name(c), p.type_name(t))
}

fn contracts_json(p: &Problem, x: &Matching) -> Value {
    json!(contract_entries(p, x))
}

fn pair_json(p: &Problem, (c, t): Pair) -> Value {
    json!([p.school_name(c), p.type_name(t)])
}

pub fn spda_trace_json(p: &Problem, mechanism: &str, t: &SpdaTrace) -> Value {
    let steps: Vec<Value> = t
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "step": i + 1,
                "proposals": contracts_json(p, &s.proposals),
                "tentative": contracts_json(p, &s.tentative),
                "rejected": contracts_json(p, &s.rejected),
            })
        })
        .collect();
    json!({ "mechanism": mechanism, "steps": steps, "outcome": contracts_json(p, &t.outcome) })
}

pub fn ttc_trace_json(p: &Problem, t: &TtcTrace, outcome: Option<&Matching>) -> Value {
    let steps: Vec<Value> = t
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            json!({
                "step": i + 1,
                "active": s.active.iter().map(|&x| pair_json(p, x)).collect::<Vec<_>>(),
                "removed": s.removed.iter().map(|&x| pair_json(p, x)).collect::<Vec<_>>(),
                "pair_points": s
                    .pair_points
                    .iter()
                    .map(|&(x, st)| json!([pair_json(p, x), p.student_name(st)]))
                    .collect::<Vec<_>>(),
                "student_points": s
                    .student_points
                    .iter()
                    .map(|&(st, x)| json!([p.student_name(st), pair_json(p, x)]))
                    .collect::<Vec<_>>(),
                "cycles": s
                    .cycles
                    .iter()
                    .map(|c| {
                        json!({
                            "students": c.students.iter().map(|&st| p.student_name(st)).collect::<Vec<_>>(),
                            "pairs": c.pairs.iter().map(|&x| pair_json(p, x)).collect::<Vec<_>>(),
                        })
                    })
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "mechanism": "ttc",
        "steps": steps,
        "outcome": outcome.map(|x| contracts_json(p, x)),
    })
}

/// A cycle written as `{s3,(c4,t1),s7,(c2,t2)}`.
pub fn cycle(p: &Problem, students: &[StudentId], pairs: &[Pair]) -> String {
    let parts: Vec<String> = students
        .iter()
        .zip(pairs)
        .flat_map(|(&s, &x)| [p.student_name(s).to_string(), pair(p, x)])
        .collect();
    format!("{{{}}}", parts.join(","))
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}
