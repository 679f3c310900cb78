//! Random desk-scale markets for property tests and benchmarks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::fixtures;
use crate::model::{distribution_of, Problem, StudentId};
use crate::policy::{GoalForm, PolicyGoal};
use crate::rules::{favoring_own, RuleKind, RuleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub max_students: usize,
    pub max_schools: usize,
    pub max_districts: usize,
    pub max_types: usize,
    pub max_capacity: u32,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { max_students: 4, max_schools: 4, max_districts: 2, max_types: 2, max_capacity: 2 }
    }
}

/// Admissions rule families used for random profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleFamily {
    Sequential,
    InitialRespecting,
    Rationed,
    FavorsOwn,
}

impl RuleFamily {
    pub const ALL: [RuleFamily; 4] =
        [RuleFamily::Sequential, RuleFamily::InitialRespecting, RuleFamily::Rationed, RuleFamily::FavorsOwn];
}

/// A random valid problem within the configured limits.
pub fn random_problem<R: Rng + ?Sized>(rng: &mut R, cfg: &GenConfig) -> Problem {
    let n_d = rng.gen_range(2..=cfg.max_districts.max(2));
    let n_c = rng.gen_range(n_d..=cfg.max_schools.max(n_d));
    let n_t = rng.gen_range(1..=cfg.max_types.max(1));
    let n_s = rng.gen_range(1..=cfg.max_students.max(1));

    let districts: Vec<String> = (1..=n_d).map(|i| format!("d{i}")).collect();
    let types: Vec<String> = (1..=n_t).map(|i| format!("t{i}")).collect();
    let mut school_district: Vec<usize> = (0..n_c).map(|i| if i < n_d { i } else { rng.gen_range(0..n_d) }).collect();
    school_district.sort_unstable();
    let mut capacity: Vec<u32> = (0..n_c).map(|_| rng.gen_range(1..=cfg.max_capacity.max(1))).collect();
    let schools: Vec<String> = (1..=n_c).map(|i| format!("c{i}")).collect();

    let mut free = capacity.clone();
    let mut students = Vec::new();
    let mut initial = Vec::new();
    for i in 1..=n_s {
        let open: Vec<usize> = (0..n_c).filter(|&c| free[c] > 0).collect();
        let c = match open.choose(rng) {
            Some(&c) => c,
            None => {
                let c = rng.gen_range(0..n_c);
                capacity[c] += 1;
                free[c] += 1;
                c
            }
        };
        free[c] -= 1;
        let mut prefs = schools.clone();
        prefs.shuffle(rng);
        students.push((format!("s{i}"), districts[school_district[c]].clone(), types[rng.gen_range(0..n_t)].clone(), prefs));
        initial.push((format!("s{i}"), schools[c].clone()));
    }

    let d_refs: Vec<&str> = districts.iter().map(String::as_str).collect();
    let t_refs: Vec<&str> = types.iter().map(String::as_str).collect();
    let c_rows: Vec<(&str, &str, u32)> =
        (0..n_c).map(|c| (schools[c].as_str(), districts[school_district[c]].as_str(), capacity[c])).collect();
    let pref_refs: Vec<Vec<&str>> = students.iter().map(|s| s.3.iter().map(String::as_str).collect()).collect();
    let s_rows: Vec<(&str, &str, &str, &[&str])> = students
        .iter()
        .zip(&pref_refs)
        .map(|(s, prefs)| (s.0.as_str(), s.1.as_str(), s.2.as_str(), prefs.as_slice()))
        .collect();
    let i_rows: Vec<(&str, &str)> = initial.iter().map(|(s, c)| (s.as_str(), c.as_str())).collect();
    fixtures::build(&d_refs, &t_refs, &c_rows, &s_rows, &i_rows)
}

pub fn random_order<R: Rng + ?Sized>(rng: &mut R, p: &Problem) -> Vec<StudentId> {
    let mut order: Vec<StudentId> = p.student_ids().collect();
    order.shuffle(rng);
    order
}

/// One rule per district, each school with its own random priority order.
pub fn random_rules<R: Rng + ?Sized>(rng: &mut R, p: &Problem, family: RuleFamily) -> Vec<RuleSpec> {
    p.district_ids()
        .map(|d| {
            if family == RuleFamily::FavorsOwn {
                let base = random_order(rng, p);
                return favoring_own(p, d, &base);
            }
            let kind = match family {
                RuleFamily::InitialRespecting => RuleKind::InitialRespecting,
                RuleFamily::Rationed => RuleKind::RationedSequential,
                _ => RuleKind::SequentialResponsive,
            };
            let mut order = p.schools_of(d).to_vec();
            order.shuffle(rng);
            let mut spec = RuleSpec::new(d, kind).with_order(order);
            for &c in p.schools_of(d) {
                spec.priorities.insert(c, random_order(rng, p));
            }
            spec
        })
        .collect()
}

/// Random school-level floors and ceilings that the initial distribution meets.
pub fn random_school_diversity<R: Rng + ?Sized>(rng: &mut R, p: &Problem, combine: bool) -> PolicyGoal {
    let xi0 = distribution_of(&p.initial_matching(), p).expect("initial matching is feasible");
    let mut floors = BTreeMap::new();
    let mut ceilings = BTreeMap::new();
    for (c, t) in xi0.cells().collect::<Vec<_>>() {
        let v = xi0.get(c, t);
        if rng.gen_bool(0.5) {
            floors.insert((c, t), rng.gen_range(0..=v));
        }
        if rng.gen_bool(0.5) {
            ceilings.insert((c, t), v + rng.gen_range(0..=1));
        }
    }
    let form = if combine {
        GoalForm::Combination { floors, ceilings }
    } else {
        GoalForm::SchoolDiversity { floors, ceilings }
    };
    PolicyGoal::new(form, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn problems_respect_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = GenConfig::default();
        for _ in 0..200 {
            let p = random_problem(&mut rng, &cfg);
            assert!(p.n_students() <= 4 && p.n_schools() <= 4 && p.n_districts() <= 2 && p.n_types() <= 2);
        }
    }

    #[test]
    fn diversity_goal_contains_initial() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_problem(&mut rng, &GenConfig::default());
            let g = random_school_diversity(&mut rng, &p, false);
            let xi0 = distribution_of(&p.initial_matching(), &p).unwrap();
            assert!(g.contains(&xi0, &p));
        }
    }
}
