//! Top trading cycles over school-type pairs under a distributional goal.
//!
//! Students trade seats in a hypothetical market whose objects are
//! (school, type) pairs. A pair points to the highest-priority unassigned
//! student whose move onto it keeps the distribution inside the goal; a
//! pair with no such student leaves the market for good.

use thiserror::Error;

use crate::model::{distribution_of, Distribution, Matching, Problem, SchoolId, StudentId, TypeId};
use crate::policy::PolicyGoal;

pub type Pair = (SchoolId, TypeId);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypotheticalMarket {
    pub pairs: Vec<Pair>,
    /// Lifted preferences over pairs, best first.
    pub student_prefs: Vec<Vec<Pair>>,
    pub initial: Vec<Pair>,
    /// Position of each student in the master list.
    pub master_rank: Vec<usize>,
}

impl HypotheticalMarket {
    /// Students initially at the pair come first, then everyone else; ties by master list.
    pub fn priority_order(&self, pair: Pair) -> Vec<StudentId> {
        let mut v: Vec<StudentId> = (0..self.initial.len()).map(StudentId).collect();
        v.sort_by_key(|s| (self.initial[s.0] != pair, self.master_rank[s.0]));
        v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TtcError {
    #[error("master list must order every student exactly once")]
    InvalidMaster,
    #[error("initial matching is outside the policy goal")]
    PolicyViolatedAtStart,
    #[error("no progress at step {step}: {reason}")]
    Stuck { step: usize, reason: String, trace: Box<TtcTrace> },
}

/// Lift P_s to pairs: own-type pairs down to the initial pair, then every
/// other-type pair (school in P_s order, then type order), then the rest
/// of the own-type pairs.
pub fn build_hypothetical(p: &Problem, master: &[StudentId]) -> Result<HypotheticalMarket, TtcError> {
    let n = p.n_students();
    let mut master_rank = vec![usize::MAX; n];
    for (i, s) in master.iter().enumerate() {
        if s.0 >= n || master_rank[s.0] != usize::MAX {
            return Err(TtcError::InvalidMaster);
        }
        master_rank[s.0] = i;
    }
    if master.len() != n {
        return Err(TtcError::InvalidMaster);
    }
    let pairs: Vec<Pair> = p.school_ids().flat_map(|c| p.type_ids().map(move |t| (c, t))).collect();
    let initial: Vec<Pair> = p.student_ids().map(|s| (p.initial_school(s), p.student_type(s))).collect();
    let student_prefs = p
        .student_ids()
        .map(|s| {
            let t = p.student_type(s);
            let prefs = p.preferences(s);
            let cut = p.rank(s, p.initial_school(s)) + 1;
            let mut lifted: Vec<Pair> = prefs[..cut].iter().map(|&c| (c, t)).collect();
            for &c in prefs {
                lifted.extend(p.type_ids().filter(|&u| u != t).map(|u| (c, u)));
            }
            lifted.extend(prefs[cut..].iter().map(|&c| (c, t)));
            lifted
        })
        .collect();
    Ok(HypotheticalMarket { pairs, student_prefs, initial, master_rank })
}

/// ξ(X) + χ_target − χ_(initial pair of s) lies in the goal.
pub fn is_permissible(s: StudentId, target: Pair, x: &Matching, goal: &PolicyGoal, p: &Problem) -> bool {
    let Ok(xi) = distribution_of(x, p) else {
        return false;
    };
    permissible_at(&xi, (p.initial_school(s), p.student_type(s)), target, goal, p)
}

fn permissible_at(xi: &Distribution, from: Pair, target: Pair, goal: &PolicyGoal, p: &Problem) -> bool {
    xi.exchange(from, target).is_some_and(|y| goal.contains(&y, p))
}

/// A cycle s_0 → pair_0 → s_1 → pair_1 → … → s_0, starting at its smallest student.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TtcCycle {
    pub students: Vec<StudentId>,
    pub pairs: Vec<Pair>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TtcStep {
    /// Pairs in the market at the start of the step.
    pub active: Vec<Pair>,
    pub removed: Vec<Pair>,
    pub pair_points: Vec<(Pair, StudentId)>,
    pub student_points: Vec<(StudentId, Pair)>,
    pub cycles: Vec<TtcCycle>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TtcTrace {
    pub steps: Vec<TtcStep>,
    pub outcome: Matching,
}

/// Run TTC from the initial matching. The master list breaks priority ties.
pub fn run_ttc(p: &Problem, goal: &PolicyGoal, master: &[StudentId]) -> Result<TtcTrace, TtcError> {
    let market = build_hypothetical(p, master)?;
    let initial = p.initial_matching();
    if !goal.contains(&distribution_of(&initial, p).expect("initial matching is feasible"), p) {
        return Err(TtcError::PolicyViolatedAtStart);
    }
    let n = p.n_students();
    let n_t = p.n_types();
    let pair_index = |q: Pair| q.0 .0 * n_t + q.1 .0;
    let priorities: Vec<Vec<StudentId>> = market.pairs.iter().map(|&q| market.priority_order(q)).collect();

    let mut assigned: Vec<Option<Pair>> = vec![None; n];
    let mut active = vec![true; market.pairs.len()];
    let mut steps = Vec::new();

    while assigned.iter().any(Option::is_none) {
        let step_no = steps.len() + 1;
        // X^n: executed assignments plus initial schools of everyone else
        let xi = distribution_of(&placed(&assigned, p), p).expect("one school per student");

        let active_now: Vec<Pair> = market.pairs.iter().copied().filter(|&q| active[pair_index(q)]).collect();
        let mut pair_points = Vec::new();
        let mut removed = Vec::new();
        let mut pair_target = vec![None; market.pairs.len()];
        for &q in &active_now {
            let pick = priorities[pair_index(q)]
                .iter()
                .copied()
                .find(|&s| assigned[s.0].is_none() && permissible_at(&xi, market.initial[s.0], q, goal, p));
            match pick {
                Some(s) => {
                    pair_points.push((q, s));
                    pair_target[pair_index(q)] = Some(s);
                }
                None => {
                    active[pair_index(q)] = false;
                    removed.push(q);
                }
            }
        }

        let mut student_points = Vec::new();
        let mut student_target = vec![None; n];
        for s in p.student_ids().filter(|s| assigned[s.0].is_none()) {
            match market.student_prefs[s.0].iter().copied().find(|&q| active[pair_index(q)]) {
                Some(q) => {
                    student_points.push((s, q));
                    student_target[s.0] = Some(q);
                }
                None => {
                    let reason = format!("{} has no remaining pair", p.student_name(s));
                    steps.push(TtcStep { active: active_now, removed, pair_points, student_points, cycles: Vec::new() });
                    return Err(stuck(step_no, reason, steps, &assigned, p));
                }
            }
        }

        // functional graph on students: s → pair → student
        let succ = |s: StudentId| -> StudentId {
            let q = student_target[s.0].expect("unassigned student points");
            pair_target[pair_index(q)].expect("active pair points")
        };
        let mut color = vec![0u8; n]; // 0 new, 1 on current walk, 2 finished
        let mut cycles = Vec::new();
        for start in p.student_ids().filter(|s| assigned[s.0].is_none()) {
            if color[start.0] != 0 {
                continue;
            }
            let mut path = Vec::new();
            let mut s = start;
            while color[s.0] == 0 {
                color[s.0] = 1;
                path.push(s);
                s = succ(s);
            }
            if color[s.0] == 1 {
                let from = path.iter().position(|&v| v == s).unwrap();
                let mut members: Vec<StudentId> = path[from..].to_vec();
                let min_at = members.iter().enumerate().min_by_key(|(_, v)| **v).unwrap().0;
                members.rotate_left(min_at);
                let pairs = members.iter().map(|&v| student_target[v.0].unwrap()).collect();
                cycles.push(TtcCycle { students: members, pairs });
            }
            for v in path {
                color[v.0] = 2;
            }
        }
        cycles.sort_by_key(|c| c.students[0]);
        if cycles.is_empty() {
            steps.push(TtcStep { active: active_now, removed, pair_points, student_points, cycles });
            return Err(stuck(step_no, "no cycle".into(), steps, &assigned, p));
        }
        for cyc in &cycles {
            for (&s, &q) in cyc.students.iter().zip(&cyc.pairs) {
                assigned[s.0] = Some(q);
            }
        }
        steps.push(TtcStep { active: active_now, removed, pair_points, student_points, cycles });
        // jointly executed cycles can leave a goal that lacks the exchange property
        let after = distribution_of(&placed(&assigned, p), p).expect("one school per student");
        if !goal.contains(&after, p) {
            return Err(stuck(step_no, "executed cycles left the goal".into(), steps, &assigned, p));
        }
    }

    let outcome = p.student_ids().map(|s| p.contract(s, assigned[s.0].unwrap().0)).collect();
    Ok(TtcTrace { steps, outcome })
}

/// Executed assignments plus initial schools of everyone else.
fn placed(assigned: &[Option<Pair>], p: &Problem) -> Matching {
    p.student_ids()
        .map(|s| p.contract(s, assigned[s.0].map_or(p.initial_school(s), |q| q.0)))
        .collect()
}

fn stuck(step: usize, reason: String, steps: Vec<TtcStep>, assigned: &[Option<Pair>], p: &Problem) -> TtcError {
    let outcome = p
        .student_ids()
        .filter_map(|s| assigned[s.0].map(|q| p.contract(s, q.0)))
        .collect();
    TtcError::Stuck { step, reason, trace: Box::new(TtcTrace { steps, outcome }) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::policy::GoalForm;

    fn master(p: &Problem) -> Vec<StudentId> {
        p.student_ids().collect()
    }

    #[test]
    fn lifted_preferences_keep_own_type_order() {
        let p = fixtures::ttc_market();
        let m = build_hypothetical(&p, &master(&p)).unwrap();
        let c = |n| p.school(n).unwrap();
        let (t1, t2) = (TypeId(0), TypeId(1));
        // s1: c2 c3 c1 c4, initially at c1
        assert_eq!(m.student_prefs[0][..3], [(c("c2"), t1), (c("c3"), t1), (c("c1"), t1)]);
        assert_eq!(m.student_prefs[0][3], (c("c2"), t2));
        assert_eq!(*m.student_prefs[0].last().unwrap(), (c("c4"), t1));
        assert_eq!(m.priority_order((c("c1"), t1))[..2], [StudentId(0), StudentId(1)]);
    }

    #[test]
    fn single_pair_market() {
        let p = fixtures::build(
            &["d1", "d2"],
            &["t"],
            &[("c1", "d1", 1), ("c2", "d2", 1)],
            &[("s1", "d1", "t", &["c1", "c2"])],
            &[("s1", "c1")],
        );
        let m = build_hypothetical(&p, &[StudentId(0)]).unwrap();
        assert_eq!(m.student_prefs[0], vec![(SchoolId(0), TypeId(0)), (SchoolId(1), TypeId(0))]);
    }

    #[test]
    fn top_ranked_initial_schools_give_self_cycles() {
        let p = fixtures::simple_market();
        let mut q = p.clone();
        for s in p.student_ids() {
            let c0 = p.initial_school(s);
            let mut prefs = vec![c0];
            prefs.extend(p.preferences(s).iter().copied().filter(|&c| c != c0));
            q = q.with_preferences(s, &prefs).unwrap();
        }
        let goal = PolicyGoal::new(GoalForm::Unconstrained, true);
        let t = run_ttc(&q, &goal, &master(&q)).unwrap();
        assert_eq!(t.outcome, q.initial_matching());
        assert!(t.steps.iter().flat_map(|st| &st.cycles).all(|c| c.students.len() == 1));
    }

    #[test]
    fn own_pair_always_permissible() {
        let p = fixtures::ttc_market();
        let goal = fixtures::ttc_goal(&p);
        let x = p.initial_matching();
        for s in p.student_ids() {
            assert!(is_permissible(s, (p.initial_school(s), p.student_type(s)), &x, &goal, &p));
        }
    }

    #[test]
    fn bad_master_rejected() {
        let p = fixtures::ttc_market();
        let goal = fixtures::ttc_goal(&p);
        assert_eq!(run_ttc(&p, &goal, &[StudentId(0)]).unwrap_err(), TtcError::InvalidMaster);
    }
}
