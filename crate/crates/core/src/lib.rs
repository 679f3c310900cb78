//! Interdistrict school choice.
//!
//! Deferred acceptance over district admissions rules, top trading cycles
//! under distributional policy goals, the rule and policy property checkers,
//! and brute-force oracles for small markets.

pub mod fixtures;
pub mod generate;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod rules;
pub mod spda;
pub mod sweep;
pub mod ttc;

pub use model::{
    distribution_of, is_feasible, pareto_dominates, validate_problem, Contract, DistrictId,
    Distribution, Matching, Problem, ProblemSpec, SchoolId, StudentId, TypeId, Verdict,
};
pub use policy::{GoalForm, PolicyFunction, PolicyGoal, Rational};
pub use rules::{Rule, RuleKind, RuleProfile, RuleProperty, RuleSpec};
