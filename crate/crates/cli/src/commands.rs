//! Subcommand implementations. Each returns the report text and an exit status.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use interdistrict::oracle::{
    audit_strategy_proofness, constrained_efficient_ir_matchings, enumerate_stable_matchings,
    search_rule_nonexistence, AuditConfig, Finding, Mechanism, NonexistenceInstance, OracleError, SearchResult,
};
use interdistrict::policy::{
    diversity_condition, enumerate_xi0, exchange_fails_at, is_mconvex, legitimate_distributions, PolicyError,
    DEFAULT_BUDGET,
};
use interdistrict::rules::{check_accommodates_unmatched, check_property, CheckConfig, RuleError};
use interdistrict::spda::{
    alpha_gaps_by_type, check_balanced_exchange, check_individual_rationality, is_stable, run_intradistrict_spda,
    run_spda, SpdaError,
};
use interdistrict::ttc::{run_ttc, TtcError};
use interdistrict::*;

use crate::report::{self, matching_csv};
use crate::schema::{parse_instance, parse_rational, Instance, InputError};
use crate::Exit;

#[derive(Debug, Parser)]
#[command(name = "interdistrict", version, about = "Interdistrict school choice mechanisms and audits")]
pub struct Cli {
    /// Worker threads for parallel enumeration (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Cap on enumeration, audit runs or search nodes, depending on the command.
    #[arg(long, global = true)]
    pub budget: Option<u128>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a mechanism and report its outcome with policy verdicts.
    Run(RunArgs),
    /// Check admissions-rule properties of one district.
    CheckRule(CheckRuleArgs),
    /// Implied floors and ceilings and the diversity condition.
    Bounds(BoundsArgs),
    /// Exhaustive strategy-proofness audit and oracle cross-checks.
    Audit(AuditArgs),
    /// Goal membership and M-convexity of the instance's policy.
    PolicyCheck(PolicyCheckArgs),
    /// Search for a d-weakly acceptant, IRC, weakly substitutable rule under type ceilings.
    Nonexistence(NonexistenceArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RunMechanism {
    Spda,
    SpdaIntra,
    Ttc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AuditMechanism {
    Spda,
    Ttc,
    EfficientSelector,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub instance: PathBuf,
    pub mechanism: RunMechanism,
    /// Write the step-by-step trace as JSON.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the outcome matching as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Comma-separated student ids breaking TTC priority ties.
    #[arg(long, value_delimiter = ',')]
    pub master: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct CheckRuleArgs {
    pub instance: PathBuf,
    pub district: String,
    #[arg(required = true)]
    pub properties: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    pub instance: PathBuf,
    /// Diversity level p/q; defaults to the instance's alpha.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Also enumerate legitimate distributions and compare.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    pub instance: PathBuf,
    pub mechanism: AuditMechanism,
    #[arg(long, value_delimiter = ',')]
    pub master: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct PolicyCheckArgs {
    pub instance: PathBuf,
}

#[derive(Debug, Args)]
pub struct NonexistenceArgs {
    pub instance: PathBuf,
    #[arg(long)]
    pub district: String,
    /// Type ceiling as `type=n`; defaults to the policy's district ceilings.
    #[arg(long = "ceiling", value_parser = parse_ceiling)]
    pub ceilings: Vec<(String, u32)>,
    /// Search without fixing the first choice by symmetry.
    #[arg(long)]
    pub no_symmetry: bool,
}

fn parse_ceiling(s: &str) -> Result<(String, u32), String> {
    let (t, n) = s.split_once('=').ok_or_else(|| format!("expected type=n, got `{s}`"))?;
    let n = n.parse().map_err(|_| format!("`{n}` is not a count"))?;
    Ok((t.to_string(), n))
}

/// Report text, exit status and files to write.
#[derive(Debug, Default)]
pub struct Outcome {
    pub report: String,
    pub exit: Exit,
    pub files: Vec<(PathBuf, String)>,
}

impl Outcome {
    fn fail(exit: Exit, message: impl std::fmt::Display) -> Outcome {
        Outcome { report: format!("error: {message}\n"), exit, files: Vec::new() }
    }
}

pub fn load(path: &Path) -> Result<Instance, InputError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| InputError::Invalid { locus: shown.clone(), message: e.to_string() })?;
    parse_instance(&text, &shown)?.resolve()
}

pub fn execute(cli: &Cli) -> Outcome {
    let budget = cli.budget;
    let result = match &cli.command {
        Command::Run(a) => load(&a.instance).map(|i| cmd_run(&i, a)),
        Command::CheckRule(a) => load(&a.instance).map(|i| cmd_check_rule(&i, a, budget)),
        Command::Bounds(a) => load(&a.instance).map(|i| cmd_bounds(&i, a, budget)),
        Command::Audit(a) => load(&a.instance).map(|i| cmd_audit(&i, a, budget)),
        Command::PolicyCheck(a) => load(&a.instance).map(|i| cmd_policy_check(&i, budget)),
        Command::Nonexistence(a) => load(&a.instance).map(|i| cmd_nonexistence(&i, a, budget)),
    };
    result.unwrap_or_else(|e| Outcome::fail(Exit::Input, e))
}

fn profile(inst: &Instance) -> Result<RuleProfile, Outcome> {
    RuleProfile::new(inst.rules.clone(), &inst.problem).map_err(|e| Outcome::fail(Exit::Input, format!("rules: {e}")))
}

fn policy(inst: &Instance) -> Result<&PolicyGoal, Outcome> {
    inst.policy.as_ref().ok_or_else(|| Outcome::fail(Exit::Input, "policy: the instance declares no policy goal"))
}

fn master(inst: &Instance, flag: &Option<Vec<String>>) -> Result<Vec<StudentId>, Outcome> {
    let p = &inst.problem;
    match flag {
        Some(names) => names
            .iter()
            .map(|n| p.student(n.trim()).ok_or_else(|| Outcome::fail(Exit::Input, format!("--master: unknown student `{n}`"))))
            .collect(),
        None => Ok(inst.master.clone().unwrap_or_else(|| p.student_ids().collect())),
    }
}

fn oracle_exit(e: &OracleError) -> Exit {
    match e {
        OracleError::UniverseTooLarge { .. } | OracleError::SearchBudgetExceeded { .. } => Exit::Budget,
        OracleError::Rule(RuleError::UniverseTooLarge { .. }) => Exit::Budget,
        OracleError::Policy(PolicyError::UniverseTooLarge { .. }) => Exit::Budget,
        OracleError::Ttc(TtcError::InvalidMaster) => Exit::Input,
        _ => Exit::Mechanism,
    }
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(o) => return o,
        }
    };
}

fn verdicts(out: &mut String, inst: &Instance, x: &Matching) {
    let p = &inst.problem;
    let _ = writeln!(out, "verdicts:");
    match check_individual_rationality(x, p) {
        Verdict::Holds => {
            let _ = writeln!(out, "  individual-rationality: holds");
        }
        Verdict::Fails(s) => {
            let _ = writeln!(out, "  individual-rationality: fails ({} is worse off)", p.student_name(s));
        }
    }
    match check_balanced_exchange(x, p) {
        Verdict::Holds => {
            let _ = writeln!(out, "  balanced-exchange: holds");
        }
        Verdict::Fails(b) => {
            let _ = writeln!(
                out,
                "  balanced-exchange: fails ({} serves {} with k_d = {})",
                p.district_name(b.district),
                b.assigned,
                b.k_d
            );
        }
    }
    if let Ok(gaps) = alpha_gaps_by_type(x, p) {
        let by_type: Vec<String> = p.type_ids().zip(&gaps).map(|(t, g)| format!("{} {}", p.type_name(t), g)).collect();
        let max = gaps.iter().max().copied().unwrap_or_default();
        let _ = writeln!(out, "  alpha-gap: {max} ({})", by_type.join(", "));
    }
    match (&inst.policy, distribution_of(x, p)) {
        (Some(goal), Ok(xi)) => {
            let inside = if goal.contains(&xi, p) { "holds" } else { "fails" };
            let _ = writeln!(out, "  goal: {inside}");
        }
        _ => {
            let _ = writeln!(out, "  goal: none");
        }
    }
}

pub fn cmd_run(inst: &Instance, a: &RunArgs) -> Outcome {
    let p = &inst.problem;
    let mut out = Outcome::default();
    let _ = writeln!(out.report, "instance: {}", inst.meta.name);
    let mut cycles = Vec::new();
    let (trace, outcome, steps) = match a.mechanism {
        RunMechanism::Spda | RunMechanism::SpdaIntra => {
            let rules = tri!(profile(inst));
            let (name, run) = match a.mechanism {
                RunMechanism::Spda => ("spda", run_spda(p, &rules)),
                _ => ("spda-intra", run_intradistrict_spda(p, &rules)),
            };
            let _ = writeln!(out.report, "mechanism: {name}");
            match run {
                Ok(t) => (report::spda_trace_json(p, name, &t), t.outcome.clone(), t.steps.len()),
                Err(e) => {
                    let mut fail = Outcome::fail(Exit::Mechanism, &e);
                    if let (SpdaError::RuleViolation { steps, .. }, Some(path)) = (&e, &a.trace) {
                        let partial = interdistrict::spda::SpdaTrace { steps: steps.clone(), outcome: Matching::new() };
                        fail.files.push((path.clone(), report::to_pretty(&report::spda_trace_json(p, name, &partial))));
                    }
                    return fail;
                }
            }
        }
        RunMechanism::Ttc => {
            let goal = tri!(policy(inst));
            let order = tri!(master(inst, &a.master));
            let _ = writeln!(out.report, "mechanism: ttc");
            match run_ttc(p, goal, &order) {
                Ok(t) => {
                    for (i, step) in t.steps.iter().enumerate() {
                        let shown: Vec<String> =
                            step.cycles.iter().map(|c| report::cycle(p, &c.students, &c.pairs)).collect();
                        cycles.push(format!("  step {}: {}", i + 1, shown.join(" ")));
                    }
                    (report::ttc_trace_json(p, &t, Some(&t.outcome)), t.outcome.clone(), t.steps.len())
                }
                Err(TtcError::InvalidMaster) => return Outcome::fail(Exit::Input, TtcError::InvalidMaster),
                Err(e) => {
                    let mut fail = Outcome::fail(Exit::Mechanism, &e);
                    if let (TtcError::Stuck { trace, .. }, Some(path)) = (&e, &a.trace) {
                        fail.files.push((path.clone(), report::to_pretty(&report::ttc_trace_json(p, trace, None))));
                    }
                    return fail;
                }
            }
        }
    };
    let csv = matching_csv(p, &outcome);
    let _ = writeln!(out.report, "steps: {steps}");
    if !cycles.is_empty() {
        let _ = writeln!(out.report, "cycles:\n{}", cycles.join("\n"));
    }
    let _ = write!(out.report, "outcome:\n{csv}");
    verdicts(&mut out.report, inst, &outcome);
    match &a.trace {
        Some(path) => {
            let _ = writeln!(out.report, "trace: {}", path.display());
            out.files.push((path.clone(), report::to_pretty(&trace)));
        }
        None => {
            let _ = writeln!(out.report, "trace: none");
        }
    }
    if let Some(path) = &a.csv {
        out.files.push((path.clone(), csv));
    }
    out
}

fn check_config(budget: Option<u128>) -> CheckConfig {
    let mut cfg = CheckConfig::default();
    if let Some(b) = budget {
        cfg.max_feasible_sets = b;
        cfg.max_matchings = b;
    }
    cfg
}

pub fn cmd_check_rule(inst: &Instance, a: &CheckRuleArgs, budget: Option<u128>) -> Outcome {
    let p = &inst.problem;
    let Some(d) = p.district(&a.district) else {
        return Outcome::fail(Exit::Input, format!("unknown district `{}`", a.district));
    };
    let mut props = Vec::new();
    for name in &a.properties {
        match RuleProperty::from_name(name) {
            Some(prop) => props.push(prop),
            None => {
                let known: Vec<&str> = RuleProperty::ALL.iter().map(|q| q.name()).collect();
                return Outcome::fail(Exit::Input, format!("unknown property `{name}` (known: {})", known.join(", ")));
            }
        }
    }
    let rules = tri!(profile(inst));
    let rule = rules.rule(d);
    let cfg = check_config(budget);
    let mut out = Outcome::default();
    let _ = writeln!(out.report, "instance: {}", inst.meta.name);
    let _ = writeln!(out.report, "district: {}", a.district);
    for prop in props {
        let verdict = match prop {
            RuleProperty::AccommodatesUnmatched => check_accommodates_unmatched(&rules, p, &cfg),
            _ => check_property(rule, prop, p, &cfg),
        };
        match verdict {
            Ok(Verdict::Holds) => {
                let _ = writeln!(out.report, "{}: holds", prop.name());
            }
            Ok(Verdict::Fails(w)) => {
                out.exit = out.exit.max(Exit::PropertyFails);
                let _ = writeln!(out.report, "{}: fails", prop.name());
                for set in &w.sets {
                    let _ = writeln!(out.report, "  set: {}", set.display(p));
                }
                if let Some(x) = w.contract {
                    let _ = writeln!(out.report, "  contract: ({},{})", p.student_name(x.student), p.school_name(x.school));
                }
                let _ = writeln!(out.report, "  note: {}", w.note);
            }
            Err(e @ RuleError::UniverseTooLarge { .. }) => {
                out.exit = out.exit.max(Exit::Budget);
                let _ = writeln!(out.report, "{}: not checked ({e})", prop.name());
            }
            Err(e) => return Outcome::fail(Exit::Mechanism, format!("{}: {e}", prop.name())),
        }
    }
    out
}

/// School-type ceilings from the rules, else from the policy goal.
fn school_ceilings(inst: &Instance) -> BTreeMap<(SchoolId, TypeId), u32> {
    let mut out = BTreeMap::new();
    for r in &inst.rules {
        out.extend(r.ceilings.iter().map(|(&k, &v)| (k, v)));
    }
    if out.is_empty() {
        if let Some(PolicyGoal {
            form: GoalForm::SchoolDiversity { ceilings, .. } | GoalForm::Combination { ceilings, .. },
            ..
        }) = &inst.policy
        {
            out = ceilings.clone();
        }
    }
    out
}

pub fn cmd_bounds(inst: &Instance, a: &BoundsArgs, budget: Option<u128>) -> Outcome {
    let p = &inst.problem;
    let ceilings = school_ceilings(inst);
    if ceilings.is_empty() {
        return Outcome::fail(Exit::Input, "the instance declares no school-type ceilings");
    }
    let alpha = match &a.alpha {
        Some(s) => tri!(parse_rational(s, "--alpha").map_err(|e| Outcome::fail(Exit::Input, e))),
        None => match inst.alpha {
            Some(x) => x,
            None => return Outcome::fail(Exit::Input, "no alpha given and the instance declares none"),
        },
    };
    let report = match diversity_condition(p, &ceilings, alpha) {
        Ok(r) => r,
        Err(e) => return Outcome::fail(Exit::Mechanism, e),
    };
    let mut out = Outcome::default();
    let r = &mut out.report;
    let _ = writeln!(r, "instance: {}", inst.meta.name);
    let _ = writeln!(r, "implied bounds:");
    let _ = writeln!(r, "district,type,floor,ceiling");
    for d in p.district_ids() {
        for t in p.type_ids() {
            let _ = writeln!(
                r,
                "{},{},{},{}",
                p.district_name(d),
                p.type_name(t),
                report.bounds.floor[&(d, t)],
                report.bounds.ceiling[&(d, t)]
            );
        }
    }
    let _ = writeln!(r, "deltas:");
    let _ = writeln!(r, "type,district,other,delta");
    for x in &report.deltas {
        let _ = writeln!(r, "{},{},{},{}", p.type_name(x.ty), p.district_name(x.d), p.district_name(x.d_prime), x.value);
    }
    if let Some(m) = report.max_delta() {
        let _ = writeln!(r, "max delta: {m}");
    }
    let _ = writeln!(r, "alpha: {alpha}");
    let _ = writeln!(r, "condition: {}", if report.satisfied { "holds" } else { "fails" });
    if a.verify {
        match legitimate_distributions(p, &ceilings, budget.unwrap_or(DEFAULT_BUDGET)) {
            Ok(all) => {
                let agree = p.district_ids().all(|d| {
                    p.type_ids().all(|t| {
                        let vals = all.iter().map(|xi| xi.district_type(p, d, t));
                        vals.clone().min() == Some(report.bounds.floor[&(d, t)])
                            && vals.max() == Some(report.bounds.ceiling[&(d, t)])
                    })
                });
                let _ = writeln!(r, "enumeration: {} legitimate distributions, {}", all.len(), if agree { "agrees" } else { "DISAGREES" });
                if !agree {
                    out.exit = Exit::Mechanism;
                    return out;
                }
            }
            Err(e) => {
                let _ = writeln!(r, "enumeration: not run ({e})");
                out.exit = Exit::Budget;
                return out;
            }
        }
    }
    if !report.satisfied {
        out.exit = Exit::ConditionFails;
    }
    out
}

fn weakly_better_for_all(x: &Matching, y: &Matching, p: &Problem) -> bool {
    p.student_ids().all(|s| !p.prefers(s, y.school_of(s), x.school_of(s)))
}

/// Agreement between the mechanism's outcome and the brute-force oracle.
fn cross_check(mech: &Mechanism, p: &Problem) -> Result<Vec<String>, OracleError> {
    let mut issues = Vec::new();
    match mech {
        Mechanism::Spda(rules) => {
            let x = mech.run(p)?;
            if !is_stable(&x, p, rules)?.holds() {
                issues.push(format!("outcome {} is not stable", x.display(p)));
            }
            let stable = enumerate_stable_matchings(p, &rules.completions(p)?, DEFAULT_BUDGET)?;
            if !stable.contains(&x) || !stable.iter().all(|y| weakly_better_for_all(&x, y, p)) {
                issues.push(format!("outcome {} is not student-optimal among stable matchings", x.display(p)));
            }
        }
        Mechanism::Ttc { goal, .. } => {
            let x = mech.run(p)?;
            if !constrained_efficient_ir_matchings(p, goal, DEFAULT_BUDGET)?.contains(&x) {
                issues.push(format!("outcome {} is not constrained efficient", x.display(p)));
            }
        }
        Mechanism::EfficientSelector { .. } => {}
    }
    Ok(issues)
}

pub fn cmd_audit(inst: &Instance, a: &AuditArgs, budget: Option<u128>) -> Outcome {
    let p = &inst.problem;
    let mech = match a.mechanism {
        AuditMechanism::Spda => Mechanism::Spda(tri!(profile(inst))),
        AuditMechanism::Ttc => Mechanism::Ttc { goal: tri!(policy(inst)).clone(), master: tri!(master(inst, &a.master)) },
        AuditMechanism::EfficientSelector => {
            Mechanism::EfficientSelector { goal: tri!(policy(inst)).clone(), budget: DEFAULT_BUDGET }
        }
    };
    let mut cfg = AuditConfig::default();
    if let Some(b) = budget {
        cfg.max_runs = b;
    }
    let audit = match audit_strategy_proofness(&mech, p, &cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::fail(oracle_exit(&e), e),
    };
    let mut out = Outcome::default();
    let r = &mut out.report;
    let _ = writeln!(r, "instance: {}", inst.meta.name);
    let _ = writeln!(r, "mechanism: {}", audit.mechanism);
    let _ = writeln!(r, "misreport runs: {}", audit.runs);
    let _ = writeln!(r, "exhaustive: {}", if audit.exhaustive { "yes" } else { "no (budget exceeded)" });
    let _ = writeln!(r, "findings: {}", audit.findings.len());
    // one line per student: the first profitable misreport and how many there are
    let mut by_student: BTreeMap<StudentId, (usize, &Finding)> = BTreeMap::new();
    for f in &audit.findings {
        by_student.entry(f.student).or_insert((0, f)).0 += 1;
    }
    for (s, (count, f)) in by_student {
        let _ = writeln!(
            r,
            "  {} ({} misreports) true {} reports {}: {} -> {}",
            p.student_name(s),
            count,
            report::schools(p, &f.truth),
            report::schools(p, &f.misreport),
            report::school_or_none(p, f.honest),
            report::school_or_none(p, f.deviant)
        );
    }
    let issues = match cross_check(&mech, p) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(r, "oracle: not run ({e})");
            out.exit = oracle_exit(&e);
            return out;
        }
    };
    if issues.is_empty() {
        let _ = writeln!(r, "oracle: agrees");
    } else {
        for i in &issues {
            let _ = writeln!(r, "oracle: {i}");
        }
    }
    out.exit = if !audit.findings.is_empty() || !issues.is_empty() {
        Exit::Finding
    } else if !audit.exhaustive {
        Exit::Budget
    } else {
        Exit::Ok
    };
    out
}

fn goal_name(form: &GoalForm) -> &'static str {
    match form {
        GoalForm::Unconstrained => "unconstrained",
        GoalForm::ExplicitSet(_) => "explicit-set",
        GoalForm::BalancedExchange => "balanced-exchange",
        GoalForm::SchoolDiversity { .. } => "school-diversity",
        GoalForm::Combination { .. } => "combination",
        GoalForm::FLambda { .. } => "f-lambda",
        GoalForm::DistrictCeilings(_) => "district-ceilings",
        GoalForm::AlphaDiversity(_) => "alpha-diversity",
    }
}

fn cells(p: &Problem, list: &[(SchoolId, TypeId)]) -> String {
    let v: Vec<String> = list.iter().map(|&x| report::pair(p, x)).collect();
    v.join(" ")
}

pub fn cmd_policy_check(inst: &Instance, budget: Option<u128>) -> Outcome {
    let p = &inst.problem;
    let goal = tri!(policy(inst));
    let budget = budget.unwrap_or(DEFAULT_BUDGET);
    let (xi0, members) = match enumerate_xi0(p, budget).and_then(|all| Ok((all, goal.members(p, budget)?))) {
        Ok(v) => v,
        Err(e @ PolicyError::UniverseTooLarge { .. }) => return Outcome::fail(Exit::Budget, e),
        Err(e) => return Outcome::fail(Exit::Mechanism, e),
    };
    let mut out = Outcome::default();
    let r = &mut out.report;
    let _ = writeln!(r, "instance: {}", inst.meta.name);
    let _ = writeln!(r, "goal: {}", goal_name(&goal.form));
    if let Some(w) = goal.warning() {
        let _ = writeln!(r, "warning: {w}");
    }
    let _ = writeln!(r, "order: {}", cells(p, &p.school_ids().flat_map(|c| p.type_ids().map(move |t| (c, t))).collect::<Vec<_>>()));
    let _ = writeln!(r, "distributions matching everyone: {}", xi0.len());
    let _ = writeln!(r, "goal members: {}", members.len());
    let initial = distribution_of(&p.initial_matching(), p).expect("validated initial matching is feasible");
    let _ = writeln!(r, "initial {:?}: {}", initial.counts(), if goal.contains(&initial, p) { "inside" } else { "outside" });
    match is_mconvex(&members) {
        Verdict::Holds => {
            let _ = writeln!(r, "m-convex: holds");
        }
        Verdict::Fails(w) => {
            out.exit = Exit::PropertyFails;
            let _ = writeln!(r, "m-convex: fails");
            let _ = writeln!(r, "  xi: {:?}", w.xi.counts());
            let _ = writeln!(r, "  xi~: {:?}", w.xi_tilde.counts());
            let _ = writeln!(r, "  first failing cell: {}", report::pair(p, w.cell));
            let _ = writeln!(r, "  all failing cells: {}", cells(p, &exchange_fails_at(&members, &w.xi, &w.xi_tilde)));
        }
    }
    out
}

pub fn cmd_nonexistence(inst: &Instance, a: &NonexistenceArgs, budget: Option<u128>) -> Outcome {
    let p = &inst.problem;
    let Some(d) = p.district(&a.district) else {
        return Outcome::fail(Exit::Input, format!("unknown district `{}`", a.district));
    };
    let mut ceilings = BTreeMap::new();
    if a.ceilings.is_empty() {
        if let Some(PolicyGoal { form: GoalForm::DistrictCeilings(caps), .. }) = &inst.policy {
            ceilings.extend(caps.iter().filter(|((dd, _), _)| *dd == d).map(|(&(_, t), &v)| (t, v)));
        }
    }
    for (name, v) in &a.ceilings {
        match p.type_id(name) {
            Some(t) => {
                ceilings.insert(t, *v);
            }
            None => return Outcome::fail(Exit::Input, format!("--ceiling: unknown type `{name}`")),
        }
    }
    if ceilings.is_empty() {
        return Outcome::fail(Exit::Input, "no type ceilings for the district (use --ceiling or a district-ceilings policy)");
    }
    let mut search = NonexistenceInstance::new(p.clone(), d, ceilings.clone());
    search.symmetry = !a.no_symmetry;
    if let Some(b) = budget {
        search.max_nodes = u64::try_from(b).unwrap_or(u64::MAX);
    }
    let result = match search_rule_nonexistence(&search) {
        Ok(r) => r,
        Err(e) => return Outcome::fail(oracle_exit(&e), e),
    };
    let mut out = Outcome::default();
    let r = &mut out.report;
    let _ = writeln!(r, "instance: {}", inst.meta.name);
    let _ = writeln!(r, "district: {}", a.district);
    let caps: Vec<String> = ceilings.iter().map(|(&t, v)| format!("{}={v}", p.type_name(t))).collect();
    let _ = writeln!(r, "ceilings: {}", caps.join(" "));
    let _ = writeln!(r, "symmetry: {}", if search.symmetry { "on" } else { "off" });
    match result {
        SearchResult::Unsatisfiable { refutation, nodes } => {
            let _ = writeln!(r, "verdict: unsatisfiable");
            let _ = writeln!(r, "nodes: {nodes}");
            let _ = writeln!(r, "refutation ({} cases):", refutation.size());
            let _ = write!(r, "{}", refutation.render(p));
        }
        SearchResult::Satisfiable { rule, nodes } => {
            let _ = writeln!(r, "verdict: satisfiable");
            let _ = writeln!(r, "nodes: {nodes}");
            let compiled = match Rule::new(rule.clone(), p) {
                Ok(x) => x,
                Err(e) => return Outcome::fail(Exit::Mechanism, e),
            };
            for prop in [
                RuleProperty::DWeaklyAcceptant,
                RuleProperty::Irc,
                RuleProperty::WeaklySubstitutable,
                RuleProperty::DistrictTypeCeilings,
            ] {
                let held = check_property(&compiled, prop, p, &CheckConfig::default()).is_ok_and(|v| v.holds());
                let _ = writeln!(r, "check {}: {}", prop.name(), if held { "holds" } else { "fails" });
                if !held {
                    out.exit = Exit::Mechanism;
                }
            }
            let _ = writeln!(r, "witness:");
            if let Some(table) = &rule.table {
                for (set, choice) in &table.entries {
                    let _ = writeln!(r, "  Ch({}) = {}", set.display(p), choice.display(p));
                }
            }
        }
    }
    out
}
