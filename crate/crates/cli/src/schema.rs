//! The JSON instance format.
//!
//! Everything is keyed by the names declared in the file. Contracts are
//! written as `[student, school]` pairs, distributions as school-major count
//! vectors, and rationals as `"p/q"` strings.

use std::collections::{BTreeMap, BTreeSet};

use interdistrict::model::{SchoolSpec, StudentSpec};
use interdistrict::rules::{ChoiceTable, TableDomain};
use interdistrict::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("{path}: malformed instance at line {line}, column {column}: {message}")]
    Malformed { path: String, line: usize, column: usize, message: String },
    #[error("{locus}: {message}")]
    Invalid { locus: String, message: String },
}

fn invalid(locus: impl Into<String>, message: impl Into<String>) -> InputError {
    InputError::Invalid { locus: locus.into(), message: message.into() }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default)]
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchoolEntry {
    pub id: String,
    pub district: String,
    pub capacity: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentEntry {
    pub id: String,
    pub district: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub preferences: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub student: String,
    pub school: String,
}

/// school → type → count
pub type CellMap = BTreeMap<String, BTreeMap<String, u32>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindEntry {
    Sequential,
    InitialRespecting,
    Rationed,
    ReservesAndCeilings,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainEntry {
    AllSubsets,
    FeasibleForStudents,
}

pub type ContractEntry = (String, String);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub set: Vec<ContractEntry>,
    pub choice: Vec<ContractEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub domain: DomainEntry,
    pub rows: Vec<TableRow>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleEntry {
    pub district: String,
    pub kind: KindEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub school_order: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub priorities: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reserves: CellMap,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ceilings: CellMap,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub district_ceilings: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_order: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub district_cap: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableEntry>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub completion: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionEntry {
    ManhattanIdeal { ideal: Vec<u32> },
    Indicator { members: Vec<Vec<u32>> },
    Table { values: Vec<(Vec<u32>, String)>, default: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FormEntry {
    Unconstrained {},
    ExplicitSet {
        members: Vec<Vec<u32>>,
    },
    BalancedExchange {},
    SchoolDiversity {
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        floors: CellMap,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        ceilings: CellMap,
    },
    Combination {
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        floors: CellMap,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        ceilings: CellMap,
    },
    FLambda {
        function: FunctionEntry,
        lambda: String,
    },
    /// district → type → ceiling
    DistrictCeilings {
        ceilings: CellMap,
    },
    AlphaDiversity {
        alpha: String,
    },
}

fn is_true(b: &bool) -> bool {
    *b
}

/// A goal form plus the `intersect_xi0` switch (default true) in one object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PolicyEntry {
    #[serde(flatten)]
    pub form: FormEntry,
    #[serde(skip_serializing_if = "is_true")]
    pub intersect_xi0: bool,
}

// serde cannot combine `flatten` with `deny_unknown_fields`, so the switch
// is split off by hand and the rest goes through the strict form.
impl<'de> Deserialize<'de> for PolicyEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut map = serde_json::Map::deserialize(d)?;
        let intersect_xi0 = match map.remove("intersect_xi0") {
            None => true,
            Some(Value::Bool(b)) => b,
            Some(other) => return Err(D::Error::custom(format!("intersect_xi0 must be a boolean, found {other}"))),
        };
        let form = FormEntry::deserialize(Value::Object(map)).map_err(D::Error::custom)?;
        Ok(PolicyEntry { form, intersect_xi0 })
    }
}

/// An instance file as written on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub meta: Meta,
    pub types: Vec<String>,
    pub districts: Vec<String>,
    pub schools: Vec<SchoolEntry>,
    pub students: Vec<StudentEntry>,
    pub initial_matching: Vec<Assignment>,
    #[serde(default)]
    pub rules: Vec<RuleEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_list: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
}

/// A resolved instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub meta: Meta,
    pub problem: Problem,
    pub rules: Vec<RuleSpec>,
    pub policy: Option<PolicyGoal>,
    pub master: Option<Vec<StudentId>>,
    pub alpha: Option<Rational>,
}

pub fn parse_instance(text: &str, path: &str) -> Result<InstanceFile, InputError> {
    serde_json::from_str(text).map_err(|e| InputError::Malformed {
        path: path.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn parse_rational(s: &str, locus: &str) -> Result<Rational, InputError> {
    let r: Rational = s
        .trim()
        .parse()
        .map_err(|_| invalid(locus, format!("`{s}` is not a rational of the form p/q")))?;
    Ok(r)
}

pub fn format_rational(r: Rational) -> String {
    r.to_string()
}

struct Names<'a>(&'a Problem);

impl Names<'_> {
    fn student(&self, n: &str, locus: &str) -> Result<StudentId, InputError> {
        self.0.student(n).ok_or_else(|| invalid(locus, format!("unknown student `{n}`")))
    }
    fn school(&self, n: &str, locus: &str) -> Result<SchoolId, InputError> {
        self.0.school(n).ok_or_else(|| invalid(locus, format!("unknown school `{n}`")))
    }
    fn district(&self, n: &str, locus: &str) -> Result<DistrictId, InputError> {
        self.0.district(n).ok_or_else(|| invalid(locus, format!("unknown district `{n}`")))
    }
    fn ty(&self, n: &str, locus: &str) -> Result<TypeId, InputError> {
        self.0.type_id(n).ok_or_else(|| invalid(locus, format!("unknown type `{n}`")))
    }
    fn students(&self, names: &[String], locus: &str) -> Result<Vec<StudentId>, InputError> {
        names.iter().map(|n| self.student(n, locus)).collect()
    }
    fn schools(&self, names: &[String], locus: &str) -> Result<Vec<SchoolId>, InputError> {
        names.iter().map(|n| self.school(n, locus)).collect()
    }

    fn cells(&self, map: &CellMap, locus: &str) -> Result<BTreeMap<(SchoolId, TypeId), u32>, InputError> {
        let mut out = BTreeMap::new();
        for (c, row) in map {
            let cid = self.school(c, locus)?;
            for (t, &v) in row {
                out.insert((cid, self.ty(t, &format!("{locus}.{c}"))?), v);
            }
        }
        Ok(out)
    }

    fn district_cells(&self, map: &CellMap, locus: &str) -> Result<BTreeMap<(DistrictId, TypeId), u32>, InputError> {
        let mut out = BTreeMap::new();
        for (d, row) in map {
            let did = self.district(d, locus)?;
            for (t, &v) in row {
                out.insert((did, self.ty(t, &format!("{locus}.{d}"))?), v);
            }
        }
        Ok(out)
    }

    fn contracts(&self, list: &[ContractEntry], locus: &str) -> Result<Matching, InputError> {
        let mut m = Matching::new();
        for (s, c) in list {
            m.insert(self.0.contract(self.student(s, locus)?, self.school(c, locus)?));
        }
        Ok(m)
    }

    fn distribution(&self, counts: &[u32], locus: &str) -> Result<Distribution, InputError> {
        let p = self.0;
        let want = p.n_schools() * p.n_types();
        if counts.len() != want {
            return Err(invalid(locus, format!("expected {want} counts (schools × types), found {}", counts.len())));
        }
        Ok(Distribution::from_counts(p.n_types(), counts.to_vec()))
    }
}

fn resolve_rule(n: &Names<'_>, r: &RuleEntry, locus: &str) -> Result<RuleSpec, InputError> {
    let kind = match r.kind {
        KindEntry::Sequential => RuleKind::SequentialResponsive,
        KindEntry::InitialRespecting => RuleKind::InitialRespecting,
        KindEntry::Rationed => RuleKind::RationedSequential,
        KindEntry::ReservesAndCeilings => RuleKind::ReservesAndCeilings,
        KindEntry::Table => RuleKind::ExplicitTable,
    };
    let mut spec = RuleSpec::new(n.district(&r.district, &format!("{locus}.district"))?, kind);
    spec.school_order = n.schools(&r.school_order, &format!("{locus}.school_order"))?;
    for (c, order) in &r.priorities {
        let l = format!("{locus}.priorities.{c}");
        spec.priorities.insert(n.school(c, &l)?, n.students(order, &l)?);
    }
    if let Some(m) = &r.master {
        spec.master = Some(n.students(m, &format!("{locus}.master"))?);
    }
    spec.reserves = n.cells(&r.reserves, &format!("{locus}.reserves"))?;
    spec.ceilings = n.cells(&r.ceilings, &format!("{locus}.ceilings"))?;
    for (t, &v) in &r.district_ceilings {
        spec.district_ceilings.insert(n.ty(t, &format!("{locus}.district_ceilings"))?, v);
    }
    if let Some(order) = &r.type_order {
        let l = format!("{locus}.type_order");
        spec.type_order = Some(order.iter().map(|t| n.ty(t, &l)).collect::<Result<_, _>>()?);
    }
    spec.district_cap = r.district_cap;
    if let Some(table) = &r.table {
        let domain = match table.domain {
            DomainEntry::AllSubsets => TableDomain::AllSubsets,
            DomainEntry::FeasibleForStudents => TableDomain::FeasibleForStudents,
        };
        let mut entries = BTreeMap::new();
        for (i, row) in table.rows.iter().enumerate() {
            let l = format!("{locus}.table.rows[{i}]");
            entries.insert(n.contracts(&row.set, &l)?, n.contracts(&row.choice, &l)?);
        }
        spec.table = Some(ChoiceTable { domain, entries });
    }
    spec.completion = r.completion;
    Ok(spec)
}

fn resolve_function(n: &Names<'_>, f: &FunctionEntry, locus: &str) -> Result<PolicyFunction, InputError> {
    Ok(match f {
        FunctionEntry::ManhattanIdeal { ideal } => {
            PolicyFunction::manhattan(n.distribution(ideal, locus)?, n.0).map_err(|e| invalid(locus, e.to_string()))?
        }
        FunctionEntry::Indicator { members } => PolicyFunction::Indicator(
            members.iter().map(|m| n.distribution(m, locus)).collect::<Result<_, _>>()?,
        ),
        FunctionEntry::Table { values, default } => {
            let mut map = BTreeMap::new();
            for (xi, v) in values {
                map.insert(n.distribution(xi, locus)?, parse_rational(v, locus)?);
            }
            PolicyFunction::Table { values: map, default: parse_rational(default, locus)? }
        }
    })
}

fn resolve_policy(n: &Names<'_>, e: &PolicyEntry) -> Result<PolicyGoal, InputError> {
    let l = "policy";
    let form = match &e.form {
        FormEntry::Unconstrained {} => GoalForm::Unconstrained,
        FormEntry::ExplicitSet { members } => GoalForm::ExplicitSet(
            members.iter().map(|m| n.distribution(m, "policy.members")).collect::<Result<_, _>>()?,
        ),
        FormEntry::BalancedExchange {} => GoalForm::BalancedExchange,
        FormEntry::SchoolDiversity { floors, ceilings } => GoalForm::SchoolDiversity {
            floors: n.cells(floors, "policy.floors")?,
            ceilings: n.cells(ceilings, "policy.ceilings")?,
        },
        FormEntry::Combination { floors, ceilings } => GoalForm::Combination {
            floors: n.cells(floors, "policy.floors")?,
            ceilings: n.cells(ceilings, "policy.ceilings")?,
        },
        FormEntry::FLambda { function, lambda } => GoalForm::FLambda {
            f: resolve_function(n, function, "policy.function")?,
            lambda: parse_rational(lambda, "policy.lambda")?,
        },
        FormEntry::DistrictCeilings { ceilings } => {
            GoalForm::DistrictCeilings(n.district_cells(ceilings, "policy.ceilings")?)
        }
        FormEntry::AlphaDiversity { alpha } => GoalForm::AlphaDiversity(parse_rational(alpha, "policy.alpha")?),
    };
    let goal = PolicyGoal::new(form, e.intersect_xi0);
    goal.validate().map_err(|err| invalid(l, err.to_string()))?;
    Ok(goal)
}

impl InstanceFile {
    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            districts: self.districts.clone(),
            types: self.types.clone(),
            schools: self
                .schools
                .iter()
                .map(|c| SchoolSpec { name: c.id.clone(), district: c.district.clone(), capacity: c.capacity })
                .collect(),
            students: self
                .students
                .iter()
                .map(|s| StudentSpec {
                    name: s.id.clone(),
                    district: s.district.clone(),
                    ty: s.ty.clone(),
                    preferences: s.preferences.clone(),
                })
                .collect(),
            initial: self.initial_matching.iter().map(|a| (a.student.clone(), a.school.clone())).collect(),
        }
    }

    /// Resolve every name and validate the market.
    pub fn resolve(&self) -> Result<Instance, InputError> {
        let problem = validate_problem(&self.problem_spec()).map_err(|e| invalid("instance", e.to_string()))?;
        let n = Names(&problem);
        let rules = self
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| resolve_rule(&n, r, &format!("rules[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let policy = self.policy.as_ref().map(|e| resolve_policy(&n, e)).transpose()?;
        let master = self.master_list.as_ref().map(|m| n.students(m, "master_list")).transpose()?;
        let alpha = self.alpha.as_deref().map(|a| parse_rational(a, "alpha")).transpose()?;
        Ok(Instance { meta: self.meta.clone(), problem, rules, policy, master, alpha })
    }

    /// The file that resolves to `inst`.
    pub fn from_instance(inst: &Instance) -> InstanceFile {
        let p = &inst.problem;
        let spec = p.to_spec();
        InstanceFile {
            meta: inst.meta.clone(),
            types: spec.types,
            districts: spec.districts,
            schools: spec
                .schools
                .into_iter()
                .map(|c| SchoolEntry { id: c.name, district: c.district, capacity: c.capacity })
                .collect(),
            students: spec
                .students
                .into_iter()
                .map(|s| StudentEntry { id: s.name, district: s.district, ty: s.ty, preferences: s.preferences })
                .collect(),
            initial_matching: spec
                .initial
                .into_iter()
                .map(|(student, school)| Assignment { student, school })
                .collect(),
            rules: inst.rules.iter().map(|r| rule_entry(p, r)).collect(),
            policy: inst.policy.as_ref().map(|g| policy_entry(p, g)),
            master_list: inst.master.as_ref().map(|m| student_names(p, m)),
            alpha: inst.alpha.map(format_rational),
        }
    }
}

fn student_names(p: &Problem, ids: &[StudentId]) -> Vec<String> {
    ids.iter().map(|&s| p.student_name(s).to_string()).collect()
}

fn cell_map(p: &Problem, cells: &BTreeMap<(SchoolId, TypeId), u32>) -> CellMap {
    let mut out = CellMap::new();
    for (&(c, t), &v) in cells {
        out.entry(p.school_name(c).to_string()).or_default().insert(p.type_name(t).to_string(), v);
    }
    out
}

pub fn contract_entries(p: &Problem, m: &Matching) -> Vec<ContractEntry> {
    m.iter().map(|x| (p.student_name(x.student).to_string(), p.school_name(x.school).to_string())).collect()
}

fn rule_entry(p: &Problem, r: &RuleSpec) -> RuleEntry {
    let kind = match r.kind {
        RuleKind::SequentialResponsive => KindEntry::Sequential,
        RuleKind::InitialRespecting => KindEntry::InitialRespecting,
        RuleKind::RationedSequential => KindEntry::Rationed,
        RuleKind::ReservesAndCeilings => KindEntry::ReservesAndCeilings,
        RuleKind::ExplicitTable => KindEntry::Table,
    };
    RuleEntry {
        district: p.district_name(r.district).to_string(),
        kind,
        school_order: r.school_order.iter().map(|&c| p.school_name(c).to_string()).collect(),
        priorities: r
            .priorities
            .iter()
            .map(|(&c, order)| (p.school_name(c).to_string(), student_names(p, order)))
            .collect(),
        master: r.master.as_ref().map(|m| student_names(p, m)),
        reserves: cell_map(p, &r.reserves),
        ceilings: cell_map(p, &r.ceilings),
        district_ceilings: r
            .district_ceilings
            .iter()
            .map(|(&t, &v)| (p.type_name(t).to_string(), v))
            .collect(),
        type_order: r.type_order.as_ref().map(|o| o.iter().map(|&t| p.type_name(t).to_string()).collect()),
        district_cap: r.district_cap,
        table: r.table.as_ref().map(|t| TableEntry {
            domain: match t.domain {
                TableDomain::AllSubsets => DomainEntry::AllSubsets,
                TableDomain::FeasibleForStudents => DomainEntry::FeasibleForStudents,
            },
            rows: t
                .entries
                .iter()
                .map(|(set, choice)| TableRow { set: contract_entries(p, set), choice: contract_entries(p, choice) })
                .collect(),
        }),
        completion: r.completion,
    }
}

fn members(set: &BTreeSet<Distribution>) -> Vec<Vec<u32>> {
    set.iter().map(|xi| xi.counts().to_vec()).collect()
}

fn policy_entry(p: &Problem, g: &PolicyGoal) -> PolicyEntry {
    let form = match &g.form {
        GoalForm::Unconstrained => FormEntry::Unconstrained {},
        GoalForm::ExplicitSet(set) => FormEntry::ExplicitSet { members: members(set) },
        GoalForm::BalancedExchange => FormEntry::BalancedExchange {},
        GoalForm::SchoolDiversity { floors, ceilings } => {
            FormEntry::SchoolDiversity { floors: cell_map(p, floors), ceilings: cell_map(p, ceilings) }
        }
        GoalForm::Combination { floors, ceilings } => {
            FormEntry::Combination { floors: cell_map(p, floors), ceilings: cell_map(p, ceilings) }
        }
        GoalForm::FLambda { f, lambda } => FormEntry::FLambda {
            function: match f {
                PolicyFunction::ManhattanIdeal(ideal) => FunctionEntry::ManhattanIdeal { ideal: ideal.counts().to_vec() },
                PolicyFunction::Indicator(set) => FunctionEntry::Indicator { members: members(set) },
                PolicyFunction::Table { values, default } => FunctionEntry::Table {
                    values: values.iter().map(|(xi, v)| (xi.counts().to_vec(), format_rational(*v))).collect(),
                    default: format_rational(*default),
                },
            },
            lambda: format_rational(*lambda),
        },
        GoalForm::DistrictCeilings(caps) => {
            let mut out = CellMap::new();
            for (&(d, t), &v) in caps {
                out.entry(p.district_name(d).to_string()).or_default().insert(p.type_name(t).to_string(), v);
            }
            FormEntry::DistrictCeilings { ceilings: out }
        }
        GoalForm::AlphaDiversity(alpha) => FormEntry::AlphaDiversity { alpha: format_rational(*alpha) },
    };
    PolicyEntry { form, intersect_xi0: g.intersect_xi0 }
}
