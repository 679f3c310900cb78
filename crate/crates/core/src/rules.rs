//! District admissions rules, their completions and exhaustive property checks.
//!
//! A rule is declared as a [`RuleSpec`] and compiled against a [`Problem`]
//! into a [`Rule`]. Procedural kinds run a school-by-school pipeline; the
//! completion of a procedural rule runs the same pipeline without dropping
//! the other contracts of students that an earlier school already took.

use std::collections::{BTreeMap, HashMap};
use std::ops::ControlFlow;

use thiserror::Error;

use crate::model::{
    Contract, DistrictId, FeasibleMatchings, Matching, Problem, SchoolId, StudentId, TypeId,
    Verdict,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleKind {
    /// Schools choose in order, each responsively by priority.
    SequentialResponsive,
    /// As sequential, with students initially at a school ranked first there.
    InitialRespecting,
    /// As sequential, stopping once the district holds its cap (k_d by default).
    RationedSequential,
    /// Reserve phase, then open seats under school-type ceilings and the cap.
    ReservesAndCeilings,
    /// Choice values listed set by set.
    ExplicitTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TableDomain {
    AllSubsets,
    FeasibleForStudents,
}

/// Explicit choice values, keyed by sets of the district's contracts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChoiceTable {
    pub domain: TableDomain,
    pub entries: BTreeMap<Matching, Matching>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSpec {
    pub district: DistrictId,
    pub kind: RuleKind,
    /// Processing order; defaults to the district's schools in index order.
    pub school_order: Vec<SchoolId>,
    /// Per-school strict order over all students.
    pub priorities: BTreeMap<SchoolId, Vec<StudentId>>,
    /// Fallback order for schools without their own priority list.
    pub master: Option<Vec<StudentId>>,
    pub reserves: BTreeMap<(SchoolId, TypeId), u32>,
    pub ceilings: BTreeMap<(SchoolId, TypeId), u32>,
    pub district_ceilings: BTreeMap<TypeId, u32>,
    pub type_order: Option<Vec<TypeId>>,
    pub district_cap: Option<u32>,
    pub table: Option<ChoiceTable>,
    /// Evaluate the completion pipeline instead of the rule itself.
    pub completion: bool,
}

impl RuleSpec {
    pub fn new(district: DistrictId, kind: RuleKind) -> Self {
        RuleSpec {
            district,
            kind,
            school_order: Vec::new(),
            priorities: BTreeMap::new(),
            master: None,
            reserves: BTreeMap::new(),
            ceilings: BTreeMap::new(),
            district_ceilings: BTreeMap::new(),
            type_order: None,
            district_cap: None,
            table: None,
            completion: false,
        }
    }

    pub fn with_order(mut self, order: Vec<SchoolId>) -> Self {
        self.school_order = order;
        self
    }

    pub fn with_priority(mut self, c: SchoolId, order: Vec<StudentId>) -> Self {
        self.priorities.insert(c, order);
        self
    }

    pub fn with_master(mut self, order: Vec<StudentId>) -> Self {
        self.master = Some(order);
        self
    }

    pub fn table(district: DistrictId, table: ChoiceTable) -> Self {
        let mut spec = RuleSpec::new(district, RuleKind::ExplicitTable);
        spec.table = Some(table);
        spec
    }
}

/// Reorder `base` so that students from district `d` come first.
pub fn own_students_first(p: &Problem, d: DistrictId, base: &[StudentId]) -> Vec<StudentId> {
    let (mut own, other): (Vec<StudentId>, Vec<StudentId>) =
        base.iter().partition(|&&s| p.home_district(s) == d);
    own.extend(other);
    own
}

/// A sequential rule whose every school ranks the district's own students first.
pub fn favoring_own(p: &Problem, d: DistrictId, base: &[StudentId]) -> RuleSpec {
    let order = own_students_first(p, d, base);
    let mut spec = RuleSpec::new(d, RuleKind::SequentialResponsive)
        .with_order(p.schools_of(d).to_vec());
    for &c in p.schools_of(d) {
        spec.priorities.insert(c, order.clone());
    }
    spec
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("contract {0:?} references an undeclared student or school")]
    UnknownContract(Contract),
    #[error("invalid rule for district {district:?}: {detail}")]
    InvalidSpec { district: DistrictId, detail: String },
    #[error("set {0} lies outside the table's domain")]
    OutsideTableDomain(String),
    #[error("explicit tables have no completion construction")]
    NoCompletionConstruction,
    #[error("quantifier universe too large: {size} sets")]
    UniverseTooLarge { size: u128 },
    #[error("property is defined on a profile of rules, not a single rule")]
    ProfileLevel,
    #[error("district {0:?} has no rule")]
    MissingRule(DistrictId),
    #[error("district {0:?} has more than one rule")]
    DuplicateRule(DistrictId),
}

/// A rule spec compiled against a problem.
#[derive(Clone, Debug)]
pub struct Rule {
    spec: RuleSpec,
    k_d: usize,
    cap: Option<usize>,
    order: Vec<SchoolId>,
    type_order: Vec<TypeId>,
    /// prio[c][s]: rank of student s at school c (district schools only).
    prio: Vec<Vec<usize>>,
    capacity: Vec<u32>,
    school_district: Vec<DistrictId>,
    student_type: Vec<TypeId>,
    n_types: usize,
    ceiling: Vec<u32>,
    reserve: Vec<u32>,
    district_ceiling: Vec<u32>,
}

fn invalid(d: DistrictId, detail: impl Into<String>) -> RuleError {
    RuleError::InvalidSpec { district: d, detail: detail.into() }
}

fn is_permutation(order: &[StudentId], n: usize) -> bool {
    let mut seen = vec![false; n];
    order.len() == n
        && order.iter().all(|s| s.0 < n && !std::mem::replace(&mut seen[s.0], true))
}

impl Rule {
    pub fn new(spec: RuleSpec, p: &Problem) -> Result<Rule, RuleError> {
        let d = spec.district;
        if d.0 >= p.n_districts() {
            return Err(invalid(d, "unknown district"));
        }
        let n_s = p.n_students();
        let n_c = p.n_schools();
        let n_t = p.n_types();
        let own = p.schools_of(d);

        let order = if spec.school_order.is_empty() { own.to_vec() } else { spec.school_order.clone() };
        let mut sorted = order.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != order.len() || sorted != own {
            return Err(invalid(d, "school order must list each district school exactly once"));
        }

        let type_order: Vec<TypeId> = match &spec.type_order {
            Some(o) => {
                let mut s = o.clone();
                s.sort();
                s.dedup();
                if s.len() != o.len() || s != p.type_ids().collect::<Vec<_>>() {
                    return Err(invalid(d, "type order must list each type exactly once"));
                }
                o.clone()
            }
            None => p.type_ids().collect(),
        };

        if let Some(m) = &spec.master {
            if !is_permutation(m, n_s) {
                return Err(invalid(d, "master list must order every student"));
            }
        }
        let default_order: Vec<StudentId> =
            spec.master.clone().unwrap_or_else(|| p.student_ids().collect());
        let mut prio = vec![Vec::new(); n_c];
        for (&c, list) in &spec.priorities {
            if c.0 >= n_c || p.school_district(c) != d {
                return Err(invalid(d, format!("priority given for foreign school {c:?}")));
            }
            if !is_permutation(list, n_s) {
                return Err(invalid(d, format!("priority at {} must order every student", p.school_name(c))));
            }
        }
        for &c in own {
            let mut list = spec.priorities.get(&c).cloned().unwrap_or_else(|| default_order.clone());
            if spec.kind == RuleKind::InitialRespecting {
                let (mut first, rest): (Vec<StudentId>, Vec<StudentId>) =
                    list.iter().partition(|&&s| p.initial_school(s) == c);
                first.extend(rest);
                list = first;
            }
            let mut rank = vec![0; n_s];
            for (i, s) in list.iter().enumerate() {
                rank[s.0] = i;
            }
            prio[c.0] = rank;
        }

        let mut ceiling = vec![u32::MAX; n_c * n_t];
        for (&(c, t), &q) in &spec.ceilings {
            if c.0 >= n_c || t.0 >= n_t || p.school_district(c) != d {
                return Err(invalid(d, "ceiling on a foreign school or unknown type"));
            }
            ceiling[c.0 * n_t + t.0] = q;
        }
        let mut reserve = vec![0u32; n_c * n_t];
        for (&(c, t), &r) in &spec.reserves {
            if c.0 >= n_c || t.0 >= n_t || p.school_district(c) != d {
                return Err(invalid(d, "reserve on a foreign school or unknown type"));
            }
            if r > ceiling[c.0 * n_t + t.0] {
                return Err(invalid(d, format!("reserve exceeds ceiling at {}", p.school_name(c))));
            }
            reserve[c.0 * n_t + t.0] = r;
        }
        for &c in own {
            let total: u32 = (0..n_t).map(|t| reserve[c.0 * n_t + t]).sum();
            if total > p.capacity(c) {
                return Err(invalid(d, format!("reserves exceed capacity at {}", p.school_name(c))));
            }
        }
        let mut district_ceiling = vec![u32::MAX; n_t];
        for (&t, &q) in &spec.district_ceilings {
            if t.0 >= n_t {
                return Err(invalid(d, "district ceiling for unknown type"));
            }
            district_ceiling[t.0] = q;
        }

        let k_d = p.k_d(d);
        let cap = match spec.kind {
            RuleKind::RationedSequential | RuleKind::ReservesAndCeilings => {
                Some(spec.district_cap.map_or(k_d, |c| c as usize))
            }
            _ => spec.district_cap.map(|c| c as usize),
        };

        let rule = Rule {
            k_d,
            cap,
            order,
            type_order,
            prio,
            capacity: p.school_ids().map(|c| p.capacity(c)).collect(),
            school_district: p.school_ids().map(|c| p.school_district(c)).collect(),
            student_type: p.student_ids().map(|s| p.student_type(s)).collect(),
            n_types: n_t,
            ceiling,
            reserve,
            district_ceiling,
            spec,
        };
        if rule.spec.kind == RuleKind::ExplicitTable {
            rule.validate_table(p)?;
        }
        Ok(rule)
    }

    fn validate_table(&self, p: &Problem) -> Result<(), RuleError> {
        let d = self.spec.district;
        let table = self.spec.table.as_ref().ok_or_else(|| invalid(d, "explicit rule without a table"))?;
        let universe = p.district_contracts(d);
        for (k, v) in &table.entries {
            if !v.is_subset(k) || k.iter().any(|x| x.district != d) {
                return Err(invalid(d, "table entries must map district sets to subsets"));
            }
            if table.domain == TableDomain::FeasibleForStudents && !k.is_feasible_for_students() {
                return Err(invalid(d, "table key outside the feasible-for-students domain"));
            }
        }
        let feasible_only = table.domain == TableDomain::FeasibleForStudents;
        domain_size(&universe, feasible_only, &CheckConfig::default())?;
        let mut missing = None;
        let _ = for_each_subset(&universe, feasible_only, |set| {
            let m: Matching = set.iter().copied().collect();
            if table.entries.contains_key(&m) {
                ControlFlow::Continue(())
            } else {
                missing = Some(m);
                ControlFlow::Break(())
            }
        });
        match missing {
            Some(m) => Err(invalid(d, format!("table is not total: no entry for {}", m.display(p)))),
            None => Ok(()),
        }
    }

    pub fn spec(&self) -> &RuleSpec {
        &self.spec
    }
    pub fn district(&self) -> DistrictId {
        self.spec.district
    }
    pub fn kind(&self) -> RuleKind {
        self.spec.kind
    }
    pub fn k_d(&self) -> usize {
        self.k_d
    }
    /// Declared q_c^t, if any.
    pub fn school_ceiling(&self, c: SchoolId, t: TypeId) -> Option<u32> {
        let q = self.ceiling[c.0 * self.n_types + t.0];
        (q != u32::MAX).then_some(q)
    }
    pub fn district_ceiling(&self, t: TypeId) -> Option<u32> {
        let q = self.district_ceiling[t.0];
        (q != u32::MAX).then_some(q)
    }
    fn table_domain(&self) -> Option<TableDomain> {
        self.spec.table.as_ref().map(|t| t.domain)
    }

    /// Ch_d(X). Contracts of other districts are ignored.
    pub fn choose(&self, x: &Matching) -> Result<Matching, RuleError> {
        let n_s = self.student_type.len();
        let mut xd = Vec::new();
        for c in x {
            if c.student.0 >= n_s
                || c.school.0 >= self.school_district.len()
                || self.school_district[c.school.0] != c.district
            {
                return Err(RuleError::UnknownContract(*c));
            }
            if c.district == self.spec.district {
                xd.push(*c);
            }
        }
        if let Some(table) = &self.spec.table {
            let key: Matching = xd.into_iter().collect();
            return table.entries.get(&key).cloned().ok_or_else(|| {
                RuleError::OutsideTableDomain(format!("{key:?}"))
            });
        }
        Ok(self.pipeline(&xd))
    }

    fn pipeline(&self, xd: &[Contract]) -> Matching {
        let nt = self.n_types;
        let drop_taken = !self.spec.completion;
        let per_school: Vec<Vec<Contract>> = self
            .order
            .iter()
            .map(|&c| {
                let mut v: Vec<Contract> = xd.iter().filter(|x| x.school == c).copied().collect();
                v.sort_by_key(|x| self.prio[c.0][x.student.0]);
                v
            })
            .collect();
        let mut state = Intake {
            taken: vec![false; self.student_type.len()],
            school: vec![0; self.capacity.len()],
            cell: vec![0; self.capacity.len() * nt],
            by_type: vec![0; nt],
            total: 0,
            chosen: Matching::new(),
        };

        if self.spec.kind == RuleKind::ReservesAndCeilings {
            for (i, &c) in self.order.iter().enumerate() {
                for &t in &self.type_order {
                    let need = self.reserve[c.0 * nt + t.0];
                    let mut got = 0;
                    for x in &per_school[i] {
                        if got >= need {
                            break;
                        }
                        if self.student_type[x.student.0] != t
                            || state.chosen.contains(x)
                            || (drop_taken && state.taken[x.student.0])
                        {
                            continue;
                        }
                        if self.admissible(&state, c, t) {
                            state.accept(*x, t, nt);
                            got += 1;
                        }
                    }
                }
            }
        }

        for (i, &c) in self.order.iter().enumerate() {
            for x in per_school[i].iter() {
                let t = self.student_type[x.student.0];
                if state.chosen.contains(x) || (drop_taken && state.taken[x.student.0]) {
                    continue;
                }
                if self.admissible(&state, c, t) {
                    state.accept(*x, t, nt);
                }
            }
        }
        state.chosen
    }

    fn admissible(&self, st: &Intake, c: SchoolId, t: TypeId) -> bool {
        st.school[c.0] < self.capacity[c.0]
            && st.cell[c.0 * self.n_types + t.0] < self.ceiling[c.0 * self.n_types + t.0]
            && st.by_type[t.0] < self.district_ceiling[t.0]
            && self.cap.is_none_or(|k| st.total < k)
    }

    /// The completion rule, compiled against the same problem.
    pub fn completion(&self, p: &Problem) -> Result<Rule, RuleError> {
        Rule::new(completion_of(&self.spec)?, p)
    }
}

struct Intake {
    taken: Vec<bool>,
    school: Vec<u32>,
    cell: Vec<u32>,
    by_type: Vec<u32>,
    total: usize,
    chosen: Matching,
}

impl Intake {
    fn accept(&mut self, x: Contract, t: TypeId, nt: usize) {
        self.taken[x.student.0] = true;
        self.school[x.school.0] += 1;
        self.cell[x.school.0 * nt + t.0] += 1;
        self.by_type[t.0] += 1;
        self.total += 1;
        self.chosen.insert(x);
    }
}

/// The completion construction for the procedural kinds.
pub fn completion_of(spec: &RuleSpec) -> Result<RuleSpec, RuleError> {
    if spec.kind == RuleKind::ExplicitTable {
        return Err(RuleError::NoCompletionConstruction);
    }
    let mut out = spec.clone();
    out.completion = true;
    Ok(out)
}

/// One compiled rule per district.
#[derive(Clone, Debug)]
pub struct RuleProfile {
    rules: Vec<Rule>,
}

impl RuleProfile {
    pub fn new(specs: Vec<RuleSpec>, p: &Problem) -> Result<RuleProfile, RuleError> {
        let mut slots: Vec<Option<Rule>> = vec![None; p.n_districts()];
        for spec in specs {
            let d = spec.district;
            if d.0 >= slots.len() {
                return Err(invalid(d, "unknown district"));
            }
            if slots[d.0].is_some() {
                return Err(RuleError::DuplicateRule(d));
            }
            slots[d.0] = Some(Rule::new(spec, p)?);
        }
        let rules = slots
            .into_iter()
            .enumerate()
            .map(|(d, r)| r.ok_or(RuleError::MissingRule(DistrictId(d))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RuleProfile { rules })
    }

    pub fn from_rules(rules: Vec<Rule>) -> RuleProfile {
        RuleProfile { rules }
    }

    pub fn rule(&self, d: DistrictId) -> &Rule {
        &self.rules[d.0]
    }
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }
    pub fn choose(&self, d: DistrictId, x: &Matching) -> Result<Matching, RuleError> {
        self.rules[d.0].choose(x)
    }
    pub fn specs(&self) -> Vec<RuleSpec> {
        self.rules.iter().map(|r| r.spec.clone()).collect()
    }
    /// The profile of completions.
    pub fn completions(&self, p: &Problem) -> Result<RuleProfile, RuleError> {
        Ok(RuleProfile { rules: self.rules.iter().map(|r| r.completion(p)).collect::<Result<_, _>>()? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleProperty {
    Feasible,
    Acceptant,
    WeaklyAcceptant,
    DWeaklyAcceptant,
    Rationed,
    RespectsInitialMatching,
    FavorsOwnStudents,
    AccommodatesUnmatched,
    Substitutable,
    WeaklySubstitutable,
    Lad,
    Irc,
    PathIndependent,
    IsCompletionOf,
    SchoolTypeCeilings,
    DistrictTypeCeilings,
}

impl RuleProperty {
    pub const ALL: [RuleProperty; 16] = [
        RuleProperty::Feasible,
        RuleProperty::Acceptant,
        RuleProperty::WeaklyAcceptant,
        RuleProperty::DWeaklyAcceptant,
        RuleProperty::Rationed,
        RuleProperty::RespectsInitialMatching,
        RuleProperty::FavorsOwnStudents,
        RuleProperty::AccommodatesUnmatched,
        RuleProperty::Substitutable,
        RuleProperty::WeaklySubstitutable,
        RuleProperty::Lad,
        RuleProperty::Irc,
        RuleProperty::PathIndependent,
        RuleProperty::IsCompletionOf,
        RuleProperty::SchoolTypeCeilings,
        RuleProperty::DistrictTypeCeilings,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleProperty::Feasible => "feasible",
            RuleProperty::Acceptant => "acceptant",
            RuleProperty::WeaklyAcceptant => "weakly-acceptant",
            RuleProperty::DWeaklyAcceptant => "d-weakly-acceptant",
            RuleProperty::Rationed => "rationed",
            RuleProperty::RespectsInitialMatching => "respects-initial",
            RuleProperty::FavorsOwnStudents => "favors-own",
            RuleProperty::AccommodatesUnmatched => "accommodates-unmatched",
            RuleProperty::Substitutable => "substitutable",
            RuleProperty::WeaklySubstitutable => "weakly-substitutable",
            RuleProperty::Lad => "lad",
            RuleProperty::Irc => "irc",
            RuleProperty::PathIndependent => "path-independent",
            RuleProperty::IsCompletionOf => "completion",
            RuleProperty::SchoolTypeCeilings => "school-type-ceilings",
            RuleProperty::DistrictTypeCeilings => "district-type-ceilings",
        }
    }

    pub fn from_name(name: &str) -> Option<RuleProperty> {
        RuleProperty::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Whether the definition quantifies over feasible-for-students sets only.
    pub fn feasible_domain(self) -> bool {
        !matches!(
            self,
            RuleProperty::Feasible
                | RuleProperty::Substitutable
                | RuleProperty::Lad
                | RuleProperty::Irc
                | RuleProperty::PathIndependent
                | RuleProperty::IsCompletionOf
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropertyWitness {
    /// The violating set(s), smallest first.
    pub sets: Vec<Matching>,
    pub contract: Option<Contract>,
    pub note: String,
}

pub type PropertyVerdict = Verdict<PropertyWitness>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckConfig {
    /// Largest contract universe for all-subset properties.
    pub max_contracts: usize,
    /// Largest number of feasible-for-students sets.
    pub max_feasible_sets: u128,
    /// Largest number of candidate matchings for profile-level checks.
    pub max_matchings: u128,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { max_contracts: 16, max_feasible_sets: 1_000_000, max_matchings: 10_000_000 }
    }
}

fn domain_size(universe: &[Contract], feasible_only: bool, cfg: &CheckConfig) -> Result<u128, RuleError> {
    if feasible_only {
        let mut size: u128 = 1;
        let mut i = 0;
        while i < universe.len() {
            let s = universe[i].student;
            let mut n = 0u128;
            while i < universe.len() && universe[i].student == s {
                n += 1;
                i += 1;
            }
            size = size.saturating_mul(n + 1);
        }
        if size > cfg.max_feasible_sets || universe.len() > 64 {
            return Err(RuleError::UniverseTooLarge { size });
        }
        Ok(size)
    } else {
        let size = 1u128.checked_shl(universe.len() as u32).unwrap_or(u128::MAX);
        if universe.len() > cfg.max_contracts || universe.len() > 64 {
            return Err(RuleError::UniverseTooLarge { size });
        }
        Ok(size)
    }
}

/// Visit subsets of a sorted universe in shortlex order (by size, then
/// lexicographically). With `feasible_only`, sets naming a student twice are skipped.
pub fn for_each_subset(
    universe: &[Contract],
    feasible_only: bool,
    mut f: impl FnMut(&[Contract]) -> ControlFlow<()>,
) -> ControlFlow<()> {
    fn walk(
        u: &[Contract],
        k: usize,
        start: usize,
        feasible_only: bool,
        cur: &mut Vec<Contract>,
        f: &mut dyn FnMut(&[Contract]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        if cur.len() == k {
            return f(cur);
        }
        let need = k - cur.len();
        for i in start..u.len() {
            if u.len() - i < need {
                break;
            }
            if feasible_only && cur.last().is_some_and(|l| l.student == u[i].student) {
                continue;
            }
            cur.push(u[i]);
            let r = walk(u, k, i + 1, feasible_only, cur, f);
            cur.pop();
            r?;
        }
        ControlFlow::Continue(())
    }
    let max_k = if feasible_only {
        let mut students: Vec<StudentId> = universe.iter().map(|x| x.student).collect();
        students.dedup();
        students.len()
    } else {
        universe.len()
    };
    let mut cur = Vec::new();
    for k in 0..=max_k {
        walk(universe, k, 0, feasible_only, &mut cur, &mut f)?;
    }
    ControlFlow::Continue(())
}

/// Choice values memoized on bit masks over a fixed universe.
struct MaskChooser<'a> {
    rule: &'a Rule,
    universe: &'a [Contract],
    memo: HashMap<u64, u64>,
}

impl<'a> MaskChooser<'a> {
    fn new(rule: &'a Rule, universe: &'a [Contract]) -> Self {
        MaskChooser { rule, universe, memo: HashMap::new() }
    }

    fn set(&self, mask: u64) -> Matching {
        set_of(self.universe, mask)
    }

    fn mask(&self, m: &Matching) -> u64 {
        m.iter()
            .map(|x| 1u64 << self.universe.binary_search(x).expect("chosen contract outside universe"))
            .fold(0, |a, b| a | b)
    }

    fn ch(&mut self, mask: u64) -> Result<u64, RuleError> {
        if let Some(&v) = self.memo.get(&mask) {
            return Ok(v);
        }
        let chosen = self.rule.choose(&self.set(mask))?;
        let v = self.mask(&chosen);
        self.memo.insert(mask, v);
        Ok(v)
    }
}

fn set_of(universe: &[Contract], mask: u64) -> Matching {
    bits(mask).map(|i| universe[i]).collect()
}

fn mask_of(universe: &[Contract], set: &[Contract]) -> u64 {
    set.iter()
        .map(|x| 1u64 << universe.binary_search(x).expect("set outside universe"))
        .fold(0, |a, b| a | b)
}

fn bits(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |i| mask >> i & 1 == 1)
}

fn feasible_mask(universe: &[Contract], mask: u64) -> bool {
    let mut prev = None;
    for i in bits(mask) {
        if prev == Some(universe[i].student) {
            return false;
        }
        prev = Some(universe[i].student);
    }
    true
}

/// Exhaustively check one property of a single district rule.
///
/// The quantifier domain is the property's own (all subsets of the
/// district's contracts, or the feasible-for-students ones), narrowed to the
/// table domain for explicit rules. The first violation in shortlex order is
/// returned.
pub fn check_property(
    rule: &Rule,
    prop: RuleProperty,
    p: &Problem,
    cfg: &CheckConfig,
) -> Result<PropertyVerdict, RuleError> {
    match prop {
        RuleProperty::AccommodatesUnmatched => return Err(RuleError::ProfileLevel),
        RuleProperty::IsCompletionOf => {
            let completion = rule.completion(p)?;
            return check_completion(&completion, rule, p, cfg);
        }
        RuleProperty::PathIndependent => {
            let v = check_property(rule, RuleProperty::Substitutable, p, cfg)?;
            if !v.holds() {
                return Ok(v);
            }
            return check_property(rule, RuleProperty::Irc, p, cfg);
        }
        _ => {}
    }
    let universe = p.district_contracts(rule.district());
    let feasible_only = prop.feasible_domain()
        || rule.table_domain() == Some(TableDomain::FeasibleForStudents);
    domain_size(&universe, feasible_only, cfg)?;
    let mut ch = MaskChooser::new(rule, &universe);
    let d = rule.district();
    let k_d = rule.k_d();
    let u = &universe;

    let mut result: Result<Option<PropertyWitness>, RuleError> = Ok(None);
    let _ = for_each_subset(u, feasible_only, |set| {
        let x = mask_of(u, set);
        let outcome = (|| -> Result<Option<PropertyWitness>, RuleError> {
            let c = ch.ch(x)?;
            let fail = |sets: Vec<u64>, contract: Option<Contract>, note: String| {
                Some(PropertyWitness {
                    sets: sets.into_iter().map(|m| set_of(u, m)).collect(),
                    contract,
                    note,
                })
            };
            let count_school = |m: u64, sc: SchoolId| bits(m).filter(|&i| u[i].school == sc).count() as u32;
            let count_cell = |m: u64, sc: SchoolId, t: TypeId| {
                bits(m).filter(|&i| u[i].school == sc && p.student_type(u[i].student) == t).count() as u32
            };
            let count_type = |m: u64, t: TypeId| {
                bits(m).filter(|&i| p.student_type(u[i].student) == t).count() as u32
            };
            match prop {
                RuleProperty::Feasible => {
                    if c & !x != 0 {
                        return Ok(fail(vec![x], None, "chose a contract outside the offered set".into()));
                    }
                    if !feasible_mask(u, c) {
                        return Ok(fail(vec![x], None, "chosen set names a student twice".into()));
                    }
                    for &sc in p.schools_of(d) {
                        if count_school(c, sc) > p.capacity(sc) {
                            return Ok(fail(vec![x], None, format!("{} over capacity", p.school_name(sc))));
                        }
                    }
                }
                RuleProperty::Acceptant | RuleProperty::WeaklyAcceptant | RuleProperty::DWeaklyAcceptant => {
                    for i in bits(x & !c) {
                        let y = u[i];
                        let t = p.student_type(y.student);
                        let mut ok = count_school(c, y.school) >= p.capacity(y.school)
                            || c.count_ones() as usize >= k_d;
                        if prop == RuleProperty::WeaklyAcceptant {
                            ok |= rule.school_ceiling(y.school, t).is_some_and(|q| count_cell(c, y.school, t) >= q);
                        }
                        if prop == RuleProperty::DWeaklyAcceptant {
                            ok |= rule.district_ceiling(t).is_some_and(|q| count_type(c, t) >= q);
                        }
                        if !ok {
                            return Ok(fail(vec![x], Some(y), "rejected while no bound binds".into()));
                        }
                    }
                }
                RuleProperty::Rationed => {
                    if c.count_ones() as usize > k_d {
                        return Ok(fail(
                            vec![x],
                            None,
                            format!("chose {} contracts, more than k_d = {k_d}", c.count_ones()),
                        ));
                    }
                }
                RuleProperty::RespectsInitialMatching => {
                    for i in bits(x & !c) {
                        if p.initial_school(u[i].student) == u[i].school {
                            return Ok(fail(vec![x], Some(u[i]), "initial contract rejected".into()));
                        }
                    }
                }
                RuleProperty::FavorsOwnStudents => {
                    let own = bits(x).filter(|&i| p.home_district(u[i].student) == d).fold(0, |a, i| a | 1 << i);
                    let c_own = ch.ch(own)?;
                    if c_own & !c != 0 {
                        let lost = bits(c_own & !c).next().map(|i| u[i]);
                        return Ok(fail(vec![x, own], lost, "own student chosen alone but not with outsiders".into()));
                    }
                }
                RuleProperty::Substitutable | RuleProperty::WeaklySubstitutable => {
                    for i in bits(x) {
                        let sub = x & !(1 << i);
                        let cs = ch.ch(sub)?;
                        let lost = c & sub & !cs;
                        if lost != 0 {
                            let j = bits(lost).next().unwrap();
                            return Ok(fail(vec![sub, x], Some(u[j]), "chosen from superset but not from subset".into()));
                        }
                    }
                }
                RuleProperty::Lad => {
                    for i in bits(x) {
                        let sub = x & !(1 << i);
                        if ch.ch(sub)?.count_ones() > c.count_ones() {
                            return Ok(fail(vec![sub, x], None, "subset yields more chosen contracts".into()));
                        }
                    }
                }
                RuleProperty::Irc => {
                    for i in bits(x & !c) {
                        let sub = x & !(1 << i);
                        if ch.ch(sub)? != c {
                            return Ok(fail(vec![x, sub], Some(u[i]), "removing a rejected contract changed the choice".into()));
                        }
                    }
                }
                RuleProperty::SchoolTypeCeilings => {
                    for &sc in p.schools_of(d) {
                        for t in p.type_ids() {
                            if let Some(q) = rule.school_ceiling(sc, t) {
                                if count_cell(c, sc, t) > q {
                                    return Ok(fail(vec![x], None, format!("{}:{} above ceiling", p.school_name(sc), p.type_name(t))));
                                }
                            }
                        }
                    }
                }
                RuleProperty::DistrictTypeCeilings => {
                    for t in p.type_ids() {
                        if let Some(q) = rule.district_ceiling(t) {
                            if count_type(c, t) > q {
                                return Ok(fail(vec![x], None, format!("type {} above district ceiling", p.type_name(t))));
                            }
                        }
                    }
                }
                RuleProperty::AccommodatesUnmatched | RuleProperty::IsCompletionOf | RuleProperty::PathIndependent => {
                    unreachable!()
                }
            }
            Ok(None)
        })();
        match outcome {
            Ok(None) => ControlFlow::Continue(()),
            other => {
                result = other;
                ControlFlow::Break(())
            }
        }
    });
    Ok(match result? {
        None => Verdict::Holds,
        Some(w) => Verdict::Fails(w),
    })
}

/// Check that `candidate` agrees with `base` wherever its own choice is feasible for students.
pub fn check_completion(
    candidate: &Rule,
    base: &Rule,
    p: &Problem,
    cfg: &CheckConfig,
) -> Result<PropertyVerdict, RuleError> {
    let universe = p.district_contracts(base.district());
    domain_size(&universe, false, cfg)?;
    let mut a = MaskChooser::new(candidate, &universe);
    let mut b = MaskChooser::new(base, &universe);
    let mut result = Ok(None);
    let _ = for_each_subset(&universe, false, |set| {
        let x = mask_of(&universe, set);
        let r = a.ch(x).and_then(|ca| Ok((ca, b.ch(x)?)));
        match r {
            Err(e) => {
                result = Err(e);
                ControlFlow::Break(())
            }
            Ok((ca, cb)) if ca != cb && feasible_mask(&universe, ca) => {
                result = Ok(Some(PropertyWitness {
                    sets: vec![a.set(x)],
                    contract: None,
                    note: "completion differs on a set where it is feasible for students".into(),
                }));
                ControlFlow::Break(())
            }
            _ => ControlFlow::Continue(()),
        }
    });
    Ok(match result? {
        None => Verdict::Holds,
        Some(w) => Verdict::Fails(w),
    })
}

/// Profile-level check: an unmatched student at any feasible matching can
/// always find some school whose district would take her.
pub fn check_accommodates_unmatched(
    profile: &RuleProfile,
    p: &Problem,
    cfg: &CheckConfig,
) -> Result<PropertyVerdict, RuleError> {
    let all = FeasibleMatchings::new(p, cfg.max_matchings)
        .map_err(|size| RuleError::UniverseTooLarge { size })?;
    for x in all {
        for s in p.student_ids() {
            if x.school_of(s).is_some() {
                continue;
            }
            let mut accommodated = false;
            for c in p.school_ids() {
                let y = p.contract(s, c);
                if profile.choose(y.district, &x.with(y))?.contains(&y) {
                    accommodated = true;
                    break;
                }
            }
            if !accommodated {
                return Ok(Verdict::Fails(PropertyWitness {
                    sets: vec![x],
                    contract: None,
                    note: format!("{} cannot be accommodated", p.student_name(s)),
                }));
            }
        }
    }
    Ok(Verdict::Holds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn m(p: &Problem, pairs: &[(&str, &str)]) -> Matching {
        Matching::from_names(p, pairs)
    }

    #[test]
    fn first_school_prefers_outsider() {
        let p = fixtures::simple_market();
        let rules = RuleProfile::new(fixtures::simple_rules(&p), &p).unwrap();
        let d1 = p.district("d1").unwrap();
        let out = rules.choose(d1, &m(&p, &[("s1", "c1"), ("s3", "c1")])).unwrap();
        assert_eq!(out, m(&p, &[("s3", "c1")]));
        assert!(rules.choose(d1, &Matching::new()).unwrap().is_empty());
    }

    #[test]
    fn sequential_removes_taken_students_but_completion_does_not() {
        let p = fixtures::simple_market();
        let rules = RuleProfile::new(fixtures::simple_rules(&p), &p).unwrap();
        let d1 = p.district("d1").unwrap();
        let x = m(&p, &[("s3", "c1"), ("s3", "c2"), ("s4", "c2")]);
        assert_eq!(rules.choose(d1, &x).unwrap(), m(&p, &[("s3", "c1"), ("s4", "c2")]));
        let comp = rules.rule(d1).completion(&p).unwrap();
        assert_eq!(comp.choose(&x).unwrap(), x);
    }

    #[test]
    fn rationed_completion_can_double_book() {
        let p = fixtures::simple_market();
        let specs = fixtures::rationed_rules(&p);
        let rules = RuleProfile::new(specs, &p).unwrap();
        let d1 = p.district("d1").unwrap();
        let comp = rules.rule(d1).completion(&p).unwrap();
        let x = m(&p, &[("s1", "c1"), ("s1", "c2")]);
        assert_eq!(comp.choose(&x).unwrap(), x);
        assert_eq!(rules.choose(d1, &x).unwrap(), m(&p, &[("s1", "c1")]));
    }

    #[test]
    fn reserve_rule_worked_choice() {
        let p = fixtures::reserves_market();
        let rules = RuleProfile::new(fixtures::reserves_rules(&p), &p).unwrap();
        let d1 = p.district("d1").unwrap();
        let x = m(&p, &[("s1", "c1"), ("s2", "c1"), ("s3", "c1"), ("s4", "c1"), ("s5", "c2"), ("s6", "c2")]);
        let want = m(&p, &[("s1", "c1"), ("s2", "c1"), ("s3", "c1"), ("s5", "c2")]);
        assert_eq!(rules.choose(d1, &x).unwrap(), want);
    }

    #[test]
    fn unknown_contract_is_an_error() {
        let p = fixtures::simple_market();
        let rules = RuleProfile::new(fixtures::simple_rules(&p), &p).unwrap();
        let bogus = Contract { student: StudentId(9), school: SchoolId(0), district: DistrictId(0) };
        let x: Matching = [bogus].into_iter().collect();
        assert!(matches!(rules.choose(DistrictId(0), &x), Err(RuleError::UnknownContract(_))));
    }

    #[test]
    fn initial_matching_witness_is_minimal() {
        let p = fixtures::simple_market();
        let rules = RuleProfile::new(fixtures::simple_rules(&p), &p).unwrap();
        let d1 = p.district("d1").unwrap();
        let v = check_property(rules.rule(d1), RuleProperty::RespectsInitialMatching, &p, &CheckConfig::default()).unwrap();
        let w = v.witness().expect("must fail");
        assert_eq!(w.sets[0], m(&p, &[("s1", "c1"), ("s3", "c1")]));
        assert_eq!(w.contract, Some(p.contract(StudentId(0), SchoolId(0))));
    }

    #[test]
    fn sequential_rule_is_not_rationed() {
        let p = fixtures::simple_market();
        let rules = RuleProfile::new(fixtures::simple_rules(&p), &p).unwrap();
        let d1 = p.district("d1").unwrap();
        let rule = rules.rule(d1);
        let v = check_property(rule, RuleProperty::Rationed, &p, &CheckConfig::default()).unwrap();
        let w = v.witness().expect("must fail");
        assert!(rule.choose(&w.sets[0]).unwrap().len() > 2);
        let narrated = m(&p, &[("s1", "c2"), ("s3", "c1"), ("s4", "c2")]);
        assert_eq!(rule.choose(&narrated).unwrap(), narrated);
        assert!((w.sets[0].len(), &w.sets[0]) <= (narrated.len(), &narrated));
    }

    #[test]
    fn respecting_variant_holds() {
        let p = fixtures::simple_market();
        let rules = RuleProfile::new(fixtures::respecting_rules(&p), &p).unwrap();
        for r in rules.rules() {
            let v = check_property(r, RuleProperty::RespectsInitialMatching, &p, &CheckConfig::default()).unwrap();
            assert!(v.holds());
        }
    }

    #[test]
    fn completion_of_table_is_refused() {
        let spec = RuleSpec::table(
            DistrictId(0),
            ChoiceTable { domain: TableDomain::AllSubsets, entries: BTreeMap::new() },
        );
        assert_eq!(completion_of(&spec), Err(RuleError::NoCompletionConstruction));
    }

    #[test]
    fn table_must_be_total() {
        let p = fixtures::simple_market();
        let spec = RuleSpec::table(
            DistrictId(1),
            ChoiceTable { domain: TableDomain::AllSubsets, entries: BTreeMap::new() },
        );
        assert!(matches!(Rule::new(spec, &p), Err(RuleError::InvalidSpec { .. })));
    }

    #[test]
    fn shortlex_order_small() {
        let p = fixtures::simple_market();
        let u: Vec<Contract> = p.district_contracts(DistrictId(1));
        let mut seen = Vec::new();
        let _ = for_each_subset(&u, false, |s| {
            seen.push(s.to_vec());
            ControlFlow::Continue(())
        });
        assert_eq!(seen.len(), 16);
        for w in seen.windows(2) {
            assert!(w[0].len() < w[1].len() || (w[0].len() == w[1].len() && w[0] < w[1]));
        }
    }

    #[test]
    fn universe_bound_is_enforced() {
        let p = fixtures::reserves_market();
        let rules = RuleProfile::new(fixtures::reserves_rules(&p), &p).unwrap();
        let cfg = CheckConfig { max_contracts: 4, ..CheckConfig::default() };
        let r = check_property(rules.rule(DistrictId(0)), RuleProperty::Lad, &p, &cfg);
        assert!(matches!(r, Err(RuleError::UniverseTooLarge { .. })));
    }
}
