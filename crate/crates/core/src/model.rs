//! Market data model: problems, contracts, matchings and distributions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

macro_rules! index_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }
    };
}

index_type!(
    /// Position of a student in the problem's student list.
    StudentId
);
index_type!(
    /// Position of a school in the problem's school list.
    SchoolId
);
index_type!(DistrictId);
index_type!(TypeId);

/// Outcome of a yes/no check that carries a counterexample on failure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict<W> {
    Holds,
    Fails(W),
}

impl<W> Verdict<W> {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }

    pub fn witness(&self) -> Option<&W> {
        match self {
            Verdict::Holds => None,
            Verdict::Fails(w) => Some(w),
        }
    }
}

/// A school as written in an instance, with names unresolved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchoolSpec {
    pub name: String,
    pub district: String,
    pub capacity: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StudentSpec {
    pub name: String,
    pub district: String,
    pub ty: String,
    pub preferences: Vec<String>,
}

/// Unvalidated problem description keyed by names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProblemSpec {
    pub districts: Vec<String>,
    pub types: Vec<String>,
    pub schools: Vec<SchoolSpec>,
    pub students: Vec<StudentSpec>,
    /// Student name to school name.
    pub initial: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ValidationIssue {
    #[error("fewer than two districts own a school ({found} found)")]
    MissingDistrict { found: usize },
    #[error("district {district}: {students} students but only {seats} seats")]
    CapacityShortfall { district: String, students: usize, seats: u64 },
    #[error("initial matching infeasible: {detail}")]
    InfeasibleInitialMatching { detail: String },
    #[error("student {student}: preference list is not a permutation of all schools ({detail})")]
    IncompletePreference { student: String, detail: String },
    #[error("{locus}: unknown {kind} `{name}`")]
    DanglingReference { locus: String, kind: &'static str, name: String },
    #[error("{locus}: duplicate identifier `{name}`")]
    DuplicateName { locus: String, name: String },
    #[error("school {school}: capacity must be at least 1")]
    ZeroCapacity { school: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub issues: Vec<ValidationIssue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", lines.join("; "))
    }
}

impl ValidationError {
    pub fn has(&self, pred: impl Fn(&ValidationIssue) -> bool) -> bool {
        self.issues.iter().any(pred)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("student {0:?} holds more than one contract")]
    DuplicateStudent(StudentId),
    #[error("preference list for student {0:?} is not a permutation of all schools")]
    BadPreference(StudentId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct School {
    name: String,
    district: DistrictId,
    capacity: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Student {
    name: String,
    district: DistrictId,
    ty: TypeId,
    prefs: Vec<SchoolId>,
    /// rank[c] is the position of school c in prefs.
    rank: Vec<usize>,
    initial: SchoolId,
}

/// A validated, immutable market instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    districts: Vec<String>,
    types: Vec<String>,
    schools: Vec<School>,
    students: Vec<Student>,
    district_schools: Vec<Vec<SchoolId>>,
    k_d: Vec<usize>,
    k_t: Vec<usize>,
}

fn index_names(
    names: &[String],
    locus: &str,
    issues: &mut Vec<ValidationIssue>,
) -> BTreeMap<String, usize> {
    let mut map = BTreeMap::new();
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.clone(), i).is_some() {
            issues.push(ValidationIssue::DuplicateName { locus: locus.into(), name: n.clone() });
        }
    }
    map
}

/// Resolve names and check every structural assumption on a market.
pub fn validate_problem(raw: &ProblemSpec) -> Result<Problem, ValidationError> {
    let mut issues = Vec::new();
    let district_ix = index_names(&raw.districts, "districts", &mut issues);
    let type_ix = index_names(&raw.types, "types", &mut issues);
    let school_names: Vec<String> = raw.schools.iter().map(|s| s.name.clone()).collect();
    let school_ix = index_names(&school_names, "schools", &mut issues);
    let student_names: Vec<String> = raw.students.iter().map(|s| s.name.clone()).collect();
    let student_ix = index_names(&student_names, "students", &mut issues);

    let mut schools = Vec::new();
    for s in &raw.schools {
        let district = match district_ix.get(&s.district) {
            Some(&d) => DistrictId(d),
            None => {
                issues.push(ValidationIssue::DanglingReference {
                    locus: format!("school {}", s.name),
                    kind: "district",
                    name: s.district.clone(),
                });
                DistrictId(usize::MAX)
            }
        };
        if s.capacity == 0 {
            issues.push(ValidationIssue::ZeroCapacity { school: s.name.clone() });
        }
        schools.push(School { name: s.name.clone(), district, capacity: s.capacity });
    }

    let initial: BTreeMap<&str, &str> =
        raw.initial.iter().map(|(s, c)| (s.as_str(), c.as_str())).collect();
    for (s, c) in &raw.initial {
        if !student_ix.contains_key(s) {
            issues.push(ValidationIssue::DanglingReference {
                locus: "initial_matching".into(),
                kind: "student",
                name: s.clone(),
            });
        }
        if !school_ix.contains_key(c) {
            issues.push(ValidationIssue::DanglingReference {
                locus: format!("initial_matching[{s}]"),
                kind: "school",
                name: c.clone(),
            });
        }
    }

    let n_schools = raw.schools.len();
    let mut students = Vec::new();
    for s in &raw.students {
        let district = match district_ix.get(&s.district) {
            Some(&d) => DistrictId(d),
            None => {
                issues.push(ValidationIssue::DanglingReference {
                    locus: format!("student {}", s.name),
                    kind: "district",
                    name: s.district.clone(),
                });
                DistrictId(usize::MAX)
            }
        };
        let ty = match type_ix.get(&s.ty) {
            Some(&t) => TypeId(t),
            None => {
                issues.push(ValidationIssue::DanglingReference {
                    locus: format!("student {}", s.name),
                    kind: "type",
                    name: s.ty.clone(),
                });
                TypeId(usize::MAX)
            }
        };
        let mut prefs = Vec::new();
        let mut rank = vec![usize::MAX; n_schools];
        for name in &s.preferences {
            match school_ix.get(name) {
                Some(&c) => {
                    if rank[c] != usize::MAX {
                        issues.push(ValidationIssue::IncompletePreference {
                            student: s.name.clone(),
                            detail: format!("{name} listed twice"),
                        });
                    } else {
                        rank[c] = prefs.len();
                        prefs.push(SchoolId(c));
                    }
                }
                None => issues.push(ValidationIssue::DanglingReference {
                    locus: format!("preferences of {}", s.name),
                    kind: "school",
                    name: name.clone(),
                }),
            }
        }
        let missing: Vec<&str> = (0..n_schools)
            .filter(|&c| rank[c] == usize::MAX)
            .map(|c| raw.schools[c].name.as_str())
            .collect();
        if !missing.is_empty() {
            issues.push(ValidationIssue::IncompletePreference {
                student: s.name.clone(),
                detail: format!("missing {}", missing.join(",")),
            });
        }
        let initial_school = match initial.get(s.name.as_str()) {
            Some(c) => school_ix.get(*c).map(|&c| SchoolId(c)),
            None => {
                issues.push(ValidationIssue::InfeasibleInitialMatching {
                    detail: format!("student {} has no initial school", s.name),
                });
                None
            }
        };
        students.push(Student {
            name: s.name.clone(),
            district,
            ty,
            prefs,
            rank,
            initial: initial_school.unwrap_or(SchoolId(usize::MAX)),
        });
    }

    let n_districts = raw.districts.len();
    let mut district_schools = vec![Vec::new(); n_districts];
    for (c, s) in schools.iter().enumerate() {
        if s.district.0 < n_districts {
            district_schools[s.district.0].push(SchoolId(c));
        }
    }
    let with_schools = district_schools.iter().filter(|v| !v.is_empty()).count();
    if with_schools < 2 {
        issues.push(ValidationIssue::MissingDistrict { found: with_schools });
    }

    let mut k_d = vec![0usize; n_districts];
    let mut k_t = vec![0usize; raw.types.len()];
    for st in &students {
        if st.district.0 < n_districts {
            k_d[st.district.0] += 1;
        }
        if st.ty.0 < k_t.len() {
            k_t[st.ty.0] += 1;
        }
    }
    for d in 0..n_districts {
        let seats: u64 = district_schools[d].iter().map(|c| schools[c.0].capacity as u64).sum();
        if (k_d[d] as u64) > seats {
            issues.push(ValidationIssue::CapacityShortfall {
                district: raw.districts[d].clone(),
                students: k_d[d],
                seats,
            });
        }
    }

    let mut load = vec![0u32; n_schools];
    for st in &students {
        if st.initial.0 < n_schools {
            load[st.initial.0] += 1;
        }
    }
    for (c, &l) in load.iter().enumerate() {
        if l > schools[c].capacity {
            issues.push(ValidationIssue::InfeasibleInitialMatching {
                detail: format!(
                    "school {} holds {l} students, capacity {}",
                    schools[c].name, schools[c].capacity
                ),
            });
        }
    }

    if !issues.is_empty() {
        return Err(ValidationError { issues });
    }
    Ok(Problem {
        districts: raw.districts.clone(),
        types: raw.types.clone(),
        schools,
        students,
        district_schools,
        k_d,
        k_t,
    })
}

impl Problem {
    pub fn n_students(&self) -> usize {
        self.students.len()
    }
    pub fn n_schools(&self) -> usize {
        self.schools.len()
    }
    pub fn n_districts(&self) -> usize {
        self.districts.len()
    }
    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    pub fn student_ids(&self) -> impl Iterator<Item = StudentId> + '_ {
        (0..self.students.len()).map(StudentId)
    }
    pub fn school_ids(&self) -> impl Iterator<Item = SchoolId> + '_ {
        (0..self.schools.len()).map(SchoolId)
    }
    pub fn district_ids(&self) -> impl Iterator<Item = DistrictId> + '_ {
        (0..self.districts.len()).map(DistrictId)
    }
    pub fn type_ids(&self) -> impl Iterator<Item = TypeId> + '_ {
        (0..self.types.len()).map(TypeId)
    }

    pub fn student_name(&self, s: StudentId) -> &str {
        &self.students[s.0].name
    }
    pub fn school_name(&self, c: SchoolId) -> &str {
        &self.schools[c.0].name
    }
    pub fn district_name(&self, d: DistrictId) -> &str {
        &self.districts[d.0]
    }
    pub fn type_name(&self, t: TypeId) -> &str {
        &self.types[t.0]
    }

    pub fn student(&self, name: &str) -> Option<StudentId> {
        self.students.iter().position(|s| s.name == name).map(StudentId)
    }
    pub fn school(&self, name: &str) -> Option<SchoolId> {
        self.schools.iter().position(|s| s.name == name).map(SchoolId)
    }
    pub fn district(&self, name: &str) -> Option<DistrictId> {
        self.districts.iter().position(|d| d == name).map(DistrictId)
    }
    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.types.iter().position(|t| t == name).map(TypeId)
    }

    pub fn home_district(&self, s: StudentId) -> DistrictId {
        self.students[s.0].district
    }
    pub fn student_type(&self, s: StudentId) -> TypeId {
        self.students[s.0].ty
    }
    pub fn preferences(&self, s: StudentId) -> &[SchoolId] {
        &self.students[s.0].prefs
    }
    /// Position of `c` in the student's list, 0 being the favourite.
    pub fn rank(&self, s: StudentId, c: SchoolId) -> usize {
        self.students[s.0].rank[c.0]
    }
    /// Rank of an outcome where `None` (unmatched) is worst.
    pub fn outcome_rank(&self, s: StudentId, c: Option<SchoolId>) -> usize {
        c.map_or(self.schools.len(), |c| self.rank(s, c))
    }
    /// True when `a` is strictly preferred to `b` by student `s`.
    pub fn prefers(&self, s: StudentId, a: Option<SchoolId>, b: Option<SchoolId>) -> bool {
        self.outcome_rank(s, a) < self.outcome_rank(s, b)
    }
    pub fn initial_school(&self, s: StudentId) -> SchoolId {
        self.students[s.0].initial
    }

    pub fn school_district(&self, c: SchoolId) -> DistrictId {
        self.schools[c.0].district
    }
    pub fn capacity(&self, c: SchoolId) -> u32 {
        self.schools[c.0].capacity
    }
    pub fn schools_of(&self, d: DistrictId) -> &[SchoolId] {
        &self.district_schools[d.0]
    }

    /// Number of students whose home district is `d`.
    pub fn k_d(&self, d: DistrictId) -> usize {
        self.k_d[d.0]
    }
    /// Number of students of type `t`.
    pub fn k_t(&self, t: TypeId) -> usize {
        self.k_t[t.0]
    }
    pub fn total_students(&self) -> usize {
        self.students.len()
    }

    pub fn contract(&self, s: StudentId, c: SchoolId) -> Contract {
        Contract { student: s, school: c, district: self.school_district(c) }
    }

    pub fn initial_matching(&self) -> Matching {
        self.student_ids().map(|s| self.contract(s, self.initial_school(s))).collect()
    }

    /// Every contract with a school of district `d`, sorted.
    pub fn district_contracts(&self, d: DistrictId) -> Vec<Contract> {
        let mut v: Vec<Contract> = self
            .student_ids()
            .flat_map(|s| self.schools_of(d).iter().map(move |&c| (s, c)))
            .map(|(s, c)| self.contract(s, c))
            .collect();
        v.sort();
        v
    }

    /// Copy of the problem with one student's preference list replaced.
    pub fn with_preferences(&self, s: StudentId, prefs: &[SchoolId]) -> Result<Problem, ModelError> {
        let n = self.schools.len();
        let mut rank = vec![usize::MAX; n];
        for (i, c) in prefs.iter().enumerate() {
            if c.0 >= n || rank[c.0] != usize::MAX {
                return Err(ModelError::BadPreference(s));
            }
            rank[c.0] = i;
        }
        if prefs.len() != n {
            return Err(ModelError::BadPreference(s));
        }
        let mut p = self.clone();
        p.students[s.0].prefs = prefs.to_vec();
        p.students[s.0].rank = rank;
        Ok(p)
    }

    /// Name-keyed description that validates back to this problem.
    pub fn to_spec(&self) -> ProblemSpec {
        ProblemSpec {
            districts: self.districts.clone(),
            types: self.types.clone(),
            schools: self
                .schools
                .iter()
                .map(|s| SchoolSpec {
                    name: s.name.clone(),
                    district: self.districts[s.district.0].clone(),
                    capacity: s.capacity,
                })
                .collect(),
            students: self
                .students
                .iter()
                .map(|s| StudentSpec {
                    name: s.name.clone(),
                    district: self.districts[s.district.0].clone(),
                    ty: self.types[s.ty.0].clone(),
                    preferences: s.prefs.iter().map(|c| self.schools[c.0].name.clone()).collect(),
                })
                .collect(),
            initial: self
                .students
                .iter()
                .map(|s| (s.name.clone(), self.schools[s.initial.0].name.clone()))
                .collect(),
        }
    }
}

/// A contract between a student and a school of a district.
///
/// Ordering is by student, then school.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Contract {
    pub student: StudentId,
    pub school: SchoolId,
    pub district: DistrictId,
}

/// A set of contracts. Unmatched students are simply absent.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Matching(BTreeSet<Contract>);

impl FromIterator<Contract> for Matching {
    fn from_iter<I: IntoIterator<Item = Contract>>(iter: I) -> Self {
        Matching(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Matching {
    type Item = &'a Contract;
    type IntoIter = std::collections::btree_set::Iter<'a, Contract>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

impl Matching {
    pub fn new() -> Self {
        Self::default()
    }
    pub fn iter(&self) -> impl Iterator<Item = &Contract> + '_ {
        self.0.iter()
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn contains(&self, x: &Contract) -> bool {
        self.0.contains(x)
    }
    pub fn insert(&mut self, x: Contract) -> bool {
        self.0.insert(x)
    }
    pub fn remove(&mut self, x: &Contract) -> bool {
        self.0.remove(x)
    }
    pub fn as_set(&self) -> &BTreeSet<Contract> {
        &self.0
    }

    pub fn with(&self, x: Contract) -> Matching {
        let mut m = self.clone();
        m.insert(x);
        m
    }
    pub fn without(&self, x: &Contract) -> Matching {
        let mut m = self.clone();
        m.remove(x);
        m
    }
    pub fn union(&self, other: &Matching) -> Matching {
        Matching(self.0.union(&other.0).copied().collect())
    }
    pub fn difference(&self, other: &Matching) -> Matching {
        Matching(self.0.difference(&other.0).copied().collect())
    }
    pub fn is_subset(&self, other: &Matching) -> bool {
        self.0.is_subset(&other.0)
    }

    /// The contracts with schools of district `d` (X_d).
    pub fn for_district(&self, d: DistrictId) -> Matching {
        self.0.iter().filter(|x| x.district == d).copied().collect()
    }
    /// The contracts naming student `s` (X_s).
    pub fn for_student(&self, s: StudentId) -> impl Iterator<Item = &Contract> + '_ {
        self.0.range(
            Contract { student: s, school: SchoolId(0), district: DistrictId(0) }..,
        )
        .take_while(move |x| x.student == s)
    }
    /// The school of student `s`, assuming at most one contract.
    pub fn school_of(&self, s: StudentId) -> Option<SchoolId> {
        self.for_student(s).next().map(|x| x.school)
    }
    pub fn count_at(&self, c: SchoolId) -> usize {
        self.0.iter().filter(|x| x.school == c).count()
    }

    pub fn is_feasible_for_students(&self) -> bool {
        let mut prev: Option<StudentId> = None;
        for x in &self.0 {
            if prev == Some(x.student) {
                return false;
            }
            prev = Some(x.student);
        }
        true
    }

    pub fn display<'a>(&'a self, p: &'a Problem) -> MatchingDisplay<'a> {
        MatchingDisplay { m: self, p }
    }

    /// Build from (student, school) name pairs. Panics on unknown names.
    pub fn from_names(p: &Problem, pairs: &[(&str, &str)]) -> Matching {
        pairs
            .iter()
            .map(|(s, c)| {
                let s = p.student(s).unwrap_or_else(|| panic!("unknown student {s}"));
                let c = p.school(c).unwrap_or_else(|| panic!("unknown school {c}"));
                p.contract(s, c)
            })
            .collect()
    }
}

pub struct MatchingDisplay<'a> {
    m: &'a Matching,
    p: &'a Problem,
}

impl fmt::Display for MatchingDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, x) in self.m.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "({},{})", self.p.student_name(x.student), self.p.school_name(x.school))?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasibilityReport {
    pub for_students: bool,
    pub duplicate_students: Vec<StudentId>,
    pub within_capacity: bool,
    pub over_capacity: Vec<SchoolId>,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.for_students && self.within_capacity
    }
}

pub fn is_feasible(x: &Matching, p: &Problem) -> FeasibilityReport {
    let mut per_student = vec![0u32; p.n_students()];
    let mut per_school = vec![0u32; p.n_schools()];
    for c in x {
        per_student[c.student.0] += 1;
        per_school[c.school.0] += 1;
    }
    let duplicate_students: Vec<StudentId> =
        (0..p.n_students()).filter(|&s| per_student[s] > 1).map(StudentId).collect();
    let over_capacity: Vec<SchoolId> = p
        .school_ids()
        .filter(|&c| per_school[c.0] > p.capacity(c))
        .collect();
    FeasibilityReport {
        for_students: duplicate_students.is_empty(),
        duplicate_students,
        within_capacity: over_capacity.is_empty(),
        over_capacity,
    }
}

/// True iff every student weakly prefers X to Y and someone strictly.
pub fn pareto_dominates(x: &Matching, y: &Matching, p: &Problem) -> bool {
    let mut strict = false;
    for s in p.student_ids() {
        let a = p.outcome_rank(s, x.school_of(s));
        let b = p.outcome_rank(s, y.school_of(s));
        if a > b {
            return false;
        }
        strict |= a < b;
    }
    strict
}

/// School-by-type head counts of a matching.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Distribution {
    n_types: usize,
    counts: Vec<u32>,
}

impl Distribution {
    pub fn zeros(n_schools: usize, n_types: usize) -> Self {
        Distribution { n_types, counts: vec![0; n_schools * n_types] }
    }

    /// Row-major (school, type) counts.
    pub fn from_counts(n_types: usize, counts: Vec<u32>) -> Self {
        assert!(n_types > 0 && counts.len().is_multiple_of(n_types), "counts not a school x type matrix");
        Distribution { n_types, counts }
    }

    pub fn n_schools(&self) -> usize {
        self.counts.len() / self.n_types
    }
    pub fn n_types(&self) -> usize {
        self.n_types
    }
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }
    pub fn get(&self, c: SchoolId, t: TypeId) -> u32 {
        self.counts[c.0 * self.n_types + t.0]
    }
    pub fn set(&mut self, c: SchoolId, t: TypeId, v: u32) {
        self.counts[c.0 * self.n_types + t.0] = v;
    }
    pub fn cells(&self) -> impl Iterator<Item = (SchoolId, TypeId)> + '_ {
        let nt = self.n_types;
        (0..self.counts.len()).map(move |i| (SchoolId(i / nt), TypeId(i % nt)))
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
    pub fn school_total(&self, c: SchoolId) -> u32 {
        self.counts[c.0 * self.n_types..(c.0 + 1) * self.n_types].iter().sum()
    }
    /// ξ_d^t, summed over the district's schools.
    pub fn district_type(&self, p: &Problem, d: DistrictId, t: TypeId) -> u32 {
        p.schools_of(d).iter().map(|&c| self.get(c, t)).sum()
    }
    pub fn district_total(&self, p: &Problem, d: DistrictId) -> u32 {
        p.schools_of(d).iter().map(|&c| self.school_total(c)).sum()
    }
    pub fn type_total(&self, t: TypeId) -> u32 {
        (0..self.n_schools()).map(|c| self.get(SchoolId(c), t)).sum()
    }

    /// ξ + χ_{add} − χ_{sub}, or `None` if a coordinate would go negative.
    pub fn exchange(&self, sub: (SchoolId, TypeId), add: (SchoolId, TypeId)) -> Option<Distribution> {
        let mut out = self.clone();
        let i = sub.0 .0 * self.n_types + sub.1 .0;
        if out.counts[i] == 0 {
            return None;
        }
        out.counts[i] -= 1;
        out.counts[add.0 .0 * self.n_types + add.1 .0] += 1;
        Some(out)
    }

    pub fn add(&self, other: &Distribution) -> Distribution {
        assert_eq!(self.counts.len(), other.counts.len());
        Distribution {
            n_types: self.n_types,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        }
    }

    /// CSV with one row per school and one column per type.
    pub fn to_csv(&self, p: &Problem) -> String {
        let mut out = String::from("school");
        for t in p.type_ids() {
            out.push(',');
            out.push_str(p.type_name(t));
        }
        out.push('\n');
        for c in p.school_ids() {
            out.push_str(p.school_name(c));
            for t in p.type_ids() {
                out.push_str(&format!(",{}", self.get(c, t)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn distribution_of(x: &Matching, p: &Problem) -> Result<Distribution, ModelError> {
    let mut xi = Distribution::zeros(p.n_schools(), p.n_types());
    let mut prev = None;
    for c in x {
        if prev == Some(c.student) {
            return Err(ModelError::DuplicateStudent(c.student));
        }
        prev = Some(c.student);
        let t = p.student_type(c.student);
        let v = xi.get(c.school, t);
        xi.set(c.school, t, v + 1);
    }
    Ok(xi)
}

/// Streams every feasible matching (each student unmatched or at one school,
/// no school over capacity) in lexicographic order of the per-student
/// choice vector, where "unmatched" precedes the schools in index order.
pub struct FeasibleMatchings<'a> {
    p: &'a Problem,
    /// 0 is unmatched, i + 1 is school i.
    choice: Vec<usize>,
    load: Vec<u32>,
    started: bool,
    done: bool,
}

impl<'a> FeasibleMatchings<'a> {
    /// Fails with the size of the search box when it exceeds `budget`.
    pub fn new(p: &'a Problem, budget: u128) -> Result<Self, u128> {
        let per = p.n_schools() as u128 + 1;
        let mut size: u128 = 1;
        for _ in 0..p.n_students() {
            size = size.saturating_mul(per);
        }
        if size > budget {
            return Err(size);
        }
        Ok(FeasibleMatchings {
            p,
            choice: vec![0; p.n_students()],
            load: vec![0; p.n_schools()],
            started: false,
            done: false,
        })
    }

    fn current(&self) -> Matching {
        self.choice
            .iter()
            .enumerate()
            .filter(|(_, &o)| o > 0)
            .map(|(s, &o)| self.p.contract(StudentId(s), SchoolId(o - 1)))
            .collect()
    }
}

impl Iterator for FeasibleMatchings<'_> {
    type Item = Matching;

    fn next(&mut self) -> Option<Matching> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.current());
        }
        let n_c = self.p.n_schools();
        let mut k = self.choice.len();
        while k > 0 {
            k -= 1;
            let cur = self.choice[k];
            if cur > 0 {
                self.load[cur - 1] -= 1;
            }
            let next = (cur + 1..=n_c).find(|&o| self.load[o - 1] < self.p.capacity(SchoolId(o - 1)));
            match next {
                Some(o) => {
                    self.choice[k] = o;
                    self.load[o - 1] += 1;
                    return Some(self.current());
                }
                None => self.choice[k] = 0,
            }
        }
        self.done = true;
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn simple_market_validates_with_cached_counts() {
        let p = fixtures::simple_market();
        assert_eq!(p.n_students(), 4);
        assert_eq!(p.n_schools(), 3);
        assert_eq!(p.k_d(DistrictId(0)), 2);
        assert_eq!(p.k_d(DistrictId(1)), 2);
        assert_eq!(p.k_t(TypeId(0)), 4);
    }

    #[test]
    fn one_district_is_rejected() {
        let mut spec = fixtures::simple_market().to_spec();
        for s in &mut spec.schools {
            s.district = "d1".into();
        }
        let err = validate_problem(&spec).unwrap_err();
        assert!(err.has(|i| matches!(i, ValidationIssue::MissingDistrict { .. })));
    }

    #[test]
    fn capacity_shortfall_names_the_district() {
        let mut spec = fixtures::simple_market().to_spec();
        spec.schools[0].capacity = 0;
        spec.schools[1].capacity = 0;
        let err = validate_problem(&spec).unwrap_err();
        assert!(err.has(|i| matches!(i,
            ValidationIssue::CapacityShortfall { district, students: 2, seats: 0 } if district == "d1")));
    }

    #[test]
    fn dangling_and_incomplete_preferences_are_reported() {
        let mut spec = fixtures::simple_market().to_spec();
        spec.students[0].preferences = vec!["c1".into(), "c9".into()];
        let err = validate_problem(&spec).unwrap_err();
        assert!(err.has(|i| matches!(i, ValidationIssue::DanglingReference { .. })));
        assert!(err.has(|i| matches!(i, ValidationIssue::IncompletePreference { .. })));
    }

    #[test]
    fn overfull_initial_matching_is_rejected() {
        let mut spec = fixtures::simple_market().to_spec();
        spec.initial[1].1 = "c1".into();
        let err = validate_problem(&spec).unwrap_err();
        assert!(err.has(|i| matches!(i, ValidationIssue::InfeasibleInitialMatching { .. })));
    }

    #[test]
    fn distribution_of_golden_outcome() {
        let p = fixtures::simple_market();
        let x = Matching::from_names(&p, &[("s1", "c2"), ("s2", "c3"), ("s3", "c1"), ("s4", "c2")]);
        let xi = distribution_of(&x, &p).unwrap();
        assert_eq!(xi.counts(), &[1, 2, 1]);
        assert_eq!(distribution_of(&Matching::new(), &p).unwrap().total(), 0);
    }

    #[test]
    fn duplicate_student_is_an_error() {
        let p = fixtures::simple_market();
        let x = Matching::from_names(&p, &[("s1", "c1"), ("s1", "c2")]);
        assert_eq!(distribution_of(&x, &p), Err(ModelError::DuplicateStudent(StudentId(0))));
        let r = is_feasible(&x, &p);
        assert!(!r.for_students);
        assert_eq!(r.duplicate_students, vec![StudentId(0)]);
    }

    #[test]
    fn capacity_violation_names_the_school() {
        let p = fixtures::simple_market();
        assert!(is_feasible(&p.initial_matching(), &p).feasible());
        let x = Matching::from_names(&p, &[("s1", "c1"), ("s2", "c1"), ("s3", "c1")]);
        let r = is_feasible(&x, &p);
        assert!(r.for_students);
        assert!(!r.within_capacity);
        assert_eq!(r.over_capacity, vec![SchoolId(0)]);
    }

    #[test]
    fn respecting_outcome_dominates_initial() {
        let p = fixtures::simple_market();
        let x = Matching::from_names(&p, &[("s1", "c1"), ("s2", "c3"), ("s3", "c2"), ("s4", "c2")]);
        let init = p.initial_matching();
        assert!(pareto_dominates(&x, &init, &p));
        assert!(!pareto_dominates(&init, &x, &p));
        assert!(!pareto_dominates(&x, &x, &p));
    }

    fn count_feasible(p: &Problem, s: usize, load: &mut Vec<u32>) -> u64 {
        if s == p.n_students() {
            return 1;
        }
        let mut n = count_feasible(p, s + 1, load);
        for c in 0..p.n_schools() {
            if load[c] < p.capacity(SchoolId(c)) {
                load[c] += 1;
                n += count_feasible(p, s + 1, load);
                load[c] -= 1;
            }
        }
        n
    }

    #[test]
    fn feasible_enumeration_matches_recursive_count() {
        for p in [fixtures::simple_market(), fixtures::ttc_market()] {
            let all: Vec<Matching> = FeasibleMatchings::new(&p, 10_000_000).unwrap().collect();
            let mut load = vec![0; p.n_schools()];
            assert_eq!(all.len() as u64, count_feasible(&p, 0, &mut load));
            assert!(all.iter().all(|x| is_feasible(x, &p).feasible()));
            let distinct: BTreeSet<&Matching> = all.iter().collect();
            assert_eq!(distinct.len(), all.len());
        }
    }

    #[test]
    fn one_student_two_schools_gives_three_matchings() {
        let spec = ProblemSpec {
            districts: vec!["a".into(), "b".into()],
            types: vec!["t".into()],
            schools: vec![
                SchoolSpec { name: "c1".into(), district: "a".into(), capacity: 1 },
                SchoolSpec { name: "c2".into(), district: "b".into(), capacity: 1 },
            ],
            students: vec![StudentSpec {
                name: "s1".into(),
                district: "a".into(),
                ty: "t".into(),
                preferences: vec!["c1".into(), "c2".into()],
            }],
            initial: vec![("s1".into(), "c1".into())],
        };
        let p = validate_problem(&spec).unwrap();
        assert_eq!(FeasibleMatchings::new(&p, 100).unwrap().count(), 3);
        assert_eq!(FeasibleMatchings::new(&p, 2).err(), Some(3));
    }

    #[test]
    fn for_student_projection() {
        let p = fixtures::simple_market();
        let x = Matching::from_names(&p, &[("s1", "c1"), ("s2", "c1"), ("s2", "c3")]);
        assert_eq!(x.for_student(StudentId(1)).count(), 2);
        assert_eq!(x.school_of(StudentId(3)), None);
        assert_eq!(x.for_district(DistrictId(1)).len(), 1);
    }
}
