//! Mixware objects and knowware binding.
//!
//! Three kinds of program objects exist: software objects (data and
//! methods), knowware objects (data only, no control), and
//! knowledge-middleware objects (methods, optionally data). A knowware
//! object can neither act nor be called, so before a program runs every
//! knowware object is bound with at least one middleware object: per bound
//! pair a fresh middleware copy is made, and the knowware object is replaced
//! by a run-time object integrating the data parts and the copies' method
//! parts, with colliding member names prefixed by their source id.
//!
//! Methods are simulated: a declared read-set over data names plus an output
//! expression. That captures what binding must preserve — member-set
//! integration and name resolution — in a directly testable form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Mutex;

use thiserror::Error;

use crate::text::{is_token, tokenize, unescape_span};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BindError {
    #[error("program is invalid: {0}")]
    InvalidProgram(String),
    #[error("knowware object {0} is not bound to any middleware")]
    UnboundKnowware(String),
    #[error("object {0} in plan is unknown or of the wrong kind")]
    BadPlanEntry(String),
    #[error("member {member} of {object} duplicates an identical source; cannot rename")]
    DuplicateMemberUnresolvable { object: String, member: String },
    #[error("object {object} inherits {member} from more than one parent")]
    AmbiguousInheritance { object: String, member: String },
    #[error("object {object} names missing parent {parent}")]
    UnboundParent { object: String, parent: String },
    #[error("no object {0}")]
    NoSuchObject(String),
    #[error("object {0} has no method {1}")]
    NoSuchMethod(String, String),
    #[error("method {method} of {object} reads missing data {name}")]
    MissingData { object: String, method: String, name: String },
    #[error("{0} and {1} are not bound to the same middleware set")]
    PlanMismatch(String, String),
    #[error("{0} and {1} are not annotated as co-used")]
    NotCoUsed(String, String),
    #[error("line {0}: {1}")]
    FileSyntax(usize, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Software,
    Knowware,
    Middleware,
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ObjectKind::Software => "software",
            ObjectKind::Knowware => "knowware",
            ObjectKind::Middleware => "knowledge-middleware",
        };
        write!(f, "{name}")
    }
}

impl ObjectKind {
    pub fn parse(s: &str) -> Option<ObjectKind> {
        match s {
            "software" => Some(ObjectKind::Software),
            "knowware" => Some(ObjectKind::Knowware),
            "knowledge-middleware" | "middleware" => Some(ObjectKind::Middleware),
            _ => None,
        }
    }
}

/// One term of a method's output expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    /// A data name from the method's read set.
    Data(String),
    /// A literal string.
    Lit(String),
}

/// A simulated method: declared reads plus an output expression whose value
/// is the concatenation of its term values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Method {
    pub reads: Vec<String>,
    pub expr: Vec<Term>,
}

impl Method {
    /// Expression data terms must come from the declared read set.
    pub fn undeclared_terms(&self) -> Vec<&str> {
        self.expr
            .iter()
            .filter_map(|t| match t {
                Term::Data(name) if !self.reads.iter().any(|r| r == name) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixObject {
    pub id: String,
    pub kind: ObjectKind,
    pub data: BTreeMap<String, String>,
    pub methods: BTreeMap<String, Method>,
    pub parents: Vec<String>,
}

impl MixObject {
    pub fn new(id: &str, kind: ObjectKind) -> MixObject {
        MixObject {
            id: id.to_string(),
            kind,
            data: BTreeMap::new(),
            methods: BTreeMap::new(),
            parents: Vec::new(),
        }
    }

    pub fn with_data(mut self, name: &str, value: &str) -> MixObject {
        self.data.insert(name.to_string(), value.to_string());
        self
    }

    pub fn with_method(mut self, name: &str, reads: &[&str], expr: Vec<Term>) -> MixObject {
        self.methods.insert(
            name.to_string(),
            Method { reads: reads.iter().map(|r| r.to_string()).collect(), expr },
        );
        self
    }

    pub fn with_parent(mut self, parent: &str) -> MixObject {
        self.parents.push(parent.to_string());
        self
    }
}

/// Record of one knowware merge: snapshots of the merged parts and how
/// colliding data names were renamed. Part snapshots keep each original
/// object's view resolvable after the merge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRecord {
    pub merged_id: String,
    pub parts: Vec<MixObject>,
    /// (part id, original name) → stored name in the merged object.
    pub renames: BTreeMap<(String, String), String>,
}

impl MergeRecord {
    pub fn part_ids(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().map(|p| p.id.as_str())
    }
}

/// A mixware program: objects plus the log of knowware merges applied to it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub objects: Vec<MixObject>,
    pub merges: Vec<MergeRecord>,
}

impl Program {
    pub fn new(objects: Vec<MixObject>) -> Program {
        Program { objects, merges: Vec::new() }
    }

    pub fn object(&self, id: &str) -> Option<&MixObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Follow merge records from an original id to the object that now
    /// holds its data, accumulating renames for `name` along the way.
    fn resolve_merged(&self, id: &str, name: &str) -> (String, String) {
        let mut id = id.to_string();
        let mut name = name.to_string();
        loop {
            let Some(record) = self.merges.iter().find(|m| m.part_ids().any(|p| p == id)) else {
                return (id, name);
            };
            if let Some(renamed) = record.renames.get(&(id.clone(), name.clone())) {
                name = renamed.clone();
            }
            id = record.merged_id.clone();
        }
    }

    /// Look an object up by id, reaching into merge snapshots for objects
    /// that were merged away.
    fn part_object(&self, id: &str) -> Option<&MixObject> {
        self.object(id).or_else(|| {
            self.merges
                .iter()
                .flat_map(|m| m.parts.iter())
                .find(|p| p.id == id)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub object: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.object, self.message)
    }
}

/// Check the static structure: kind invariants, id uniqueness, parent
/// references, expression hygiene. Returns all violations, never aborts.
pub fn validate_program(program: &Program) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut ids = BTreeSet::new();
    for o in &program.objects {
        if !ids.insert(o.id.as_str()) {
            violations.push(Violation {
                object: o.id.clone(),
                message: "duplicate object id".to_string(),
            });
        }
    }
    for o in &program.objects {
        match o.kind {
            ObjectKind::Software => {
                if o.data.is_empty() {
                    violations.push(Violation {
                        object: o.id.clone(),
                        message: "software object has an empty data part".to_string(),
                    });
                }
                if o.methods.is_empty() {
                    violations.push(Violation {
                        object: o.id.clone(),
                        message: "software object has an empty method part".to_string(),
                    });
                }
            }
            ObjectKind::Knowware => {
                if !o.methods.is_empty() {
                    violations.push(Violation {
                        object: o.id.clone(),
                        message: "knowware object must have no method part".to_string(),
                    });
                }
            }
            ObjectKind::Middleware => {
                if o.methods.is_empty() {
                    violations.push(Violation {
                        object: o.id.clone(),
                        message: "middleware object has an empty method part".to_string(),
                    });
                }
            }
        }
        for parent in &o.parents {
            if !program.objects.iter().any(|p| &p.id == parent) {
                violations.push(Violation {
                    object: o.id.clone(),
                    message: format!("unknown parent {parent}"),
                });
            }
        }
        for (name, method) in &o.methods {
            for term in method.undeclared_terms() {
                violations.push(Violation {
                    object: o.id.clone(),
                    message: format!("method {name} uses {term} outside its read set"),
                });
            }
        }
    }
    violations
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindMode {
    Static,
    Dynamic,
}

/// Which middleware objects bind to which knowware objects, plus co-use
/// annotations feeding merge optimization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindingPlan {
    pub bindings: BTreeMap<String, Vec<String>>,
    pub mode: BindMode,
    pub co_use: BTreeSet<(String, String)>,
}

impl BindingPlan {
    pub fn new(mode: BindMode) -> BindingPlan {
        BindingPlan { bindings: BTreeMap::new(), mode, co_use: BTreeSet::new() }
    }

    pub fn bind(mut self, ko: &str, kmos: &[&str]) -> BindingPlan {
        self.bindings
            .insert(ko.to_string(), kmos.iter().map(|k| k.to_string()).collect());
        self
    }

    pub fn co_use(mut self, a: &str, b: &str) -> BindingPlan {
        self.co_use.insert(ordered_pair(a, b));
        self
    }

    pub fn co_used(&self, a: &str, b: &str) -> bool {
        self.co_use.contains(&ordered_pair(a, b))
    }
}

fn ordered_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// (object, middleware copy, member) → stored member name.
pub type RenameLog = BTreeMap<(String, String, String), String>;

/// A member of a bound object, tagged with the middleware copy it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BoundMethod {
    source: Option<String>,
    method: Method,
}

/// One runnable object of a bound program.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BoundObject {
    data: BTreeMap<String, String>,
    methods: BTreeMap<String, BoundMethod>,
    parents: Vec<String>,
}

/// The run-time form of a program: software objects unchanged, every
/// knowware object replaced by its integration with middleware copies.
/// Immutable; dispatch is safe from several threads.
pub struct BoundProgram {
    program: Program,
    plan: BindingPlan,
    /// Materialized objects. Static mode fills this at bind time; dynamic
    /// mode fills it per object on first dispatch.
    materialized: Mutex<BTreeMap<String, BoundObject>>,
    rename_log: RenameLog,
    nko_ids: BTreeSet<String>,
}

/// Decide the stored name for each (source, member) pair. Members whose name
/// appears in more than one source get prefixed by their source id; the
/// owner (knowware) side keeps the plain name.
fn integrate_members(
    owner_names: &BTreeSet<String>,
    copies: &[(&str, Vec<String>)],
) -> BTreeMap<(String, String), String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for name in owner_names {
        *counts.entry(name.as_str()).or_insert(0) += 1;
    }
    for (_, names) in copies {
        for name in names {
            *counts.entry(name.as_str()).or_insert(0) += 1;
        }
    }
    let mut out = BTreeMap::new();
    for (source, names) in copies {
        for name in names {
            let stored = if counts[name.as_str()] > 1 {
                format!("{source}.{name}")
            } else {
                name.clone()
            };
            out.insert((source.to_string(), name.clone()), stored);
        }
    }
    out
}

fn build_nko(
    program: &Program,
    ko: &MixObject,
    kmo_ids: &[String],
) -> Result<(BoundObject, RenameLog), BindError> {
    let mut seen = BTreeSet::new();
    for kmo in kmo_ids {
        if !seen.insert(kmo.as_str()) {
            let copy = program.object(kmo).ok_or_else(|| BindError::BadPlanEntry(kmo.clone()))?;
            let member = copy
                .methods
                .keys()
                .next()
                .cloned()
                .unwrap_or_else(|| "method".to_string());
            return Err(BindError::DuplicateMemberUnresolvable { object: kmo.clone(), member });
        }
    }
    let copies: Vec<&MixObject> = kmo_ids
        .iter()
        .map(|id| {
            program
                .object(id)
                .filter(|o| o.kind == ObjectKind::Middleware)
                .ok_or_else(|| BindError::BadPlanEntry(id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let owner_data: BTreeSet<String> = ko.data.keys().cloned().collect();
    let copy_data: Vec<(&str, Vec<String>)> = copies
        .iter()
        .map(|c| (c.id.as_str(), c.data.keys().cloned().collect()))
        .collect();
    let data_names = integrate_members(&owner_data, &copy_data);

    let copy_methods: Vec<(&str, Vec<String>)> = copies
        .iter()
        .map(|c| (c.id.as_str(), c.methods.keys().cloned().collect()))
        .collect();
    let method_names = integrate_members(&BTreeSet::new(), &copy_methods);

    let mut data = ko.data.clone();
    let mut rename_log = BTreeMap::new();
    for copy in &copies {
        for (name, value) in &copy.data {
            let stored = &data_names[&(copy.id.clone(), name.clone())];
            if stored != name {
                rename_log
                    .insert((ko.id.clone(), copy.id.clone(), name.clone()), stored.clone());
            }
            data.insert(stored.clone(), value.clone());
        }
    }
    let mut methods = BTreeMap::new();
    for copy in &copies {
        for (name, method) in &copy.methods {
            let stored = &method_names[&(copy.id.clone(), name.clone())];
            if stored != name {
                rename_log
                    .insert((ko.id.clone(), copy.id.clone(), name.clone()), stored.clone());
            }
            methods.insert(
                stored.clone(),
                BoundMethod { source: Some(copy.id.clone()), method: method.clone() },
            );
        }
    }
    // inheritance: the integrated object inherits exactly what its parts did
    let mut parents = ko.parents.clone();
    for copy in &copies {
        for parent in &copy.parents {
            if !parents.contains(parent) {
                parents.push(parent.clone());
            }
        }
    }
    Ok((BoundObject { data, methods, parents }, rename_log))
}

/// Bind a program against a plan.
///
/// Static mode materializes every run-time object now; dynamic mode records
/// the plan and materializes each object on its first dispatch. Both modes
/// give observationally identical dispatch results.
pub fn bind(program: &Program, plan: &BindingPlan) -> Result<BoundProgram, BindError> {
    let violations = validate_program(program);
    if let Some(v) = violations.first() {
        return Err(BindError::InvalidProgram(v.to_string()));
    }
    let mut nko_ids = BTreeSet::new();
    for o in &program.objects {
        if o.kind == ObjectKind::Knowware {
            match plan.bindings.get(&o.id) {
                Some(kmos) if !kmos.is_empty() => {
                    nko_ids.insert(o.id.clone());
                }
                _ => return Err(BindError::UnboundKnowware(o.id.clone())),
            }
        }
    }
    for ko in plan.bindings.keys() {
        let known = program.object(ko).is_some_and(|o| o.kind == ObjectKind::Knowware);
        if !known {
            return Err(BindError::BadPlanEntry(ko.clone()));
        }
    }

    // materialize every NKO once to validate renames, parents and diamonds,
    // even in dynamic mode; dynamic merely delays *storing* them
    let mut materialized = BTreeMap::new();
    let mut rename_log = BTreeMap::new();
    for o in &program.objects {
        let bound = match o.kind {
            ObjectKind::Knowware => {
                let (nko, renames) = build_nko(program, o, &plan.bindings[&o.id])?;
                rename_log.extend(renames);
                nko
            }
            ObjectKind::Software => BoundObject {
                data: o.data.clone(),
                methods: o
                    .methods
                    .iter()
                    .map(|(n, m)| (n.clone(), BoundMethod { source: None, method: m.clone() }))
                    .collect(),
                parents: o.parents.clone(),
            },
            ObjectKind::Middleware => continue, // consumed by its copies
        };
        materialized.insert(o.id.clone(), bound);
    }
    // parent links must survive binding, and no member may be inheritable
    // from two different parents (single-level, diamond-free in v1)
    for (id, bound) in &materialized {
        let mut inherited: BTreeMap<&str, &str> = BTreeMap::new();
        for parent in &bound.parents {
            let parent_obj = materialized
                .get(parent)
                .ok_or_else(|| BindError::UnboundParent { object: id.clone(), parent: parent.clone() })?;
            for name in parent_obj.data.keys() {
                if let Some(other) = inherited.insert(name, parent) {
                    if other != parent {
                        return Err(BindError::AmbiguousInheritance {
                            object: id.clone(),
                            member: name.clone(),
                        });
                    }
                }
            }
        }
    }
    let materialized = match plan.mode {
        BindMode::Static => materialized,
        BindMode::Dynamic => materialized
            .into_iter()
            .filter(|(id, _)| !nko_ids.contains(id)) // knowware integrates lazily
            .collect(),
    };
    Ok(BoundProgram {
        program: program.clone(),
        plan: plan.clone(),
        materialized: Mutex::new(materialized),
        rename_log,
        nko_ids,
    })
}

impl BoundProgram {
    pub fn mode(&self) -> BindMode {
        self.plan.mode
    }

    /// Ids of run-time objects (software objects and integrated knowware).
    pub fn object_ids(&self) -> BTreeSet<String> {
        self.program
            .objects
            .iter()
            .filter(|o| o.kind != ObjectKind::Middleware)
            .map(|o| o.id.clone())
            .collect()
    }

    /// The rename log: (object, middleware copy, member) → stored name.
    pub fn rename_log(&self) -> &RenameLog {
        &self.rename_log
    }

    /// Callable method names of an object, post-integration.
    pub fn methods_of(&self, object: &str) -> Result<Vec<String>, BindError> {
        let (id, _) = self.program.resolve_merged(object, "");
        let bound = self.materialize(&id)?;
        Ok(bound.methods.keys().cloned().collect())
    }

    /// Software objects pass through binding untouched.
    pub fn software_unchanged(&self, object: &str) -> bool {
        let Some(original) = self.program.object(object) else { return false };
        if original.kind != ObjectKind::Software {
            return false;
        }
        let Ok(bound) = self.materialize(object) else { return false };
        bound.data == original.data
            && bound.parents == original.parents
            && bound.methods.len() == original.methods.len()
            && original
                .methods
                .iter()
                .all(|(n, m)| bound.methods.get(n).is_some_and(|b| &b.method == m))
    }

    fn materialize(&self, id: &str) -> Result<BoundObject, BindError> {
        if let Some(obj) = self.materialized.lock().unwrap().get(id) {
            return Ok(obj.clone());
        }
        if !self.nko_ids.contains(id) {
            return Err(BindError::NoSuchObject(id.to_string()));
        }
        let ko = self
            .program
            .object(id)
            .ok_or_else(|| BindError::NoSuchObject(id.to_string()))?;
        let (nko, _) = build_nko(&self.program, ko, &self.plan.bindings[id])?;
        let mut cache = self.materialized.lock().unwrap();
        cache.entry(id.to_string()).or_insert_with(|| nko.clone());
        Ok(nko)
    }

    /// Resolve a data name exactly as the run-time object addressed by
    /// `addressed` would see it, even when that object was merged into
    /// `holder`: the reading middleware copy's own data wins, then the
    /// addressed knowware part's data (following merge renames), then data a
    /// single middleware copy contributed, then one level of inheritance.
    fn resolve_read(
        &self,
        addressed: &str,
        holder: &BoundObject,
        holder_id: &str,
        source: Option<&str>,
        name: &str,
    ) -> Option<String> {
        let stored_of = |src: &str| {
            self.rename_log
                .get(&(holder_id.to_string(), src.to_string(), name.to_string()))
                .cloned()
                .unwrap_or_else(|| name.to_string())
        };
        // a middleware copy reading a name its class declares gets its own
        // copy's value, renamed or not
        if let Some(src) = source {
            if self.program.object(src).is_some_and(|o| o.data.contains_key(name)) {
                return holder.data.get(&stored_of(src)).cloned();
            }
        }
        let part = self.program.part_object(addressed)?;
        // the knowware part's own data, under whatever name the merge left it
        if part.data.contains_key(name) {
            let (_, stored) = self.program.resolve_merged(addressed, name);
            return holder.data.get(&stored).cloned();
        }
        // data owned by exactly one bound middleware copy is visible plainly
        if let Some(kmos) = self.plan.bindings.get(holder_id) {
            let owners: Vec<&String> = kmos
                .iter()
                .filter(|k| self.program.object(k).is_some_and(|o| o.data.contains_key(name)))
                .collect();
            if owners.len() == 1 {
                return holder.data.get(&stored_of(owners[0])).cloned();
            }
        }
        // single-level inheritance: the addressed part's parents plus those
        // of its middleware copies, declared order
        let mut parents: Vec<&String> = part.parents.iter().collect();
        if let Some(kmos) = self.plan.bindings.get(holder_id) {
            for kmo in kmos {
                if let Some(copy) = self.program.object(kmo) {
                    for p in &copy.parents {
                        if !parents.contains(&p) {
                            parents.push(p);
                        }
                    }
                }
            }
        }
        for parent in parents {
            if let Ok(parent_obj) = self.materialize(parent) {
                if let Some(v) = parent_obj.data.get(name) {
                    return Some(v.clone());
                }
            }
        }
        None
    }

    /// Invoke `method` on `object`: resolve its reads against the object's
    /// data (own, merged, inherited) and evaluate the output expression.
    pub fn dispatch(&self, object: &str, method: &str) -> Result<String, BindError> {
        let (holder_id, _) = self.program.resolve_merged(object, "");
        let holder = self.materialize(&holder_id)?;
        let bound_method = holder
            .methods
            .get(method)
            .ok_or_else(|| BindError::NoSuchMethod(object.to_string(), method.to_string()))?
            .clone();
        let mut out = String::new();
        for term in &bound_method.method.expr {
            match term {
                Term::Lit(s) => out.push_str(s),
                Term::Data(name) => {
                    let value = self
                        .resolve_read(
                            object,
                            &holder,
                            &holder_id,
                            bound_method.source.as_deref(),
                            name,
                        )
                        .ok_or_else(|| BindError::MissingData {
                            object: object.to_string(),
                            method: method.to_string(),
                            name: name.clone(),
                        })?;
                    out.push_str(&value);
                }
            }
        }
        Ok(out)
    }
}

/// Merge two knowware objects bound to the same middleware set and
/// annotated as co-used. Colliding data names with differing values are
/// renamed `<part-id>.<name>`; equal values are shared.
pub fn merge_knowware(
    program: &Program,
    ko_a: &str,
    ko_b: &str,
    plan: &BindingPlan,
) -> Result<(Program, BindingPlan), BindError> {
    let a = program
        .object(ko_a)
        .filter(|o| o.kind == ObjectKind::Knowware)
        .ok_or_else(|| BindError::NoSuchObject(ko_a.to_string()))?;
    let b = program
        .object(ko_b)
        .filter(|o| o.kind == ObjectKind::Knowware)
        .ok_or_else(|| BindError::NoSuchObject(ko_b.to_string()))?;
    let set_a: BTreeSet<&String> = plan.bindings.get(ko_a).into_iter().flatten().collect();
    let set_b: BTreeSet<&String> = plan.bindings.get(ko_b).into_iter().flatten().collect();
    if set_a != set_b || set_a.is_empty() {
        return Err(BindError::PlanMismatch(ko_a.to_string(), ko_b.to_string()));
    }
    if !plan.co_used(ko_a, ko_b) {
        return Err(BindError::NotCoUsed(ko_a.to_string(), ko_b.to_string()));
    }
    let merged_id = format!("{ko_a}+{ko_b}");
    let mut merged = MixObject::new(&merged_id, ObjectKind::Knowware);
    let mut renames = BTreeMap::new();
    for (name, value) in &a.data {
        match b.data.get(name) {
            Some(other) if other != value => {
                let a_name = format!("{ko_a}.{name}");
                let b_name = format!("{ko_b}.{name}");
                renames.insert((ko_a.to_string(), name.clone()), a_name.clone());
                renames.insert((ko_b.to_string(), name.clone()), b_name.clone());
                merged.data.insert(a_name, value.clone());
                merged.data.insert(b_name, other.clone());
            }
            _ => {
                merged.data.insert(name.clone(), value.clone());
            }
        }
    }
    for (name, value) in &b.data {
        if !a.data.contains_key(name) {
            merged.data.insert(name.clone(), value.clone());
        }
    }
    for parent in a.parents.iter().chain(b.parents.iter()) {
        if !merged.parents.contains(parent) {
            merged.parents.push(parent.clone());
        }
    }

    let mut objects = Vec::new();
    for o in &program.objects {
        if o.id == ko_a {
            objects.push(merged.clone());
        } else if o.id != ko_b {
            objects.push(o.clone());
        }
    }
    let mut merges = program.merges.clone();
    merges.push(MergeRecord {
        merged_id: merged_id.clone(),
        parts: vec![a.clone(), b.clone()],
        renames,
    });

    let mut bindings = plan.bindings.clone();
    let kmos = bindings.remove(ko_a).unwrap();
    bindings.remove(ko_b);
    bindings.insert(merged_id.clone(), kmos);
    let mut co_use = BTreeSet::new();
    for (x, y) in &plan.co_use {
        let map = |v: &str| {
            if v == ko_a || v == ko_b {
                merged_id.clone()
            } else {
                v.to_string()
            }
        };
        let (x, y) = (map(x), map(y));
        if x != y {
            co_use.insert(if x <= y { (x, y) } else { (y, x) });
        }
    }
    Ok((
        Program { objects, merges },
        BindingPlan { bindings, mode: plan.mode, co_use },
    ))
}

/// Parse the program description file: blocks of
/// `object <id> <kind>` / `data <name>=«value»` /
/// `method <name> reads <a,b> -> <expr>` / `parent <id>` lines.
/// Expression terms are data names or `«literal»`s joined by `+`.
pub fn parse_program_file(text: &str) -> Result<Program, BindError> {
    let mut objects: Vec<MixObject> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| BindError::FileSyntax(lineno, msg.to_string());
        if let Some(rest) = line.strip_prefix("object ") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            let [id, kind] = toks.as_slice() else {
                return Err(err("expected `object <id> <kind>`"));
            };
            let kind = ObjectKind::parse(kind).ok_or_else(|| err("unknown object kind"))?;
            if !is_token(id) {
                return Err(err("object id is not a plain token"));
            }
            objects.push(MixObject::new(id, kind));
            continue;
        }
        let current = objects.last_mut().ok_or_else(|| err("directive before any object"))?;
        if let Some(rest) = line.strip_prefix("data ") {
            let (name, value) = rest.split_once('=').ok_or_else(|| err("expected name=«value»"))?;
            let value = value
                .trim()
                .strip_prefix('«')
                .and_then(|v| v.strip_suffix('»'))
                .map(unescape_span)
                .ok_or_else(|| err("data value must be «quoted»"))?;
            current.data.insert(name.trim().to_string(), value);
        } else if let Some(rest) = line.strip_prefix("method ") {
            let (head, expr) = rest.split_once("->").ok_or_else(|| err("missing `->`"))?;
            let head_toks: Vec<&str> = head.split_whitespace().collect();
            let (name, reads) = match head_toks.as_slice() {
                [name] => (*name, Vec::new()),
                [name, "reads", list] => {
                    (*name, list.split(',').map(|r| r.trim().to_string()).collect())
                }
                _ => return Err(err("expected `method <name> [reads a,b] -> expr`")),
            };
            let mut terms = Vec::new();
            for part in expr.split('+') {
                let part = part.trim();
                let toks = tokenize(part).ok_or_else(|| err("bad expression term"))?;
                if part.starts_with('«') {
                    terms.push(Term::Lit(toks.into_iter().next().unwrap_or_default()));
                } else if toks.len() == 1 && is_token(&toks[0]) {
                    terms.push(Term::Data(toks.into_iter().next().unwrap()));
                } else {
                    return Err(err("expression terms are data names or «literals»"));
                }
            }
            current.methods.insert(name.to_string(), Method { reads, expr: terms });
        } else if let Some(rest) = line.strip_prefix("parent ") {
            current.parents.push(rest.trim().to_string());
        } else {
            return Err(err("unknown directive"));
        }
    }
    Ok(Program::new(objects))
}

/// Parse the plan file: `mode static|dynamic`, `bind <ko> <kmo,kmo>`,
/// `co_use <a> <b>` lines.
pub fn parse_plan_file(text: &str) -> Result<BindingPlan, BindError> {
    let mut plan = BindingPlan::new(BindMode::Static);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| BindError::FileSyntax(lineno, msg.to_string());
        if let Some(rest) = line.strip_prefix("mode ") {
            plan.mode = match rest.trim() {
                "static" => BindMode::Static,
                "dynamic" => BindMode::Dynamic,
                _ => return Err(err("mode is static or dynamic")),
            };
        } else if let Some(rest) = line.strip_prefix("bind ") {
            let (ko, kmos) = rest.split_once(' ').ok_or_else(|| err("expected `bind <ko> <kmos>`"))?;
            plan.bindings.insert(
                ko.to_string(),
                kmos.split(',').map(|k| k.trim().to_string()).collect(),
            );
        } else if let Some(rest) = line.strip_prefix("co_use ") {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            let [a, b] = toks.as_slice() else {
                return Err(err("expected `co_use <a> <b>`"));
            };
            plan.co_use.insert(ordered_pair(a, b));
        } else {
            return Err(err("unknown directive"));
        }
    }
    Ok(plan)
}
