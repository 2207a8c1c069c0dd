//! Knowledge middleware: the software that works on control-free knowledge.
//!
//! Three executable classes live here — view generation (filtering),
//! representation transformation (element ↔ triple) and operating summaries.
//! The remaining middleware classes exist as registry categories on the
//! server. Middleware never mutates its source.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::crystal::{Crystal, MagmaError, SubjectFilter};
use crate::knowware::{verify, KnowwarePackage, PackageError, Verdict};
use crate::pnlu::{KnowledgeElement, Source};
use crate::text::{norm_key, tag_base, tag_matches};

#[derive(Debug, Error)]
pub enum ViewError {
    #[error("view needs at least one criterion")]
    EmptyView,
    #[error("source package failed verification: {0}")]
    VerifyFailed(String),
    #[error(transparent)]
    Package(#[from] PackageError),
    #[error(transparent)]
    Crystal(#[from] MagmaError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("element {0} has no key role")]
    NoKeyRole(String),
    #[error("triples do not share a single subject")]
    MixedSubjects,
    #[error("triples do not share a single pragmatics prefix")]
    MixedPragmatics,
    #[error("relation {0:?} is not of the form <pragmatics>/<role>")]
    MalformedRelation(String),
}

/// A filtering projection over a crystal or package.
///
/// `pragmatics_groups` is a conjunction of any-of tag groups (a single view
/// has at most one group; conjunction views from [`ViewSpec::and`] carry
/// several). Role masking keeps only the listed roles and drops elements
/// whose key role would not survive. Subject predicates apply to the key
/// binding and must all hold.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ViewSpec {
    pub pragmatics_groups: Vec<Vec<String>>,
    pub roles: Option<BTreeSet<String>>,
    pub subjects: Vec<SubjectFilter>,
}

impl ViewSpec {
    pub fn new(
        pragmatics: Vec<String>,
        roles: Option<BTreeSet<String>>,
        subject: Option<SubjectFilter>,
    ) -> Result<ViewSpec, ViewError> {
        let spec = ViewSpec {
            pragmatics_groups: if pragmatics.is_empty() { Vec::new() } else { vec![pragmatics] },
            roles,
            subjects: subject.into_iter().collect(),
        };
        if spec.is_empty() {
            return Err(ViewError::EmptyView);
        }
        Ok(spec)
    }

    pub fn with_pragmatics(tags: &[&str]) -> ViewSpec {
        ViewSpec {
            pragmatics_groups: vec![tags.iter().map(|t| t.to_string()).collect()],
            ..ViewSpec::default()
        }
    }

    fn is_empty(&self) -> bool {
        self.pragmatics_groups.is_empty() && self.roles.is_none() && self.subjects.is_empty()
    }

    /// Conjunction of two views: an element passes `a.and(b)` exactly when
    /// it passes both.
    pub fn and(&self, other: &ViewSpec) -> ViewSpec {
        let roles = match (&self.roles, &other.roles) {
            (Some(a), Some(b)) => Some(a.intersection(b).cloned().collect()),
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(b.clone()),
            (None, None) => None,
        };
        ViewSpec {
            pragmatics_groups: self
                .pragmatics_groups
                .iter()
                .chain(other.pragmatics_groups.iter())
                .cloned()
                .collect(),
            roles,
            subjects: self.subjects.iter().chain(other.subjects.iter()).cloned().collect(),
        }
    }

    /// Tag and subject criteria (role masking is applied separately).
    fn admits(&self, element: &KnowledgeElement) -> bool {
        for group in &self.pragmatics_groups {
            if !group.iter().any(|t| tag_matches(t, &element.pragmatics)) {
                return false;
            }
        }
        if !self.subjects.is_empty() {
            let Some(key) = element.key_binding() else { return false };
            if !self.subjects.iter().all(|f| f.matches(key)) {
                return false;
            }
        }
        true
    }
}

/// Anything a view can read: a crystal directly, or a package that must
/// first pass verification.
#[derive(Debug, Clone, Copy)]
pub enum KnowledgeSource<'a> {
    Crystal(&'a Crystal),
    Package(&'a KnowwarePackage),
}

impl<'a> From<&'a Crystal> for KnowledgeSource<'a> {
    fn from(c: &'a Crystal) -> Self {
        KnowledgeSource::Crystal(c)
    }
}

impl<'a> From<&'a KnowwarePackage> for KnowledgeSource<'a> {
    fn from(p: &'a KnowwarePackage) -> Self {
        KnowledgeSource::Package(p)
    }
}

fn source_crystal(source: KnowledgeSource<'_>) -> Result<Crystal, ViewError> {
    match source {
        KnowledgeSource::Crystal(c) => Ok(c.clone()),
        KnowledgeSource::Package(p) => {
            match verify(p) {
                Verdict::Pass => {}
                Verdict::Fail(reason) => return Err(ViewError::VerifyFailed(reason.to_string())),
            }
            Ok(p.payload_crystal()?)
        }
    }
}

/// Generate a knowledge view: filter elements and mask roles.
///
/// The result is a crystal whose element set is a subset of the source's;
/// its requirement is the source requirement narrowed by the view criteria.
pub fn apply_view<'a>(
    source: impl Into<KnowledgeSource<'a>>,
    view: &ViewSpec,
) -> Result<Crystal, ViewError> {
    if view.is_empty() {
        return Err(ViewError::EmptyView);
    }
    let crystal = source_crystal(source.into())?;
    let mut elements = Vec::new();
    for e in &crystal.elements {
        if !view.admits(e) {
            continue;
        }
        let mut element = e.clone();
        if let Some(keep) = &view.roles {
            match element.key_role() {
                Some(key) if keep.contains(key) => {
                    element.bindings.retain(|(r, _)| keep.contains(r));
                }
                _ => continue, // key role would not survive masking
            }
        }
        elements.push(element);
    }
    let mut requirement = crystal.requirement.clone();
    if let Some(group) = view.pragmatics_groups.last() {
        requirement.pragmatics = group.clone();
    }
    if !view.subjects.is_empty() {
        requirement.subjects = view.subjects.clone();
    }
    Ok(Crystal {
        domain: crystal.domain.clone(),
        elements,
        requirement,
        formed_at: crystal.formed_at,
        version: crystal.version,
    })
}

/// Parse a view file: one `view <kind> ...` directive per line.
///
/// `view prag <tag,tag>` adds an any-of tag group (several lines conjoin),
/// `view roles <role,role>` sets the role mask, `view subject exact:<text>`
/// or `view subject prefix:<text>` adds a subject predicate.
pub fn parse_view_file(text: &str) -> Result<ViewSpec, ViewError> {
    let mut spec = ViewSpec::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rest = line.strip_prefix("view ").ok_or(ViewError::EmptyView)?;
        let (kind, args) = rest.split_once(' ').unwrap_or((rest, ""));
        match kind {
            "prag" => spec
                .pragmatics_groups
                .push(args.split(',').map(|t| t.trim().to_string()).collect()),
            "roles" => {
                spec.roles = Some(args.split(',').map(|r| r.trim().to_string()).collect());
            }
            "subject" => {
                let filter = if let Some(v) = args.strip_prefix("exact:") {
                    SubjectFilter::Exact(v.to_string())
                } else if let Some(v) = args.strip_prefix("prefix:") {
                    SubjectFilter::Prefix(v.to_string())
                } else {
                    return Err(ViewError::EmptyView);
                };
                spec.subjects.push(filter);
            }
            _ => return Err(ViewError::EmptyView),
        }
    }
    if spec.is_empty() {
        return Err(ViewError::EmptyView);
    }
    Ok(spec)
}

/// Subject–relation–object triple; the transformation target format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// Translate an element into triples: one per non-key role, in role order,
/// with relation `<pragmatics>/<role>` and the key binding as subject.
pub fn to_triples(element: &KnowledgeElement) -> Result<Vec<Triple>, TransformError> {
    let key_role = element
        .key_role()
        .ok_or_else(|| TransformError::NoKeyRole(element.id.clone()))?
        .to_string();
    let subject = element.binding(&key_role).unwrap_or_default().to_string();
    Ok(element
        .bindings
        .iter()
        .filter(|(role, _)| *role != key_role)
        .map(|(role, value)| Triple {
            subject: subject.clone(),
            relation: format!("{}/{}", element.pragmatics, role),
            object: value.clone(),
        })
        .collect())
}

/// Reconstruct an element from triples sharing one subject and pragmatics.
///
/// The key-role name is not carried by the triple format; it is recovered by
/// convention — `concept` for `concept-definition`-based pragmatics, else
/// `subject` — and placed where those roles conventionally sit (`concept`
/// last, `subject` first). Use [`from_triples_with_key`] to override.
pub fn from_triples(triples: &[Triple]) -> Result<KnowledgeElement, TransformError> {
    let pragmatics = shared_pragmatics(triples)?;
    let key_role =
        if tag_base(&pragmatics) == "concept-definition" { "concept" } else { "subject" };
    from_triples_with_key(triples, key_role)
}

/// As [`from_triples`] with an explicit key-role name.
pub fn from_triples_with_key(
    triples: &[Triple],
    key_role: &str,
) -> Result<KnowledgeElement, TransformError> {
    let first = triples.first().ok_or(TransformError::MixedSubjects)?;
    if triples.iter().any(|t| t.subject != first.subject) {
        return Err(TransformError::MixedSubjects);
    }
    let pragmatics = shared_pragmatics(triples)?;
    let mut bindings: Vec<(String, String)> = Vec::new();
    for t in triples {
        let (_, role) = t
            .relation
            .rsplit_once('/')
            .ok_or_else(|| TransformError::MalformedRelation(t.relation.clone()))?;
        bindings.push((role.to_string(), t.object.clone()));
    }
    let key_binding = (key_role.to_string(), first.subject.clone());
    if key_role == "concept" {
        bindings.push(key_binding);
    } else {
        bindings.insert(0, key_binding);
    }
    Ok(KnowledgeElement {
        id: format!("triples#{}", norm_key(&first.subject)),
        pragmatics,
        bindings,
        pattern_id: "from-triples".to_string(),
        source: Source { doc: "triples".to_string(), sentence: 0, range: (0, 0) },
        timestamp: 0,
        reliability: 0,
    })
}

fn shared_pragmatics(triples: &[Triple]) -> Result<String, TransformError> {
    let first = triples.first().ok_or(TransformError::MixedSubjects)?;
    let (pragmatics, _) = first
        .relation
        .rsplit_once('/')
        .ok_or_else(|| TransformError::MalformedRelation(first.relation.clone()))?;
    for t in triples {
        let (p, _) = t
            .relation
            .rsplit_once('/')
            .ok_or_else(|| TransformError::MalformedRelation(t.relation.clone()))?;
        if p != pragmatics {
            return Err(TransformError::MixedPragmatics);
        }
    }
    Ok(pragmatics.to_string())
}

/// Tab-separated export, one triple per line.
pub fn triples_to_tsv(triples: &[Triple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&format!("{}\t{}\t{}\n", t.subject, t.relation, t.object));
    }
    out
}

/// Parse [`triples_to_tsv`] output.
pub fn triples_from_tsv(text: &str) -> Result<Vec<Triple>, TransformError> {
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let (Some(s), Some(r), Some(o)) = (cols.next(), cols.next(), cols.next()) else {
            return Err(TransformError::MalformedRelation(line.to_string()));
        };
        out.push(Triple { subject: s.to_string(), relation: r.to_string(), object: o.to_string() });
    }
    Ok(out)
}

/// Operating summary of a crystal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub elements: usize,
    /// Distinct pragmatics base tags.
    pub groups: usize,
    /// Distinct normalized key bindings.
    pub subjects: usize,
    /// Element count per pragmatics base tag.
    pub counts: BTreeMap<String, usize>,
    pub version: u64,
    pub formed_at: u64,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "elements {}\ngroups {}\nsubjects {}\nversion {}\nformed_at {}\n",
            self.elements, self.groups, self.subjects, self.version, self.formed_at
        );
        for (tag, count) in &self.counts {
            out.push_str(&format!("count {tag} {count}\n"));
        }
        out
    }
}

/// Content summary: counts per pragmatics, distinct subjects, identity.
pub fn summarize(crystal: &Crystal) -> Summary {
    let counts = crystal.content_counts();
    let subjects: BTreeSet<String> = crystal
        .elements
        .iter()
        .filter_map(|e| e.key_binding())
        .map(norm_key)
        .collect();
    Summary {
        elements: crystal.elements.len(),
        groups: counts.len(),
        subjects: subjects.len(),
        counts,
        version: crystal.version,
        formed_at: crystal.formed_at,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::{crystallize, Magma, Requirement};
    use crate::keystructure::{compile_key_structure, parse_pattern, KeyStructure, Layer};
    use crate::knowware::{package, PackageMeta};
    use crate::pnlu::extract;

    fn software_ks() -> KeyStructure {
        let pat = |id: &str, spec: &str, roles: &[&str], prag: &str| {
            parse_pattern(id, spec, roles, prag, Layer::Core).unwrap()
        };
        compile_key_structure(
            "software",
            vec![
                pat("is-a", "* is a *", &["subject", "definition"], "intensional-definition"),
                pat(
                    "classified-in",
                    "* is classified in * and *",
                    &["subject", "classes", "last_class"],
                    "classification",
                ),
                pat(
                    "includes-and",
                    "* includes * and *",
                    &["subject", "members", "last_member"],
                    "extensional-definition.and",
                ),
                pat(
                    "includes-etc",
                    "* includes * etc.",
                    &["subject", "members"],
                    "extensional-definition.etc",
                ),
            ],
            None,
        )
        .unwrap()
    }

    const SOFTWARE_PARAGRAPH: &str = "Software is a set of programs running on computer \
with corresponding documentation. Software is classified in three classes: system software, \
application software and supporting software. System software includes operating systems, \
compilers, database management systems and utility programs. Application software includes \
software for numerical computation, expert systems, etc. Supporting software includes \
software middleware, application server, etc.";

    fn software_crystal() -> Crystal {
        let mut magma = Magma::new();
        magma.ingest(extract(&software_ks(), SOFTWARE_PARAGRAPH, "software").0).unwrap();
        crystallize(
            &magma,
            Requirement::with_pragmatics(&[
                "intensional-definition",
                "classification",
                "extensional-definition",
            ]),
            "software",
        )
        .unwrap()
    }

    fn erythrocyte_element() -> KnowledgeElement {
        let ks = compile_key_structure(
            "blood",
            vec![parse_pattern(
                "concept-def",
                "if * then * is called *",
                &["condition", "father_concept", "concept"],
                "concept-definition",
                Layer::Core,
            )
            .unwrap()],
            None,
        )
        .unwrap();
        extract(
            &ks,
            "If the color of the blood cell is red then the blood cell is called erythrocyte.",
            "blood",
        )
        .0
        .remove(0)
    }

    #[test]
    fn view_by_pragmatics_filters() {
        let crystal = software_crystal();
        let view = ViewSpec::with_pragmatics(&["classification"]);
        let filtered = apply_view(&crystal, &view).unwrap();
        assert_eq!(filtered.elements.len(), 1);
        assert_eq!(filtered.elements[0].pattern_id, "classified-in");
    }

    #[test]
    fn identity_view_keeps_everything() {
        let crystal = software_crystal();
        let view = ViewSpec::with_pragmatics(&[
            "intensional-definition",
            "classification",
            "extensional-definition",
        ]);
        let out = apply_view(&crystal, &view).unwrap();
        assert_eq!(out.elements, crystal.elements);
    }

    #[test]
    fn view_over_package_requires_verification() {
        let crystal = software_crystal();
        let pkg = package(
            &crystal,
            PackageMeta { name: "n".into(), version: "1".into(), ..PackageMeta::default() },
        )
        .unwrap();
        let view = ViewSpec::with_pragmatics(&["classification"]);
        let out = apply_view(&pkg, &view).unwrap();
        assert_eq!(out.elements.len(), 1);

        // tamper: reopen with a flipped payload byte
        let mut bytes = pkg.to_bytes();
        let n = bytes.len();
        bytes[n - 2] ^= 0x01;
        let tampered = crate::knowware::open(&bytes).unwrap();
        assert!(matches!(
            apply_view(&tampered, &view),
            Err(ViewError::VerifyFailed(_))
        ));
    }

    #[test]
    fn role_masking_keeps_key_role() {
        let crystal = software_crystal();
        let view = ViewSpec::new(
            vec![],
            Some(["subject".to_string(), "members".to_string()].into()),
            None,
        )
        .unwrap();
        let out = apply_view(&crystal, &view).unwrap();
        // every surviving element keeps its subject; definition/classes are gone
        assert!(out.elements.iter().all(|e| e.binding("subject").is_some()));
        assert!(out.elements.iter().all(|e| e.binding("definition").is_none()));
        assert_eq!(out.elements.len(), 5);
    }

    #[test]
    fn masking_away_key_role_drops_element() {
        let crystal = software_crystal();
        let view = ViewSpec::new(vec![], Some(["definition".to_string()].into()), None).unwrap();
        let out = apply_view(&crystal, &view).unwrap();
        assert!(out.elements.is_empty());
    }

    #[test]
    fn view_composition_equals_conjunction() {
        let crystal = software_crystal();
        let a = ViewSpec::with_pragmatics(&["extensional-definition"]);
        let b = ViewSpec::new(vec![], None, Some(SubjectFilter::Prefix("S".into()))).unwrap();
        let chained = apply_view(&apply_view(&crystal, &a).unwrap(), &b).unwrap();
        let conjoined = apply_view(&crystal, &a.and(&b)).unwrap();
        assert_eq!(chained.elements, conjoined.elements);
    }

    #[test]
    fn view_never_mutates_source_package() {
        let crystal = software_crystal();
        let pkg = package(
            &crystal,
            PackageMeta { name: "n".into(), version: "1".into(), ..PackageMeta::default() },
        )
        .unwrap();
        let before = pkg.to_bytes();
        let _ = apply_view(&pkg, &ViewSpec::with_pragmatics(&["classification"])).unwrap();
        assert_eq!(pkg.to_bytes(), before);
        assert_eq!(verify(&pkg), Verdict::Pass);
    }

    #[test]
    fn erythrocyte_to_triples() {
        let triples = to_triples(&erythrocyte_element()).unwrap();
        assert_eq!(
            triples,
            vec![
                Triple {
                    subject: "erythrocyte".into(),
                    relation: "concept-definition/condition".into(),
                    object: "the color of the blood cell is red".into(),
                },
                Triple {
                    subject: "erythrocyte".into(),
                    relation: "concept-definition/father_concept".into(),
                    object: "the blood cell".into(),
                },
            ]
        );
    }

    #[test]
    fn key_role_only_element_yields_no_triples() {
        let mut e = erythrocyte_element();
        e.bindings.retain(|(r, _)| r == "concept");
        assert!(to_triples(&e).unwrap().is_empty());
        e.bindings.clear();
        assert!(matches!(to_triples(&e), Err(TransformError::NoKeyRole(_))));
    }

    #[test]
    fn triples_round_trip_erythrocyte() {
        let element = erythrocyte_element();
        let triples = to_triples(&element).unwrap();
        let back = from_triples(&triples).unwrap();
        assert_eq!(back.pragmatics, element.pragmatics);
        assert_eq!(back.bindings, element.bindings);
    }

    #[test]
    fn triples_round_trip_software_elements() {
        for element in software_crystal().elements {
            let triples = to_triples(&element).unwrap();
            if triples.is_empty() {
                continue;
            }
            let back = from_triples(&triples).unwrap();
            assert_eq!(back.pragmatics, element.pragmatics);
            assert_eq!(back.bindings, element.bindings);
        }
    }

    #[test]
    fn mixed_triples_are_rejected() {
        let t1 = Triple { subject: "a".into(), relation: "t/x".into(), object: "1".into() };
        let t2 = Triple { subject: "b".into(), relation: "t/y".into(), object: "2".into() };
        assert_eq!(from_triples(&[t1.clone(), t2]), Err(TransformError::MixedSubjects));
        let t3 = Triple { subject: "a".into(), relation: "u/y".into(), object: "2".into() };
        assert_eq!(from_triples(&[t1, t3]), Err(TransformError::MixedPragmatics));
        assert_eq!(from_triples(&[]), Err(TransformError::MixedSubjects));
        let bad = Triple { subject: "a".into(), relation: "norole".into(), object: "1".into() };
        assert!(matches!(from_triples(&[bad]), Err(TransformError::MalformedRelation(_))));
    }

    #[test]
    fn tsv_round_trips() {
        let triples = to_triples(&erythrocyte_element()).unwrap();
        let tsv = triples_to_tsv(&triples);
        assert_eq!(triples_from_tsv(&tsv).unwrap(), triples);
    }

    #[test]
    fn summarize_software_crystal() {
        let s = summarize(&software_crystal());
        assert_eq!(s.elements, 5);
        assert_eq!(s.groups, 3);
        assert_eq!(s.subjects, 4);
        assert_eq!(s.version, 1);
    }

    #[test]
    fn view_file_parses_and_conjoins() {
        let spec = parse_view_file(
            "# classification only, subjects starting with S\nview prag classification,extensional-definition\nview roles subject,members\nview subject prefix:S\n",
        )
        .unwrap();
        assert_eq!(spec.pragmatics_groups.len(), 1);
        assert!(spec.roles.as_ref().unwrap().contains("members"));
        let crystal = software_crystal();
        let out = apply_view(&crystal, &spec).unwrap();
        assert!(out.elements.iter().all(|e| e.binding("subject").unwrap().starts_with('S')));
        assert!(parse_view_file("").is_err());
        assert!(parse_view_file("view nonsense x").is_err());
    }

    #[test]
    fn summarize_single_element_crystal() {
        let crystal = software_crystal();
        let one = apply_view(&crystal, &ViewSpec::with_pragmatics(&["classification"])).unwrap();
        let s = summarize(&one);
        assert_eq!((s.elements, s.groups, s.subjects), (1, 1, 1));
        // idempotent with respect to the crystal value
        assert_eq!(summarize(&one), s);
    }
}
