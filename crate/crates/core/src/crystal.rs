//! Knowledge magma and crystals: the element store, conflict handling,
//! requirement-driven crystal formation and renewal, and the two query
//! forms a crystal can answer.
//!
//! Contradictions resolve in favor of more dependable knowledge: higher
//! reliability rank first, then newer timestamp, then later arrival.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::pnlu::{parse_elements, KnowledgeElement, PnluError, Source};
use crate::text::{norm_eq, norm_key, quote_span, tag_base, tag_matches, tokenize, unescape_span};

#[derive(Debug, Error)]
pub enum MagmaError {
    #[error("element id {0} already present")]
    DuplicateId(String),
    #[error("requirement needs at least one criterion")]
    EmptyRequirement,
    #[error("no element passes the requirement")]
    EmptyCrystal,
    #[error("element {0} violates the crystal requirement")]
    RequirementViolation(String),
    #[error("bad crystal text: {0}")]
    BadCrystalText(String),
    #[error(transparent)]
    Element(#[from] PnluError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One stored element plus the extra provenance merged into it when
/// duplicate content arrived under other ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MagmaEntry {
    pub element: KnowledgeElement,
    pub extra_sources: Vec<Source>,
}

/// Append-log of knowledge elements with a key-binding index.
#[derive(Debug, Clone, Default)]
pub struct Magma {
    entries: Vec<MagmaEntry>,
    /// Normalized key binding → indices into `entries`.
    index: BTreeMap<String, Vec<usize>>,
}

/// Outcome of one ingestion batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestStats {
    pub added: usize,
    pub merged: usize,
}

/// Two elements that state different things about the same key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conflict {
    pub first: String,
    pub second: String,
    pub pragmatics: String,
    pub key: String,
}

impl Magma {
    pub fn new() -> Magma {
        Magma::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MagmaEntry] {
        &self.entries
    }

    pub fn elements(&self) -> impl Iterator<Item = &KnowledgeElement> {
        self.entries.iter().map(|e| &e.element)
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeElement> {
        self.entries.iter().map(|e| &e.element).find(|e| e.id == id)
    }

    /// Ids of elements whose key binding equals `key` (normalized).
    pub fn lookup(&self, key: &str) -> Vec<&str> {
        self.index
            .get(&norm_key(key))
            .map(|idxs| idxs.iter().map(|&i| self.entries[i].element.id.as_str()).collect())
            .unwrap_or_default()
    }

    fn index_entry(&mut self, entry_idx: usize) {
        if let Some(key) = self.entries[entry_idx].element.key_binding() {
            self.index.entry(norm_key(key)).or_default().push(entry_idx);
        }
    }

    /// Append elements. Fresh ids are required; an element whose pragmatics
    /// and full bindings equal a stored one collapses into it, merging
    /// provenance and keeping the stronger (reliability, timestamp) pair —
    /// corroborated knowledge is at least as dependable as before.
    pub fn ingest(&mut self, elements: Vec<KnowledgeElement>) -> Result<IngestStats, MagmaError> {
        // reject id collisions up front so a failed batch changes nothing
        for e in &elements {
            if self.entries.iter().any(|x| x.element.id == e.id) {
                return Err(MagmaError::DuplicateId(e.id.clone()));
            }
        }
        let mut batch_ids = std::collections::BTreeSet::new();
        for e in &elements {
            if !batch_ids.insert(e.id.as_str()) {
                return Err(MagmaError::DuplicateId(e.id.clone()));
            }
        }
        let mut stats = IngestStats::default();
        for e in elements {
            let key = e.content_key();
            if let Some(existing) =
                self.entries.iter_mut().find(|x| x.element.content_key() == key)
            {
                existing.extra_sources.push(e.source.clone());
                if strength(&e) > strength(&existing.element) {
                    existing.element.reliability = e.reliability;
                    existing.element.timestamp = e.timestamp;
                }
                stats.merged += 1;
            } else {
                self.entries.push(MagmaEntry { element: e, extra_sources: Vec::new() });
                self.index_entry(self.entries.len() - 1);
                stats.added += 1;
            }
        }
        Ok(stats)
    }

    /// Pairs of elements sharing pragmatics and key binding but differing in
    /// their remaining bindings.
    pub fn detect_conflicts(&self) -> Vec<Conflict> {
        detect_conflicts_in(self.elements())
    }

    /// Persist as an append-only element-line log plus a sidecar index file
    /// (`<path>.idx`). The log is authoritative; the sidecar is derived.
    pub fn save(&self, path: &Path) -> Result<(), MagmaError> {
        let mut log = String::from("#kwf-magma 1\n");
        for entry in &self.entries {
            log.push_str(&entry.element.render_line());
            log.push('\n');
            for src in &entry.extra_sources {
                log.push_str(&format!("src {} {}\n", entry.element.id, src.render()));
            }
        }
        fs::write(path, log)?;
        let mut idx = String::new();
        for (key, idxs) in &self.index {
            let ids: Vec<&str> =
                idxs.iter().map(|&i| self.entries[i].element.id.as_str()).collect();
            idx.push_str(&format!("{}\t{}\n", quote_span(key), ids.join(",")));
        }
        fs::write(idx_path(path), idx)?;
        Ok(())
    }

    /// Load a log written by [`Magma::save`], rebuilding the index.
    pub fn load(path: &Path) -> Result<Magma, MagmaError> {
        let text = fs::read_to_string(path)?;
        let mut magma = Magma::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("src ") {
                let (id, src) = rest
                    .split_once(' ')
                    .ok_or_else(|| MagmaError::BadCrystalText(line.to_string()))?;
                let src = Source::parse(src)
                    .ok_or_else(|| MagmaError::BadCrystalText(line.to_string()))?;
                let entry = magma
                    .entries
                    .iter_mut()
                    .find(|e| e.element.id == id)
                    .ok_or_else(|| MagmaError::BadCrystalText(format!("src for unknown id {id}")))?;
                entry.extra_sources.push(src);
            } else {
                let element = KnowledgeElement::parse_line(line)?;
                magma.entries.push(MagmaEntry { element, extra_sources: Vec::new() });
                magma.index_entry(magma.entries.len() - 1);
            }
        }
        Ok(magma)
    }
}

fn idx_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".idx");
    os.into()
}

/// Conflict scan over an arbitrary element sequence.
pub fn detect_conflicts_in<'a>(
    elements: impl Iterator<Item = &'a KnowledgeElement>,
) -> Vec<Conflict> {
    let mut groups: BTreeMap<(String, String), Vec<&KnowledgeElement>> = BTreeMap::new();
    let mut order: Vec<(String, String)> = Vec::new();
    for e in elements {
        let Some(key) = e.key_binding() else { continue };
        let group_key = (e.pragmatics.clone(), norm_key(key));
        if !groups.contains_key(&group_key) {
            order.push(group_key.clone());
        }
        groups.entry(group_key).or_default().push(e);
    }
    let mut conflicts = Vec::new();
    for group_key in order {
        let members = &groups[&group_key];
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                if members[i].bindings != members[j].bindings {
                    conflicts.push(Conflict {
                        first: members[i].id.clone(),
                        second: members[j].id.clone(),
                        pragmatics: group_key.0.clone(),
                        key: group_key.1.clone(),
                    });
                }
            }
        }
    }
    conflicts
}

/// Subject criterion of a requirement or view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubjectFilter {
    Exact(String),
    Prefix(String),
}

impl SubjectFilter {
    pub fn matches(&self, subject: &str) -> bool {
        match self {
            SubjectFilter::Exact(want) => norm_eq(want, subject),
            SubjectFilter::Prefix(want) => norm_key(subject).starts_with(&norm_key(want)),
        }
    }

    pub fn render(&self) -> String {
        match self {
            SubjectFilter::Exact(s) => format!("exact:{}", quote_span(s)),
            SubjectFilter::Prefix(s) => format!("prefix:{}", quote_span(s)),
        }
    }

    pub fn parse(s: &str) -> Option<SubjectFilter> {
        let inner = |v: &str| {
            v.strip_prefix('«')
                .and_then(|v| v.strip_suffix('»'))
                .map(unescape_span)
        };
        if let Some(v) = s.strip_prefix("exact:") {
            return inner(v).map(SubjectFilter::Exact);
        }
        if let Some(v) = s.strip_prefix("prefix:") {
            return inner(v).map(SubjectFilter::Prefix);
        }
        None
    }
}

/// The crystallization center: which knowledge a crystal is about.
///
/// Pragmatics tags match by full tag or base; subject filters apply to the
/// key binding; source filters name document ids (any listed source of the
/// element counts). At least one criterion must be present.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Requirement {
    pub pragmatics: Vec<String>,
    pub subjects: Vec<SubjectFilter>,
    pub sources: Vec<String>,
}

impl Requirement {
    pub fn new(
        pragmatics: Vec<String>,
        subjects: Vec<SubjectFilter>,
        sources: Vec<String>,
    ) -> Result<Requirement, MagmaError> {
        let req = Requirement { pragmatics, subjects, sources };
        if req.pragmatics.is_empty() && req.subjects.is_empty() && req.sources.is_empty() {
            return Err(MagmaError::EmptyRequirement);
        }
        Ok(req)
    }

    pub fn with_pragmatics(tags: &[&str]) -> Requirement {
        Requirement {
            pragmatics: tags.iter().map(|t| t.to_string()).collect(),
            ..Requirement::default()
        }
    }

    /// Does `element` (with any extra sources) satisfy every present
    /// criterion?
    pub fn allows(&self, element: &KnowledgeElement, extra_sources: &[Source]) -> bool {
        if !self.pragmatics.is_empty()
            && !self.pragmatics.iter().any(|t| tag_matches(t, &element.pragmatics))
        {
            return false;
        }
        if !self.subjects.is_empty() {
            let Some(key) = element.key_binding() else { return false };
            if !self.subjects.iter().any(|f| f.matches(key)) {
                return false;
            }
        }
        if !self.sources.is_empty() {
            let mut docs = std::iter::once(&element.source).chain(extra_sources.iter());
            if !docs.any(|s| self.sources.iter().any(|want| want == &s.doc)) {
                return false;
            }
        }
        true
    }

    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        if !self.pragmatics.is_empty() {
            let tags: Vec<String> = self.pragmatics.iter().map(|t| quote_span(t)).collect();
            parts.push(format!("prag={}", tags.join(",")));
        }
        if !self.subjects.is_empty() {
            let subs: Vec<String> = self.subjects.iter().map(|f| f.render()).collect();
            parts.push(format!("subj={}", subs.join(",")));
        }
        if !self.sources.is_empty() {
            let srcs: Vec<String> = self.sources.iter().map(|s| quote_span(s)).collect();
            parts.push(format!("src={}", srcs.join(",")));
        }
        format!("require {}", parts.join(" | "))
    }

    pub fn parse(line: &str) -> Result<Requirement, MagmaError> {
        let bad = || MagmaError::BadCrystalText(line.to_string());
        let rest = line.strip_prefix("require ").ok_or_else(bad)?;
        let mut req = Requirement::default();
        for part in rest.split(" | ") {
            let (kind, values) = part.split_once('=').ok_or_else(bad)?;
            // values are «»-quoted and comma-separated; reuse the tokenizer
            // by turning commas between quotes into spaces
            let items = split_quoted_list(values).ok_or_else(bad)?;
            match kind {
                "prag" => req.pragmatics.extend(items),
                "subj" => {
                    for item in items_raw(values).ok_or_else(bad)? {
                        req.subjects.push(SubjectFilter::parse(&item).ok_or_else(bad)?);
                    }
                }
                "src" => req.sources.extend(items),
                _ => return Err(bad()),
            }
        }
        if req.pragmatics.is_empty() && req.subjects.is_empty() && req.sources.is_empty() {
            return Err(MagmaError::EmptyRequirement);
        }
        Ok(req)
    }
}

/// Split a comma-separated list of `«...»`-quoted values.
fn split_quoted_list(values: &str) -> Option<Vec<String>> {
    items_raw(values)?
        .into_iter()
        .map(|item| {
            let toks = tokenize(&item)?;
            if toks.len() == 1 {
                Some(toks.into_iter().next().unwrap())
            } else {
                None
            }
        })
        .collect()
}

/// Split on commas that sit outside `«»` quotes.
fn items_raw(values: &str) -> Option<Vec<String>> {
    let mut items = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for ch in values.chars() {
        match ch {
            '«' => {
                depth += 1;
                current.push(ch);
            }
            '»' => {
                depth = depth.checked_sub(1)?;
                current.push(ch);
            }
            ',' if depth == 0 => {
                items.push(std::mem::take(&mut current));
            }
            _ => current.push(ch),
        }
    }
    if !current.is_empty() {
        items.push(current);
    }
    Some(items)
}

/// A requirement-driven, conflict-free set of elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crystal {
    pub domain: String,
    pub elements: Vec<KnowledgeElement>,
    pub requirement: Requirement,
    /// Logical formation time: the greatest element timestamp.
    pub formed_at: u64,
    pub version: u64,
}

impl fmt::Display for Crystal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "crystal {} v{} ({} elements)", self.domain, self.version, self.elements.len())
    }
}

/// Dependability of an element: reliability rank first, then recency.
fn strength(e: &KnowledgeElement) -> (i32, u64) {
    (e.reliability, e.timestamp)
}

/// Resolution order: reliability rank, then timestamp. Exact ties fall to
/// content order, which is stable however the candidates arrived — renewal
/// and re-crystallization must pick the same winner.
fn beats(a: &KnowledgeElement, b: &KnowledgeElement) -> bool {
    match strength(a).cmp(&strength(b)) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.content_key() > b.content_key(),
    }
}

/// Keep one winner per (pragmatics, key binding) group; order is preserved
/// for survivors. Elements without a key binding never conflict.
fn resolve_conflicts(elements: Vec<KnowledgeElement>) -> Vec<KnowledgeElement> {
    let mut winners: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (pos, e) in elements.iter().enumerate() {
        let Some(key) = e.key_binding() else { continue };
        let group = (e.pragmatics.clone(), norm_key(key));
        match winners.get(&group) {
            Some(&best) if !beats(e, &elements[best]) => {}
            _ => {
                winners.insert(group, pos);
            }
        }
    }
    elements
        .iter()
        .enumerate()
        .filter(|(pos, e)| match e.key_binding() {
            Some(key) => winners[&(e.pragmatics.clone(), norm_key(key))] == *pos,
            None => true,
        })
        .map(|(_, e)| e.clone())
        .collect()
}

/// Form a crystal from the magma: filter by the requirement, resolve
/// conflicts, version 1.
pub fn crystallize(
    magma: &Magma,
    requirement: Requirement,
    domain: &str,
) -> Result<Crystal, MagmaError> {
    if requirement.pragmatics.is_empty()
        && requirement.subjects.is_empty()
        && requirement.sources.is_empty()
    {
        return Err(MagmaError::EmptyRequirement);
    }
    let passing: Vec<KnowledgeElement> = magma
        .entries()
        .iter()
        .filter(|entry| requirement.allows(&entry.element, &entry.extra_sources))
        .map(|entry| entry.element.clone())
        .collect();
    if passing.is_empty() {
        return Err(MagmaError::EmptyCrystal);
    }
    let elements = resolve_conflicts(passing);
    let formed_at = elements.iter().map(|e| e.timestamp).max().unwrap_or(0);
    Ok(Crystal {
        domain: domain.to_string(),
        elements,
        requirement,
        formed_at,
        version: 1,
    })
}

/// Renew a crystal with new elements (the knowledge kidney).
///
/// New elements must pass the crystal's requirement. Superseded elements are
/// removed; the version increments exactly when the element set changes.
pub fn renew(crystal: &Crystal, new: Vec<KnowledgeElement>) -> Result<Crystal, MagmaError> {
    for e in &new {
        if !crystal.requirement.allows(e, &[]) {
            return Err(MagmaError::RequirementViolation(e.id.clone()));
        }
    }
    let mut combined = crystal.elements.clone();
    for e in new {
        match combined.iter_mut().find(|x| x.content_key() == e.content_key()) {
            // identical content corroborates: keep the stronger pair
            Some(existing) => {
                if strength(&e) > strength(existing) {
                    existing.reliability = e.reliability;
                    existing.timestamp = e.timestamp;
                }
            }
            None => combined.push(e),
        }
    }
    let elements = resolve_conflicts(combined);
    let changed = elements != crystal.elements;
    // recomputed, not clamped, so renewal agrees with re-crystallization
    let formed_at = elements.iter().map(|e| e.timestamp).max().unwrap_or(0);
    Ok(Crystal {
        domain: crystal.domain.clone(),
        elements,
        requirement: crystal.requirement.clone(),
        formed_at: if changed { formed_at } else { crystal.formed_at },
        version: if changed { crystal.version + 1 } else { crystal.version },
    })
}

/// All elements whose `concept` (or else `subject`) binding equals the
/// concept, case-insensitively.
pub fn query_define<'a>(crystal: &'a Crystal, concept: &str) -> Vec<&'a KnowledgeElement> {
    crystal
        .elements
        .iter()
        .filter(|e| {
            let named = e.binding("concept").or_else(|| e.binding("subject"));
            named.is_some_and(|v| norm_eq(v, concept))
        })
        .collect()
}

/// Concepts defined under the given condition and father concept.
pub fn query_name(crystal: &Crystal, condition: &str, father: &str) -> Vec<String> {
    crystal
        .elements
        .iter()
        .filter(|e| {
            e.binding("condition").is_some_and(|v| norm_eq(v, condition))
                && e.binding("father_concept").is_some_and(|v| norm_eq(v, father))
        })
        .filter_map(|e| e.binding("concept").map(str::to_string))
        .collect()
}

impl Crystal {
    /// Distinct pragmatics base tags with element counts.
    pub fn content_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.elements {
            *counts.entry(tag_base(&e.pragmatics).to_string()).or_insert(0) += 1;
        }
        counts
    }

    /// Canonical text form: header line, requirement line, element lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("crystal {} {} {}\n", self.domain, self.version, self.formed_at);
        out.push_str(&self.requirement.render());
        out.push('\n');
        for e in &self.elements {
            out.push_str(&e.render_line());
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Crystal, MagmaError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| MagmaError::BadCrystalText("empty".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        let ["crystal", domain, version, formed_at] = toks.as_slice() else {
            return Err(MagmaError::BadCrystalText(header.to_string()));
        };
        let version =
            version.parse().map_err(|_| MagmaError::BadCrystalText(header.to_string()))?;
        let formed_at =
            formed_at.parse().map_err(|_| MagmaError::BadCrystalText(header.to_string()))?;
        let req_line =
            lines.next().ok_or_else(|| MagmaError::BadCrystalText("missing requirement".into()))?;
        let requirement = Requirement::parse(req_line)?;
        let mut elements = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            elements.push(KnowledgeElement::parse_line(line)?);
        }
        Ok(Crystal {
            domain: domain.to_string(),
            elements,
            requirement,
            formed_at,
            version,
        })
    }

    pub fn load(path: &Path) -> Result<Crystal, MagmaError> {
        Crystal::parse_text(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), MagmaError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Convenience: load elements from a `.kel` file.
pub fn load_elements(path: &Path) -> Result<Vec<KnowledgeElement>, MagmaError> {
    Ok(parse_elements(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keystructure::{compile_key_structure, parse_pattern, KeyStructure, Layer};
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

    fn software_elements() -> Vec<KnowledgeElement> {
        extract(&software_ks(), SOFTWARE_PARAGRAPH, "software").0
    }

    fn definition(id: &str, concept: &str, condition: &str, ts: u64, rel: i32) -> KnowledgeElement {
        KnowledgeElement {
            id: id.to_string(),
            pragmatics: "concept-definition".to_string(),
            bindings: vec![
                ("condition".to_string(), condition.to_string()),
                ("father_concept".to_string(), "the blood cell".to_string()),
                ("concept".to_string(), concept.to_string()),
            ],
            pattern_id: "concept-def".to_string(),
            source: Source { doc: "doc".to_string(), sentence: 0, range: (0, 1) },
            timestamp: ts,
            reliability: rel,
        }
    }

    #[test]
    fn ingest_software_elements() {
        let mut magma = Magma::new();
        let stats = magma.ingest(software_elements()).unwrap();
        assert_eq!(stats, IngestStats { added: 5, merged: 0 });
        assert_eq!(magma.len(), 5);
        assert_eq!(magma.lookup("software").len(), 2);
    }

    #[test]
    fn ingest_dedups_identical_content() {
        let mut magma = Magma::new();
        let mut a = definition("a", "erythrocyte", "the color is red", 0, 0);
        magma.ingest(vec![a.clone()]).unwrap();
        a.id = "b".to_string();
        a.source.sentence = 9;
        let stats = magma.ingest(vec![a]).unwrap();
        assert_eq!(stats, IngestStats { added: 0, merged: 1 });
        assert_eq!(magma.len(), 1);
        assert_eq!(magma.entries()[0].extra_sources.len(), 1);
    }

    #[test]
    fn ingest_rejects_id_collision() {
        let mut magma = Magma::new();
        magma.ingest(vec![definition("a", "x", "c1", 0, 0)]).unwrap();
        let err = magma.ingest(vec![definition("a", "y", "c2", 0, 0)]).unwrap_err();
        assert!(matches!(err, MagmaError::DuplicateId(_)));
        assert_eq!(magma.len(), 1);
    }

    #[test]
    fn conflicting_definitions_are_detected() {
        let mut magma = Magma::new();
        magma
            .ingest(vec![
                definition("a", "erythrocyte", "the color is red", 0, 0),
                definition("b", "erythrocyte", "the color is crimson", 0, 0),
            ])
            .unwrap();
        let conflicts = magma.detect_conflicts();
        assert_eq!(conflicts.len(), 1);
        assert_eq!(conflicts[0].first, "a");
        assert_eq!(conflicts[0].second, "b");
    }

    #[test]
    fn disjoint_subjects_do_not_conflict() {
        let mut magma = Magma::new();
        magma
            .ingest(vec![
                definition("a", "erythrocyte", "red", 0, 0),
                definition("b", "leukocyte", "white", 0, 0),
            ])
            .unwrap();
        assert!(magma.detect_conflicts().is_empty());
    }

    #[test]
    fn crystallize_software_requirement() {
        let mut magma = Magma::new();
        magma.ingest(software_elements()).unwrap();
        let req = Requirement::with_pragmatics(&[
            "intensional-definition",
            "classification",
            "extensional-definition",
        ]);
        let crystal = crystallize(&magma, req, "software").unwrap();
        assert_eq!(crystal.elements.len(), 5);
        assert_eq!(crystal.version, 1);
        assert!(detect_conflicts_in(crystal.elements.iter()).is_empty());

        let one = crystallize(&magma, Requirement::with_pragmatics(&["classification"]), "cls")
            .unwrap();
        assert_eq!(one.elements.len(), 1);
    }

    #[test]
    fn crystallize_rejects_empty_matches_and_requirements() {
        let mut magma = Magma::new();
        magma.ingest(software_elements()).unwrap();
        assert!(matches!(
            crystallize(&magma, Requirement::with_pragmatics(&["nothing"]), "x"),
            Err(MagmaError::EmptyCrystal)
        ));
        assert!(matches!(
            crystallize(&magma, Requirement::default(), "x"),
            Err(MagmaError::EmptyRequirement)
        ));
    }

    #[test]
    fn crystallize_resolves_by_reliability_then_time() {
        let mut magma = Magma::new();
        magma
            .ingest(vec![
                definition("old", "erythrocyte", "the color is red", 1, 0),
                definition("new", "erythrocyte", "the color is crimson", 2, 0),
                definition("trusted", "erythrocyte", "the color is scarlet", 0, 5),
            ])
            .unwrap();
        let crystal =
            crystallize(&magma, Requirement::with_pragmatics(&["concept-definition"]), "blood")
                .unwrap();
        assert_eq!(crystal.elements.len(), 1);
        assert_eq!(crystal.elements[0].id, "trusted");
    }

    #[test]
    fn renew_replaces_superseded_definition() {
        let mut magma = Magma::new();
        magma.ingest(vec![definition("old", "erythrocyte", "the color is red", 1, 0)]).unwrap();
        let crystal =
            crystallize(&magma, Requirement::with_pragmatics(&["concept-definition"]), "blood")
                .unwrap();
        let renewed =
            renew(&crystal, vec![definition("new", "erythrocyte", "the color is crimson", 5, 0)])
                .unwrap();
        assert_eq!(renewed.version, 2);
        assert_eq!(renewed.elements.len(), 1);
        assert_eq!(renewed.elements[0].id, "new");
        assert_eq!(renewed.formed_at, 5);
    }

    #[test]
    fn renew_with_empty_list_is_identity() {
        let mut magma = Magma::new();
        magma.ingest(software_elements()).unwrap();
        let crystal = crystallize(
            &magma,
            Requirement::with_pragmatics(&["classification"]),
            "software",
        )
        .unwrap();
        let renewed = renew(&crystal, vec![]).unwrap();
        assert_eq!(renewed, crystal);
    }

    #[test]
    fn renew_rejects_out_of_requirement_elements() {
        let mut magma = Magma::new();
        magma.ingest(software_elements()).unwrap();
        let crystal = crystallize(
            &magma,
            Requirement::with_pragmatics(&["classification"]),
            "software",
        )
        .unwrap();
        let err = renew(&crystal, vec![definition("d", "x", "c", 0, 0)]).unwrap_err();
        assert!(matches!(err, MagmaError::RequirementViolation(_)));
    }

    #[test]
    fn renew_agrees_with_recrystallization() {
        let mut magma = Magma::new();
        magma.ingest(vec![definition("old", "erythrocyte", "the color is red", 1, 0)]).unwrap();
        let req = Requirement::with_pragmatics(&["concept-definition"]);
        let crystal = crystallize(&magma, req.clone(), "blood").unwrap();
        let newer = definition("new", "erythrocyte", "the color is crimson", 5, 0);
        let renewed = renew(&crystal, vec![newer.clone()]).unwrap();
        magma.ingest(vec![newer]).unwrap();
        let fresh = crystallize(&magma, req, "blood").unwrap();
        assert_eq!(renewed.elements, fresh.elements);
        assert_eq!(renewed.formed_at, fresh.formed_at);
    }

    #[test]
    fn corroborated_duplicates_upgrade_dependability() {
        // identical content arriving again under a stronger rank must sway
        // conflict resolution the same way through ingest and through renew
        let mut magma = Magma::new();
        magma
            .ingest(vec![
                definition("strong", "erythrocyte", "the color is red", 50, 3),
                definition("weak", "erythrocyte", "the color is crimson", 99, 1),
            ])
            .unwrap();
        let req = Requirement::with_pragmatics(&["concept-definition"]);
        let crystal = crystallize(&magma, req.clone(), "blood").unwrap();
        assert_eq!(crystal.elements[0].id, "strong");

        let again = definition("re", "erythrocyte", "the color is crimson", 5, 5);
        let renewed = renew(&crystal, vec![again.clone()]).unwrap();
        magma.ingest(vec![again]).unwrap();
        let fresh = crystallize(&magma, req, "blood").unwrap();
        let content = |c: &Crystal| {
            c.elements
                .iter()
                .map(|e| (e.bindings.clone(), e.reliability, e.timestamp))
                .collect::<Vec<_>>()
        };
        assert_eq!(content(&renewed), content(&fresh));
        assert_eq!(renewed.elements.len(), 1);
        assert_eq!(
            renewed.elements[0].binding("condition"),
            Some("the color is crimson")
        );
    }

    #[test]
    fn query_define_finds_subject_elements() {
        let mut magma = Magma::new();
        magma.ingest(software_elements()).unwrap();
        let crystal = crystallize(
            &magma,
            Requirement::with_pragmatics(&[
                "intensional-definition",
                "classification",
                "extensional-definition",
            ]),
            "software",
        )
        .unwrap();
        let hits = query_define(&crystal, "software");
        let patterns: Vec<&str> = hits.iter().map(|e| e.pattern_id.as_str()).collect();
        assert_eq!(patterns, ["is-a", "classified-in"]);
        assert!(query_define(&crystal, "unknown thing").is_empty());
    }

    #[test]
    fn query_name_returns_concepts_in_order() {
        let mut magma = Magma::new();
        magma
            .ingest(vec![
                definition("a", "erythrocyte", "the color of the blood cell is red", 0, 0),
                definition("b", "red cell", "the color of the blood cell is red", 0, 0),
            ])
            .unwrap();
        let crystal =
            crystallize(&magma, Requirement::with_pragmatics(&["concept-definition"]), "blood")
                .unwrap();
        assert_eq!(
            query_name(&crystal, "The Color of the blood cell is red", "the blood cell"),
            vec!["erythrocyte".to_string(), "red cell".to_string()]
        );
        assert!(query_name(&crystal, "no such condition", "the blood cell").is_empty());
    }

    #[test]
    fn crystal_text_round_trips() {
        let mut magma = Magma::new();
        magma.ingest(software_elements()).unwrap();
        let crystal = crystallize(
            &magma,
            Requirement {
                pragmatics: vec!["classification".into(), "intensional-definition".into()],
                subjects: vec![SubjectFilter::Prefix("Soft".into())],
                sources: vec!["software".into()],
            },
            "software",
        )
        .unwrap();
        let text = crystal.to_text();
        let back = Crystal::parse_text(&text).unwrap();
        assert_eq!(crystal, back);
        assert!(Crystal::parse_text("garbage").is_err());
    }

    #[test]
    fn magma_save_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("magma.kel");
        let mut magma = Magma::new();
        let mut dup = definition("a", "erythrocyte", "red", 3, 1);
        magma.ingest(vec![dup.clone()]).unwrap();
        dup.id = "b".into();
        magma.ingest(vec![dup]).unwrap();
        magma.save(&path).unwrap();
        let loaded = Magma::load(&path).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded.entries()[0].extra_sources.len(), 1);
        assert_eq!(loaded.lookup("erythrocyte"), vec!["a"]);
        assert!(idx_path(&path).exists());
    }

    #[test]
    fn version_increments_exactly_on_change() {
        let mut magma = Magma::new();
        magma.ingest(vec![definition("a", "erythrocyte", "red", 1, 0)]).unwrap();
        let crystal =
            crystallize(&magma, Requirement::with_pragmatics(&["concept-definition"]), "b")
                .unwrap();
        // same content under a different id: no change, no version bump
        let same = definition("a2", "erythrocyte", "red", 1, 0);
        let renewed = renew(&crystal, vec![same]).unwrap();
        assert_eq!(renewed.version, crystal.version);
        // losing candidate: set unchanged
        let weaker = definition("w", "erythrocyte", "maroon", 0, -1);
        let renewed = renew(&crystal, vec![weaker]).unwrap();
        assert_eq!(renewed.version, crystal.version);
        assert_eq!(renewed.elements, crystal.elements);
    }
}
