//! Sentence patterns and layered key structures: the grammar of a
//! pseudo-natural language.
//!
//! A sentence pattern is a keyword expression written in star notation
//! (`if * then * is called *`): stars are parameter slots, the maximal
//! non-star runs are keywords. A key structure is a normal-form set of
//! patterns, optionally with a sequence grammar over their pragmatics tags.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::text::{is_token, normalize_ws, tag_matches};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KsError {
    #[error("pattern {0}: two slots with no keyword between them")]
    AdjacentSlots(String),
    #[error("pattern {0}: no keyword token")]
    NoKeyword(String),
    #[error("pattern {0}: {1} roles supplied for {2} slots")]
    RoleCountMismatch(String, usize, usize),
    #[error("pattern {0}: duplicate role name {1}")]
    DuplicateRole(String, String),
    #[error("invalid identifier: {0:?}")]
    InvalidIdentifier(String),
    #[error("duplicate pragmatics tag {0}")]
    DuplicatePragmatics(String),
    #[error("duplicate pattern id {0}")]
    DuplicateId(String),
    #[error("empty key structure")]
    EmptyStructure,
    #[error("unknown pragmatics tag {0}")]
    UnknownTag(String),
    #[error("line {0}: {1}")]
    FileSyntax(usize, String),
}

/// One token of a sentence pattern. Slot ordinals are 1-based and contiguous
/// in order of appearance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Token {
    Keyword(String),
    Slot(u32),
}

/// Authoring layer of a pattern. Descriptive in v1: matching is identical
/// across layers, the split exists for grammar reuse and reporting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Layer {
    Core,
    Domain(String),
    Jargon(String),
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Core => write!(f, "core"),
            Layer::Domain(name) => write!(f, "domain:{name}"),
            Layer::Jargon(group) => write!(f, "jargon:{group}"),
        }
    }
}

impl Layer {
    pub fn parse(s: &str) -> Option<Layer> {
        if s == "core" {
            return Some(Layer::Core);
        }
        if let Some(name) = s.strip_prefix("domain:") {
            if !name.is_empty() {
                return Some(Layer::Domain(name.to_string()));
            }
        }
        if let Some(group) = s.strip_prefix("jargon:") {
            if !group.is_empty() {
                return Some(Layer::Jargon(group.to_string()));
            }
        }
        None
    }
}

/// A keyword expression with named slots, a pragmatics tag and a layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePattern {
    pub id: String,
    pub tokens: Vec<Token>,
    /// Role name per slot ordinal; `roles[k-1]` names slot `k`.
    pub roles: Vec<String>,
    pub pragmatics: String,
    pub layer: Layer,
}

impl SentencePattern {
    pub fn slot_count(&self) -> usize {
        self.roles.len()
    }

    pub fn keywords(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().filter_map(|t| match t {
            Token::Keyword(k) => Some(k.as_str()),
            Token::Slot(_) => None,
        })
    }

    /// Total characters across keywords; the match tie-break weight.
    pub fn keyword_char_count(&self) -> usize {
        self.keywords().map(|k| k.chars().count()).sum()
    }

    /// Role name for a slot ordinal.
    pub fn role(&self, ordinal: u32) -> &str {
        &self.roles[(ordinal - 1) as usize]
    }

    /// Render back to star notation (one `*` per slot).
    pub fn render(&self) -> String {
        let parts: Vec<String> = self
            .tokens
            .iter()
            .map(|t| match t {
                Token::Keyword(k) => k.clone(),
                Token::Slot(_) => "*".to_string(),
            })
            .collect();
        parts.join(" ")
    }
}

/// Parse star notation into a pattern.
///
/// A whitespace-separated word consisting solely of `*` characters is one
/// slot (so `*` and `***` are equivalent); maximal runs of other words merge
/// into single whitespace-normalized keywords.
pub fn parse_pattern(
    id: &str,
    spec: &str,
    roles: &[&str],
    pragmatics: &str,
    layer: Layer,
) -> Result<SentencePattern, KsError> {
    for ident in [id, pragmatics] {
        if !is_token(ident) {
            return Err(KsError::InvalidIdentifier(ident.to_string()));
        }
    }
    let mut tokens: Vec<Token> = Vec::new();
    let mut pending_keyword: Vec<&str> = Vec::new();
    let mut next_slot = 1u32;
    let normalized = normalize_ws(spec);
    for word in normalized.split(' ').filter(|w| !w.is_empty()) {
        if word.chars().all(|c| c == '*') {
            if !pending_keyword.is_empty() {
                tokens.push(Token::Keyword(pending_keyword.join(" ")));
                pending_keyword.clear();
            }
            if matches!(tokens.last(), Some(Token::Slot(_))) {
                return Err(KsError::AdjacentSlots(id.to_string()));
            }
            tokens.push(Token::Slot(next_slot));
            next_slot += 1;
        } else {
            pending_keyword.push(word);
        }
    }
    if !pending_keyword.is_empty() {
        tokens.push(Token::Keyword(pending_keyword.join(" ")));
    }
    if !tokens.iter().any(|t| matches!(t, Token::Keyword(_))) {
        return Err(KsError::NoKeyword(id.to_string()));
    }
    let slots = (next_slot - 1) as usize;
    if roles.len() != slots {
        return Err(KsError::RoleCountMismatch(id.to_string(), roles.len(), slots));
    }
    let mut seen = BTreeSet::new();
    for role in roles {
        if !is_token(role) {
            return Err(KsError::InvalidIdentifier(role.to_string()));
        }
        if !seen.insert(*role) {
            return Err(KsError::DuplicateRole(id.to_string(), role.to_string()));
        }
    }
    Ok(SentencePattern {
        id: id.to_string(),
        tokens,
        roles: roles.iter().map(|r| r.to_string()).collect(),
        pragmatics: pragmatics.to_string(),
        layer,
    })
}

/// One constraint of a combination grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeqConstraint {
    /// No element tagged `before` may appear after one tagged `after`.
    Precedes { before: String, after: String },
    /// Every element tagged `first` must be immediately followed by one
    /// tagged `second`.
    Then { first: String, second: String },
}

impl fmt::Display for SeqConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqConstraint::Precedes { before, after } => write!(f, "{before} precedes {after}"),
            SeqConstraint::Then { first, second } => write!(f, "{first} then {second}"),
        }
    }
}

/// Sequence grammar over pragmatics tags: `;`-separated constraints, each
/// `A precedes B` or `A then B`. Tags may name a full tag or a base.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SequenceGrammar {
    pub constraints: Vec<SeqConstraint>,
}

impl SequenceGrammar {
    pub fn parse(s: &str) -> Result<SequenceGrammar, KsError> {
        let mut constraints = Vec::new();
        for clause in s.split(';') {
            let clause = normalize_ws(clause);
            if clause.is_empty() {
                continue;
            }
            let words: Vec<&str> = clause.split(' ').collect();
            match words.as_slice() {
                [a, "precedes", b] => constraints.push(SeqConstraint::Precedes {
                    before: a.to_string(),
                    after: b.to_string(),
                }),
                [a, "then", b] => constraints.push(SeqConstraint::Then {
                    first: a.to_string(),
                    second: b.to_string(),
                }),
                _ => {
                    return Err(KsError::FileSyntax(0, format!("bad constraint {clause:?}")));
                }
            }
        }
        Ok(SequenceGrammar { constraints })
    }

    pub fn render(&self) -> String {
        self.constraints
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Verdict of [`check_sequence`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqCheck {
    Legal,
    /// 0-based position of the first element at which a violation is
    /// detected while scanning left to right.
    Illegal(usize),
}

/// A named, normal-form set of sentence patterns.
///
/// Normal form means one pattern per pragmatics tag (one syntactic
/// representative per semantic construct) and unique pattern ids. Pattern
/// order is significant: it breaks match ties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyStructure {
    pub name: String,
    pub patterns: Vec<SentencePattern>,
    pub combination: Option<SequenceGrammar>,
}

/// Validate and assemble a key structure.
pub fn compile_key_structure(
    name: &str,
    patterns: Vec<SentencePattern>,
    combination: Option<SequenceGrammar>,
) -> Result<KeyStructure, KsError> {
    if patterns.is_empty() {
        return Err(KsError::EmptyStructure);
    }
    let mut ids = BTreeSet::new();
    let mut tags = BTreeSet::new();
    for p in &patterns {
        if !ids.insert(p.id.as_str()) {
            return Err(KsError::DuplicateId(p.id.clone()));
        }
        if !tags.insert(p.pragmatics.as_str()) {
            return Err(KsError::DuplicatePragmatics(p.pragmatics.clone()));
        }
    }
    Ok(KeyStructure {
        name: name.to_string(),
        patterns,
        combination,
    })
}

impl KeyStructure {
    /// Layers present across patterns, deduplicated.
    pub fn layers(&self) -> BTreeSet<Layer> {
        self.patterns.iter().map(|p| p.layer.clone()).collect()
    }

    pub fn pattern(&self, id: &str) -> Option<&SentencePattern> {
        self.patterns.iter().find(|p| p.id == id)
    }

    /// Does `tag` name (exactly or by base) some pattern of this structure?
    pub fn knows_tag(&self, tag: &str) -> bool {
        self.patterns.iter().any(|p| tag_matches(tag, &p.pragmatics))
    }
}

/// Check a pragmatics sequence against the structure's combination grammar.
///
/// Without a grammar every sequence is legal. Grammar tags match elements
/// by full tag or base.
pub fn check_sequence(ks: &KeyStructure, tags: &[&str]) -> Result<SeqCheck, KsError> {
    for tag in tags {
        if !ks.knows_tag(tag) {
            return Err(KsError::UnknownTag(tag.to_string()));
        }
    }
    let grammar = match &ks.combination {
        Some(g) => g,
        None => return Ok(SeqCheck::Legal),
    };
    for (i, tag) in tags.iter().enumerate() {
        for c in &grammar.constraints {
            match c {
                SeqConstraint::Precedes { before, after } => {
                    if tag_matches(before, tag)
                        && tags[..i].iter().any(|t| tag_matches(after, t))
                    {
                        return Ok(SeqCheck::Illegal(i));
                    }
                }
                SeqConstraint::Then { first, second } => {
                    if tag_matches(first, tag)
                        && !tags.get(i + 1).is_some_and(|t| tag_matches(second, t))
                    {
                        return Ok(SeqCheck::Illegal(i));
                    }
                }
            }
        }
    }
    Ok(SeqCheck::Legal)
}

/// Partial order over key structures by pattern-set inclusion.
///
/// Patterns compare by (tokens, pragmatics); a structure whose pattern set
/// is a subset of another's defines a coarser language. Returns `None` for
/// incomparable structures.
pub fn spectrum_cmp(a: &KeyStructure, b: &KeyStructure) -> Option<Ordering> {
    let key = |p: &SentencePattern| (p.tokens.clone(), p.pragmatics.clone());
    let sa: BTreeSet<_> = a.patterns.iter().map(key).collect();
    let sb: BTreeSet<_> = b.patterns.iter().map(key).collect();
    if sa == sb {
        Some(Ordering::Equal)
    } else if sa.is_subset(&sb) {
        Some(Ordering::Less)
    } else if sb.is_subset(&sa) {
        Some(Ordering::Greater)
    } else {
        None
    }
}

/// Parse the key-structure file format.
///
/// One directive per line:
/// `pattern <id> <layer> <pragmatics> :: <spec> :: <role,role,...>` (roles
/// `-` when the pattern has no slots), optional `combination :: <grammar>`,
/// `#` comments and blank lines.
pub fn parse_key_structure_file(name: &str, text: &str) -> Result<KeyStructure, KsError> {
    let mut patterns = Vec::new();
    let mut combination = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("pattern ") {
            let segments: Vec<&str> = rest.split(" :: ").collect();
            if segments.len() != 3 {
                return Err(KsError::FileSyntax(
                    lineno,
                    "expected `pattern <id> <layer> <pragmatics> :: <spec> :: <roles>`".into(),
                ));
            }
            let head: Vec<&str> = segments[0].split_whitespace().collect();
            let [id, layer, pragmatics] = head.as_slice() else {
                return Err(KsError::FileSyntax(
                    lineno,
                    "expected `<id> <layer> <pragmatics>` before first `::`".into(),
                ));
            };
            let layer = Layer::parse(layer)
                .ok_or_else(|| KsError::FileSyntax(lineno, format!("bad layer {layer:?}")))?;
            let roles: Vec<&str> = if segments[2].trim() == "-" {
                Vec::new()
            } else {
                segments[2].split(',').map(str::trim).collect()
            };
            patterns.push(parse_pattern(id, segments[1], &roles, pragmatics, layer)?);
        } else if let Some(rest) = line.strip_prefix("combination ::") {
            combination = Some(SequenceGrammar::parse(rest)?);
        } else {
            return Err(KsError::FileSyntax(lineno, format!("unknown directive {line:?}")));
        }
    }
    compile_key_structure(name, patterns, combination)
}

/// Render a key structure back into the file format.
pub fn render_key_structure_file(ks: &KeyStructure) -> String {
    let mut out = String::new();
    for p in &ks.patterns {
        let roles = if p.roles.is_empty() {
            "-".to_string()
        } else {
            p.roles.join(",")
        };
        out.push_str(&format!(
            "pattern {} {} {} :: {} :: {}\n",
            p.id, p.layer, p.pragmatics, p.render(), roles
        ));
    }
    if let Some(g) = &ks.combination {
        out.push_str(&format!("combination :: {}\n", g.render()));
    }
    out
}
