//! Pseudo-natural-language understanding: sentence segmentation, pattern
//! matching and decomposition into knowledge elements.
//!
//! Matching is deliberately shallow. A sentence is understood exactly as far
//! as the key structure reaches: keywords must appear in order as
//! word-boundary matches, every star captures the minimal nonempty text
//! between its surrounding keywords, and nothing outside the pattern is
//! interpreted. Everything here is pure and deterministic.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::keystructure::{KeyStructure, SentencePattern, Token};
use crate::text::{
    is_token, normalize_ws, quote_span, sanitize_token, tag_base, unescape_span,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PnluError {
    #[error("bad element line: {0}")]
    BadElementLine(String),
}

/// A segmented sentence: normalized text plus its byte range in the source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub range: (usize, usize),
}

/// Provenance of one knowledge element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Source {
    pub doc: String,
    pub sentence: usize,
    pub range: (usize, usize),
}

impl Source {
    pub fn render(&self) -> String {
        format!("{}:{}:{}-{}", self.doc, self.sentence, self.range.0, self.range.1)
    }

    pub fn parse(s: &str) -> Option<Source> {
        let mut it = s.rsplitn(3, ':');
        let range = it.next()?;
        let sentence = it.next()?.parse().ok()?;
        let doc = it.next()?.to_string();
        let (a, b) = range.split_once('-')?;
        Some(Source {
            doc,
            sentence,
            range: (a.parse().ok()?, b.parse().ok()?),
        })
    }
}

/// One matched sentence decomposed into role bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeElement {
    pub id: String,
    pub pragmatics: String,
    /// Role name → captured span, in slot order.
    pub bindings: Vec<(String, String)>,
    pub pattern_id: String,
    pub source: Source,
    /// Logical ingestion instant; 0 until stamped at ingestion.
    pub timestamp: u64,
    /// Dependability rank; greater wins conflicts. 0 by default.
    pub reliability: i32,
}

impl KnowledgeElement {
    pub fn binding(&self, role: &str) -> Option<&str> {
        self.bindings
            .iter()
            .find(|(r, _)| r == role)
            .map(|(_, v)| v.as_str())
    }

    /// The role that identifies what this element is about:
    /// `concept` if present, else `subject`, else the first role.
    pub fn key_role(&self) -> Option<&str> {
        for preferred in ["concept", "subject"] {
            if self.bindings.iter().any(|(r, _)| r == preferred) {
                return Some(preferred);
            }
        }
        self.bindings.first().map(|(r, _)| r.as_str())
    }

    pub fn key_binding(&self) -> Option<&str> {
        self.key_role().and_then(|r| self.binding(r))
    }

    /// Identity used for duplicate collapsing: pragmatics plus full bindings.
    pub fn content_key(&self) -> (String, Vec<(String, String)>) {
        (self.pragmatics.clone(), self.bindings.clone())
    }

    /// Canonical one-line serialization.
    pub fn render_line(&self) -> String {
        let mut line = format!(
            "elem {} {} {} {} r{} t{}",
            self.id,
            self.pragmatics,
            self.pattern_id,
            self.source.render(),
            self.reliability,
            self.timestamp
        );
        for (role, span) in &self.bindings {
            line.push_str(&format!(" | {}={}", role, quote_span(span)));
        }
        line
    }

    /// Parse [`render_line`] output.
    pub fn parse_line(line: &str) -> Result<KnowledgeElement, PnluError> {
        let bad = || PnluError::BadElementLine(line.to_string());
        let mut parts = line.split(" | ");
        let head = parts.next().ok_or_else(bad)?;
        let toks: Vec<&str> = head.split_whitespace().collect();
        let ["elem", id, pragmatics, pattern_id, source, rel, ts] = toks.as_slice() else {
            return Err(bad());
        };
        let source = Source::parse(source).ok_or_else(bad)?;
        let reliability = rel.strip_prefix('r').and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let timestamp = ts.strip_prefix('t').and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let mut bindings = Vec::new();
        for part in parts {
            let (role, rest) = part.split_once("=«").ok_or_else(bad)?;
            let span = rest.strip_suffix('»').ok_or_else(bad)?;
            if !is_token(role) {
                return Err(bad());
            }
            bindings.push((role.to_string(), unescape_span(span)));
        }
        Ok(KnowledgeElement {
            id: id.to_string(),
            pragmatics: pragmatics.to_string(),
            bindings,
            pattern_id: pattern_id.to_string(),
            source,
            timestamp,
            reliability,
        })
    }
}

/// Elements grouped by pragmatics base tag, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SemanticHierarchy {
    /// Base tag → element ids, both in first-appearance order.
    pub groups: Vec<(String, Vec<String>)>,
}

impl SemanticHierarchy {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, tag: &str) -> Option<&[String]> {
        self.groups
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, ids)| ids.as_slice())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (tag, ids) in &self.groups {
            out.push_str(&format!("group {} {}\n", tag, ids.len()));
            for id in ids {
                out.push_str(&format!("  {}\n", id));
            }
        }
        out
    }
}

/// Split text into sentences at `.`, `?`, `!` followed by whitespace or end,
/// and at blank lines. Terminators stay with their sentence, ranges refer to
/// the original text. Empty input yields an empty list.
pub fn segment(text: &str) -> Vec<Sentence> {
    let bytes = text.as_bytes();
    let mut sentences = Vec::new();
    let mut piece_start = 0usize;
    let push_piece = |start: usize, end: usize, sentences: &mut Vec<Sentence>| {
        let raw = &text[start..end];
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return;
        }
        let lead = raw.len() - raw.trim_start().len();
        let trail = raw.len() - raw.trim_end().len();
        sentences.push(Sentence {
            text: normalize_ws(trimmed),
            range: (start + lead, end - trail),
        });
    };
    let mut i = 0usize;
    while i < bytes.len() {
        let b = bytes[i];
        if matches!(b, b'.' | b'?' | b'!') {
            let next = bytes.get(i + 1);
            if next.is_none() || next.is_some_and(|c| c.is_ascii_whitespace()) {
                push_piece(piece_start, i + 1, &mut sentences);
                piece_start = i + 1;
            }
            i += 1;
        } else if b == b'\n' {
            // blank line: a newline followed by optional spaces and a newline
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j], b' ' | b'\t' | b'\r') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                push_piece(piece_start, i, &mut sentences);
                piece_start = i + 1;
            }
            i += 1;
        } else {
            i += 1;
        }
    }
    push_piece(piece_start, text.len(), &mut sentences);
    sentences
}

/// Outcome of matching one pattern against one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceMatch {
    pub pattern_id: String,
    pub pragmatics: String,
    pub bindings: Vec<(String, String)>,
    /// Byte spans of the matched keyword occurrences in the normalized text.
    pub keyword_spans: Vec<(usize, usize)>,
    /// Trailing terminator of the sentence, when detached from content.
    pub terminator: Option<char>,
    /// True when the final keyword itself ends the sentence (its last
    /// character is the terminator, as with a trailing `etc.`).
    pub consumed_terminator: bool,
}

fn is_boundary_char(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Leftmost ASCII-case-insensitive occurrence of `kw` in `text` at byte
/// position >= `from`, delimited by word boundaries, for which `accept`
/// holds.
fn find_keyword(
    text: &str,
    kw: &str,
    from: usize,
    mut accept: impl FnMut(usize, usize) -> bool,
) -> Option<(usize, usize)> {
    let klen = kw.len();
    if klen == 0 {
        return None;
    }
    let mut i = from;
    while i + klen <= text.len() {
        if !text.is_char_boundary(i) {
            i += 1;
            continue;
        }
        let end = i + klen;
        if text.is_char_boundary(end) && text[i..end].eq_ignore_ascii_case(kw) {
            let left_ok = i == 0 || text[..i].chars().next_back().is_none_or(is_boundary_char);
            let right_ok =
                end == text.len() || text[end..].chars().next().is_none_or(is_boundary_char);
            if left_ok && right_ok && accept(i, end) {
                return Some((i, end));
            }
        }
        i += 1;
    }
    None
}

/// Terminator handling: a trailing `.`, `?` or `!` counts as the sentence
/// terminator only when it directly follows content (no space before it).
fn split_terminator(text: &str) -> (usize, Option<char>) {
    let mut chars = text.char_indices().rev();
    if let Some((i, last)) = chars.next() {
        if matches!(last, '.' | '?' | '!') {
            if let Some((_, before)) = chars.next() {
                if !before.is_whitespace() {
                    return (i, Some(last));
                }
            }
        }
    }
    (text.len(), None)
}

fn match_one(pattern: &SentencePattern, text: &str) -> Option<SentenceMatch> {
    if text.is_empty() {
        return None;
    }
    let (core_end, terminator) = split_terminator(text);
    let mut bindings = Vec::new();
    let mut keyword_spans = Vec::new();
    let mut pos = 0usize;
    let mut consumed_terminator = false;
    let n = pattern.tokens.len();
    for (ti, token) in pattern.tokens.iter().enumerate() {
        match token {
            Token::Keyword(kw) => {
                let first = ti == 0;
                let last = ti == n - 1;
                let prev_slot = ti > 0; // tokens alternate, so the previous token is a slot
                let slot_start = pos;
                let (start, end) = find_keyword(text, kw, pos, |s, e| {
                    if first && s != 0 {
                        return false;
                    }
                    if prev_slot && text[slot_start..s].trim().is_empty() {
                        return false;
                    }
                    if last {
                        // nothing may follow but the detached terminator
                        e == text.len() || (e == core_end && terminator.is_some())
                    } else {
                        true
                    }
                })?;
                if prev_slot {
                    let role = match pattern.tokens[ti - 1] {
                        Token::Slot(k) => pattern.role(k),
                        Token::Keyword(_) => unreachable!("tokens alternate"),
                    };
                    bindings.push((role.to_string(), text[slot_start..start].trim().to_string()));
                }
                if last && end == text.len() && terminator.is_some() && end > core_end {
                    consumed_terminator = true;
                }
                keyword_spans.push((start, end));
                pos = end;
            }
            Token::Slot(k) => {
                if ti == n - 1 {
                    let capture = text[pos..core_end].trim();
                    if capture.is_empty() {
                        return None;
                    }
                    bindings.push((pattern.role(*k).to_string(), capture.to_string()));
                }
                // interior slots are captured when the following keyword lands
            }
        }
    }
    Some(SentenceMatch {
        pattern_id: pattern.id.clone(),
        pragmatics: pattern.pragmatics.clone(),
        bindings,
        keyword_spans,
        terminator,
        consumed_terminator,
    })
}

/// Match a normalized sentence against every pattern of the structure.
///
/// When several patterns match, the one with the greatest total keyword
/// character count wins; ties fall to declaration order.
pub fn match_text(ks: &KeyStructure, text: &str) -> Option<SentenceMatch> {
    let mut best: Option<(usize, SentenceMatch)> = None;
    for pattern in &ks.patterns {
        let weight = pattern.keyword_char_count();
        if best.as_ref().is_some_and(|(w, _)| *w >= weight) {
            continue; // cannot beat the current winner; order breaks ties
        }
        if let Some(m) = match_one(pattern, text) {
            best = Some((weight, m));
        }
    }
    best.map(|(_, m)| m)
}

/// Single-sentence front end over [`match_text`]: builds an element with
/// placeholder identity. [`extract`] and the pump assign ids and provenance.
pub fn match_sentence(ks: &KeyStructure, sentence: &Sentence) -> Option<KnowledgeElement> {
    match_text(ks, &sentence.text).map(|m| KnowledgeElement {
        id: String::new(),
        pragmatics: m.pragmatics,
        bindings: m.bindings,
        pattern_id: m.pattern_id,
        source: Source {
            doc: String::new(),
            sentence: 0,
            range: sentence.range,
        },
        timestamp: 0,
        reliability: 0,
    })
}

/// Rebuild the normalized sentence from a match: captures interleaved with
/// keywords, plus the terminator. Inverse of matching.
pub fn reconstruct(pattern: &SentencePattern, m: &SentenceMatch) -> String {
    let mut parts = Vec::new();
    for token in &pattern.tokens {
        match token {
            Token::Keyword(kw) => parts.push(kw.clone()),
            Token::Slot(k) => parts.push(
                m.bindings
                    .iter()
                    .find(|(r, _)| r == pattern.role(*k))
                    .map(|(_, v)| v.clone())
                    .unwrap_or_default(),
            ),
        }
    }
    let mut out = parts.join(" ");
    if let (Some(t), false) = (m.terminator, m.consumed_terminator) {
        out.push(t);
    }
    out
}

/// Run the matcher over every sentence of `text` and collect elements and
/// their semantic hierarchy. Non-matching sentences are ignored.
pub fn extract(
    ks: &KeyStructure,
    text: &str,
    doc_id: &str,
) -> (Vec<KnowledgeElement>, SemanticHierarchy) {
    let doc = sanitize_token(doc_id);
    let mut elements = Vec::new();
    for (idx, sentence) in segment(text).iter().enumerate() {
        if let Some(m) = match_text(ks, &sentence.text) {
            elements.push(KnowledgeElement {
                id: format!("{doc}#{idx}"),
                pragmatics: m.pragmatics,
                bindings: m.bindings,
                pattern_id: m.pattern_id,
                source: Source {
                    doc: doc.clone(),
                    sentence: idx,
                    range: sentence.range,
                },
                timestamp: 0,
                reliability: 0,
            });
        }
    }
    let hierarchy = build_hierarchy(&elements);
    (elements, hierarchy)
}

/// Group elements by pragmatics base tag in order of first appearance.
pub fn build_hierarchy(elements: &[KnowledgeElement]) -> SemanticHierarchy {
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    for e in elements {
        let base = tag_base(&e.pragmatics);
        match groups.iter_mut().find(|(t, _)| t == base) {
            Some((_, ids)) => ids.push(e.id.clone()),
            None => groups.push((base.to_string(), vec![e.id.clone()])),
        }
    }
    SemanticHierarchy { groups }
}

/// Render elements one per line.
pub fn render_elements(elements: &[KnowledgeElement]) -> String {
    let mut out = String::new();
    for e in elements {
        out.push_str(&e.render_line());
        out.push('\n');
    }
    out
}

/// Parse a `.kel` document: one element line per non-empty, non-comment line.
pub fn parse_elements(text: &str) -> Result<Vec<KnowledgeElement>, PnluError> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(KnowledgeElement::parse_line(line)?);
    }
    Ok(out)
}

/// Distinct pragmatics base tags of a set of elements, in first appearance
/// order.
pub fn base_tags(elements: &[KnowledgeElement]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in elements {
        let base = tag_base(&e.pragmatics);
        if seen.insert(base.to_string()) {
            out.push(base.to_string());
        }
    }
    out
}
