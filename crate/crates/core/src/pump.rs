//! The knowledge pump: scan tag-delimited regions of a document, keep the
//! sentences that match the key structure, mark their keyword runs in bold,
//! and decompose them into knowledge elements.
//!
//! Three rules apply per region: content should match the key structure at
//! least partly; content matching no part of it is discarded; matching
//! content is decomposed according to key-structure semantics.

use thiserror::Error;

use crate::keystructure::KeyStructure;
use crate::pnlu::{build_hierarchy, match_text, segment, KnowledgeElement, SemanticHierarchy, Source};
use crate::text::sanitize_token;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PumpError {
    #[error("tag name {0:?} is empty or not a plain name")]
    BadTag(String),
    #[error("tag <{0}> opened at byte {1} without a matching close")]
    UnbalancedOpen(String, usize),
    #[error("tag </{0}> closed at byte {1} without a matching open")]
    UnbalancedClose(String, usize),
    #[error("tag <{0}> reopened inside itself at byte {1}")]
    NestedSameTag(String, usize),
}

/// A pump program: which tag to scan for and which key structure to apply.
#[derive(Debug, Clone)]
pub struct PumpSpec {
    tag: String,
    pub ks: KeyStructure,
}

impl PumpSpec {
    /// Tag names are uppercase-normalized and must be plain
    /// ASCII-alphanumeric names (plus `_` and `-`).
    pub fn new(tag: &str, ks: KeyStructure) -> Result<PumpSpec, PumpError> {
        let tag = tag.trim().to_ascii_uppercase();
        if tag.is_empty()
            || !tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(PumpError::BadTag(tag));
        }
        Ok(PumpSpec { tag, ks })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }
}

/// Result of pumping one document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PumpResult {
    /// Matched sentences with each keyword occurrence wrapped in `**`.
    /// Sentences are joined by single spaces, regions by newlines.
    pub marked_text: String,
    pub elements: Vec<KnowledgeElement>,
    pub hierarchy: SemanticHierarchy,
    /// Byte ranges (in the source document) of discarded sentences.
    pub discarded_spans: Vec<(usize, usize)>,
}

/// Byte ranges of the text between `<TAG>` and `</TAG>` pairs, in document
/// order. Same-name nesting is an error; other tags are ordinary text.
pub fn scan_tags(doc: &str, tag: &str) -> Result<Vec<(usize, usize)>, PumpError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut regions = Vec::new();
    let mut cursor = 0usize;
    loop {
        let next_open = doc[cursor..].find(&open).map(|i| cursor + i);
        let next_close = doc[cursor..].find(&close).map(|i| cursor + i);
        let o = match (next_open, next_close) {
            (None, None) => return Ok(regions),
            (None, Some(c)) => return Err(PumpError::UnbalancedClose(tag.to_string(), c)),
            (Some(o), Some(c)) if c < o => {
                return Err(PumpError::UnbalancedClose(tag.to_string(), c));
            }
            (Some(o), _) => o,
        };
        let content_start = o + open.len();
        let close_at = match doc[content_start..].find(&close) {
            Some(i) => content_start + i,
            None => return Err(PumpError::UnbalancedOpen(tag.to_string(), o)),
        };
        if let Some(i) = doc[content_start..].find(&open) {
            let reopen_at = content_start + i;
            if reopen_at < close_at {
                return Err(PumpError::NestedSameTag(tag.to_string(), reopen_at));
            }
        }
        regions.push((content_start, close_at));
        cursor = close_at + close.len();
    }
}

/// Wrap the matched keyword spans of a normalized sentence in `**` markers.
fn mark_sentence(text: &str, spans: &[(usize, usize)]) -> String {
    let mut out = String::with_capacity(text.len() + 4 * spans.len());
    let mut pos = 0usize;
    for &(start, end) in spans {
        out.push_str(&text[pos..start]);
        out.push_str("**");
        out.push_str(&text[start..end]);
        out.push_str("**");
        pos = end;
    }
    out.push_str(&text[pos..]);
    out
}

/// Remove the `**` markers, recovering the matched sentences verbatim.
pub fn strip_marks(marked: &str) -> String {
    marked.replace("**", "")
}

/// The bold keyword runs of a marked text, in order.
pub fn bold_runs(marked: &str) -> Vec<String> {
    let mut runs = Vec::new();
    let mut rest = marked;
    while let Some(start) = rest.find("**") {
        let after = &rest[start + 2..];
        match after.find("**") {
            Some(end) => {
                runs.push(after[..end].to_string());
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    runs
}

/// Pump a document: apply the key structure to every `<TAG>` region.
pub fn pump(doc: &str, spec: &PumpSpec, doc_id: &str) -> Result<PumpResult, PumpError> {
    let doc_token = sanitize_token(doc_id);
    let regions = scan_tags(doc, spec.tag())?;
    let mut result = PumpResult::default();
    let mut marked_regions: Vec<String> = Vec::new();
    for (region_idx, &(start, end)) in regions.iter().enumerate() {
        let region_text = &doc[start..end];
        let mut marked_sentences: Vec<String> = Vec::new();
        for (sentence_idx, sentence) in segment(region_text).iter().enumerate() {
            let abs_range = (start + sentence.range.0, start + sentence.range.1);
            match match_text(&spec.ks, &sentence.text) {
                Some(m) => {
                    marked_sentences.push(mark_sentence(&sentence.text, &m.keyword_spans));
                    result.elements.push(KnowledgeElement {
                        id: format!("{doc_token}#{region_idx}#{sentence_idx}"),
                        pragmatics: m.pragmatics,
                        bindings: m.bindings,
                        pattern_id: m.pattern_id,
                        source: Source {
                            doc: doc_token.clone(),
                            sentence: sentence_idx,
                            range: abs_range,
                        },
                        timestamp: 0,
                        reliability: 0,
                    });
                }
                None => result.discarded_spans.push(abs_range),
            }
        }
        if !marked_sentences.is_empty() {
            marked_regions.push(marked_sentences.join(" "));
        }
    }
    result.marked_text = marked_regions.join("\n");
    result.hierarchy = build_hierarchy(&result.elements);
    Ok(result)
}
