//! Brute-force reference matcher.
//!
//! Independent of the production matcher: enumerates *every* combination of
//! word-boundary keyword placements, filters the feasible ones, and picks
//! the lexicographically smallest placement vector (leftmost anchoring,
//! which yields minimal captures). Exponential and proud of it; only used
//! to cross-check the linear-time matcher on small inputs.

use kwf_core::keystructure::{SentencePattern, Token};

/// All word-boundary, ASCII-case-insensitive occurrences of `kw` in `text`.
fn occurrences(text: &str, kw: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let klen = kw.len();
    if klen == 0 || klen > text.len() {
        return out;
    }
    for i in 0..=text.len() - klen {
        if !text.is_char_boundary(i) || !text.is_char_boundary(i + klen) {
            continue;
        }
        if !text[i..i + klen].eq_ignore_ascii_case(kw) {
            continue;
        }
        let left_ok =
            i == 0 || text[..i].chars().next_back().is_some_and(|c| !c.is_alphanumeric());
        let right_ok = i + klen == text.len()
            || text[i + klen..].chars().next().is_some_and(|c| !c.is_alphanumeric());
        if left_ok && right_ok {
            out.push((i, i + klen));
        }
    }
    out
}

/// Trailing `.`, `?` or `!` directly after non-space content is the
/// sentence terminator; otherwise it is ordinary content.
fn terminator_split(text: &str) -> (usize, bool) {
    let mut rev = text.char_indices().rev();
    if let Some((i, last)) = rev.next() {
        if matches!(last, '.' | '?' | '!') {
            if let Some((_, before)) = rev.next() {
                if !before.is_whitespace() {
                    return (i, true);
                }
            }
        }
    }
    (text.len(), false)
}

/// Match result: bindings in slot order plus the chosen keyword spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleMatch {
    pub bindings: Vec<(String, String)>,
    pub keyword_spans: Vec<(usize, usize)>,
}

/// Every keyword of the pattern, in order.
fn keywords(pattern: &SentencePattern) -> Vec<&str> {
    pattern
        .tokens
        .iter()
        .filter_map(|t| match t {
            Token::Keyword(k) => Some(k.as_str()),
            Token::Slot(_) => None,
        })
        .collect()
}

/// Is a placement vector feasible for this pattern and sentence?
fn feasible(
    pattern: &SentencePattern,
    text: &str,
    core_end: usize,
    has_terminator: bool,
    placement: &[(usize, usize)],
) -> bool {
    // ordered and non-overlapping
    for w in placement.windows(2) {
        if w[1].0 < w[0].1 {
            return false;
        }
    }
    let first_is_keyword = matches!(pattern.tokens.first(), Some(Token::Keyword(_)));
    let last_is_keyword = matches!(pattern.tokens.last(), Some(Token::Keyword(_)));
    if first_is_keyword {
        if placement[0].0 != 0 {
            return false;
        }
    } else {
        // leading slot must capture something
        if text[..placement[0].0].trim().is_empty() {
            return false;
        }
    }
    // every gap between consecutive keywords holds exactly one slot
    for w in placement.windows(2) {
        if text[w[0].1..w[1].0].trim().is_empty() {
            return false;
        }
    }
    let last_end = placement.last().unwrap().1;
    if last_is_keyword {
        // nothing may follow but the detached terminator
        if !(last_end == text.len() || (last_end == core_end && has_terminator)) {
            return false;
        }
    } else {
        // trailing slot must capture something before the terminator
        if last_end > core_end || text[last_end..core_end].trim().is_empty() {
            return false;
        }
    }
    true
}

fn captures(
    pattern: &SentencePattern,
    text: &str,
    core_end: usize,
    placement: &[(usize, usize)],
) -> Vec<(String, String)> {
    let mut bindings = Vec::new();
    let mut kw_idx = 0usize;
    let mut pos = 0usize;
    for token in &pattern.tokens {
        match token {
            Token::Keyword(_) => {
                pos = placement[kw_idx].1;
                kw_idx += 1;
            }
            Token::Slot(k) => {
                let end = if kw_idx < placement.len() { placement[kw_idx].0 } else { core_end };
                bindings.push((
                    pattern.role(*k).to_string(),
                    text[pos..end].trim().to_string(),
                ));
            }
        }
    }
    bindings
}

/// Exhaustive match of one pattern against one normalized sentence.
pub fn oracle_match(pattern: &SentencePattern, text: &str) -> Option<OracleMatch> {
    if text.is_empty() {
        return None;
    }
    let (core_end, has_terminator) = terminator_split(text);
    let kws = keywords(pattern);
    let candidates: Vec<Vec<(usize, usize)>> =
        kws.iter().map(|kw| occurrences(text, kw)).collect();
    if candidates.iter().any(|c| c.is_empty()) {
        return None;
    }
    // enumerate the cartesian product in lexicographic order; the first
    // feasible placement is the minimal one
    let mut indices = vec![0usize; candidates.len()];
    loop {
        let placement: Vec<(usize, usize)> =
            indices.iter().zip(&candidates).map(|(&i, c)| c[i]).collect();
        if feasible(pattern, text, core_end, has_terminator, &placement) {
            return Some(OracleMatch {
                bindings: captures(pattern, text, core_end, &placement),
                keyword_spans: placement,
            });
        }
        // odometer increment
        let mut pos = indices.len();
        loop {
            if pos == 0 {
                return None;
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < candidates[pos].len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}
