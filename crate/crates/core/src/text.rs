//! Text normalization and the `«span»` escaping shared by the line formats.
//!
//! All matching and querying in this crate is whitespace-normalized and
//! ASCII-case-insensitive. Non-ASCII characters compare exactly.

/// Collapse every whitespace run to a single space and trim the ends.
pub fn normalize_ws(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_ws = false;
    for ch in s.chars() {
        if ch.is_whitespace() {
            in_ws = true;
        } else {
            if in_ws && !out.is_empty() {
                out.push(' ');
            }
            in_ws = false;
            out.push(ch);
        }
    }
    out
}

/// Normalized, ASCII-lowercased form. Used as index and comparison key.
pub fn norm_key(s: &str) -> String {
    normalize_ws(s).to_ascii_lowercase()
}

/// Equality up to whitespace normalization and ASCII case.
pub fn norm_eq(a: &str, b: &str) -> bool {
    norm_key(a) == norm_key(b)
}

/// The portion of a pragmatics tag before the first `.`.
///
/// Tags may carry a variant suffix (`extensional-definition.etc`) so that a
/// key structure can hold several syntactic forms of one semantic construct
/// while keeping full tags unique. Grouping, content counts and requirement
/// filters operate on the base.
pub fn tag_base(tag: &str) -> &str {
    match tag.find('.') {
        Some(i) => &tag[..i],
        None => tag,
    }
}

/// True when `filter` names `tag` either exactly or by its base.
pub fn tag_matches(filter: &str, tag: &str) -> bool {
    filter == tag || filter == tag_base(tag)
}

/// True for strings usable as space-separated tokens in the line formats.
pub fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.contains(|c: char| c.is_whitespace() || c == '|' || c == '«' || c == '»')
}

/// Replace token-unsafe characters so generated ids stay parseable.
pub fn sanitize_token(s: &str) -> String {
    if is_token(s) {
        return s.to_string();
    }
    let cleaned: String = s
        .chars()
        .map(|c| {
            if c.is_whitespace() || c == '|' || c == '«' || c == '»' {
                '_'
            } else {
                c
            }
        })
        .collect();
    if cleaned.is_empty() {
        "_".to_string()
    } else {
        cleaned
    }
}

/// Escape a span for embedding between `«` and `»`.
pub fn escape_span(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '«' => out.push_str("\\<"),
            '»' => out.push_str("\\>"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// Inverse of [`escape_span`].
pub fn unescape_span(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch == '\\' {
            match chars.next() {
                Some('\\') => out.push('\\'),
                Some('<') => out.push('«'),
                Some('>') => out.push('»'),
                Some('n') => out.push('\n'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(ch);
        }
    }
    out
}

/// Wrap a span in `«»` delimiters, escaping the content.
pub fn quote_span(s: &str) -> String {
    format!("«{}»", escape_span(s))
}

/// Split a protocol line into tokens. A `«...»` quote — standalone or
/// embedded after a `key=` prefix — contributes its unescaped content to the
/// current token, whitespace inside included. Returns `None` on an
/// unterminated quote.
pub fn tokenize(line: &str) -> Option<Vec<String>> {
    let mut tokens = Vec::new();
    let mut chars = line.chars();
    let mut current = String::new();
    let mut started = false;
    loop {
        let Some(ch) = chars.next() else {
            if started {
                tokens.push(current);
            }
            return Some(tokens);
        };
        if ch.is_whitespace() {
            if started {
                tokens.push(std::mem::take(&mut current));
                started = false;
            }
            continue;
        }
        started = true;
        if ch != '«' {
            current.push(ch);
            continue;
        }
        loop {
            match chars.next()? {
                '»' => break,
                '\\' => match chars.next()? {
                    '\\' => current.push('\\'),
                    '<' => current.push('«'),
                    '>' => current.push('»'),
                    'n' => current.push('\n'),
                    other => {
                        current.push('\\');
                        current.push(other);
                    }
                },
                c => current.push(c),
            }
        }
    }
}
