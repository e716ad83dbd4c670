//! Locating JSON inside free-form model output.

use serde_json::Value;

/// Returns the first outermost brace-balanced span that parses as JSON.
///
/// Spans are found by matching braces outside double-quoted strings. A span
/// that fails to parse is skipped whole, so an object nested inside a
/// malformed one is never returned in its place. An unterminated `{` ends
/// the search.
pub fn extract_json(raw: &str) -> Option<Value> {
    let bytes = raw.as_bytes();
    let mut start = 0;
    while let Some(offset) = raw[start..].find('{') {
        let open = start + offset;
        let close = matching_brace(bytes, open)?;
        if let Ok(value) = serde_json::from_str::<Value>(&raw[open..=close]) {
            return Some(value);
        }
        start = close + 1;
    }
    None
}

fn matching_brace(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Best-effort repair of common near-JSON: single-quoted strings, trailing
/// commas and Python literals. Interactive use only; evaluation never repairs.
pub fn repair_json(raw: &str) -> Option<Value> {
    if let Some(v) = extract_json(raw) {
        return Some(v);
    }
    let open = raw.find('{')?;
    let close = raw.rfind('}')?;
    if close <= open {
        return None;
    }
    let mut text = String::with_capacity(close - open + 1);
    let mut in_double = false;
    let mut in_single = false;
    let mut chars = raw[open..=close].chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if !in_single => {
                in_double = !in_double;
                text.push(c);
            }
            '\'' if !in_double => {
                in_single = !in_single;
                text.push('"');
            }
            '"' if in_single => text.push_str("\\\""),
            ',' if !in_double && !in_single => {
                let mut lookahead = chars.clone();
                while lookahead.peek().is_some_and(|c| c.is_whitespace()) {
                    lookahead.next();
                }
                if !matches!(lookahead.peek(), Some('}') | Some(']')) {
                    text.push(',');
                }
            }
            _ => text.push(c),
        }
    }
    let text = replace_bare_words(&text);
    serde_json::from_str(&text).ok()
}

fn replace_bare_words(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        match word.as_str() {
            "True" => out.push_str("true"),
            "False" => out.push_str("false"),
            "None" => out.push_str("null"),
            w => out.push_str(w),
        }
        word.clear();
    };
    for c in text.chars() {
        if in_string {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        if c.is_ascii_alphabetic() {
            word.push(c);
            continue;
        }
        flush(&mut word, &mut out);
        if c == '"' {
            in_string = true;
        }
        out.push(c);
    }
    flush(&mut word, &mut out);
    out
}
