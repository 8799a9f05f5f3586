//! Pulling JSON out of model text.
//!
//! Models often wrap the requested JSON in prose or code fences. The
//! extractor scans for every balanced `{...}` / `[...]` span (string-aware)
//! and returns the longest one that parses.

use serde_json::Value;

/// Byte ranges of balanced bracket spans starting at each `{` or `[`.
fn balanced_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    for start in 0..bytes.len() {
        if bytes[start] != b'{' && bytes[start] != b'[' {
            continue;
        }
        let mut stack = Vec::new();
        let mut in_string = false;
        let mut escaped = false;
        for (offset, &b) in bytes[start..].iter().enumerate() {
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
                b'{' | b'[' => stack.push(b),
                b'}' | b']' => {
                    let open = if b == b'}' { b'{' } else { b'[' };
                    if stack.pop() != Some(open) {
                        break;
                    }
                    if stack.is_empty() {
                        spans.push((start, start + offset + 1));
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans
}

/// The longest parseable JSON object or array in `text`.
pub fn extract_json(text: &str) -> Option<Value> {
    let mut spans = balanced_spans(text);
    spans.sort_by_key(|&(s, e)| (std::cmp::Reverse(e - s), s));
    spans
        .into_iter()
        .find_map(|(s, e)| serde_json::from_str(&text[s..e]).ok())
}

pub fn extract_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    match extract_json(text)? {
        Value::Object(m) => Some(m),
        _ => None,
    }
}

pub fn extract_array(text: &str) -> Option<Vec<Value>> {
    match extract_json(text)? {
        Value::Array(a) => Some(a),
        _ => None,
    }
}

/// Renders a scalar as plain text (`"1"` for `1`, `"yes"` for `true`).
pub fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(if *b { "yes" } else { "no" }.into()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}
