use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("no JSON found in model response")]
pub struct ExtractError {
    pub raw: String,
}

/// Pulls the JSON payload out of a chat response.
///
/// Tries, in order: the whole text, the contents of code fences, then the
/// first balanced `{...}` or `[...]` span that parses.
pub fn extract_json(text: &str) -> Result<Value, ExtractError> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    for block in fenced_blocks(trimmed) {
        if let Ok(v) = serde_json::from_str(block.trim()) {
            return Ok(v);
        }
    }
    let bytes = trimmed.as_bytes();
    for (start, &c) in bytes.iter().enumerate() {
        if c != b'{' && c != b'[' {
            continue;
        }
        if let Some(end) = balanced_end(&trimmed[start..]) {
            if let Ok(v) = serde_json::from_str(&trimmed[start..start + end]) {
                return Ok(v);
            }
        }
    }
    Err(ExtractError { raw: text.to_string() })
}

/// Every fenced code block that parses as JSON, in order.
pub fn fenced_json(text: &str) -> Vec<Value> {
    fenced_blocks(text).into_iter().filter_map(|b| serde_json::from_str(b.trim()).ok()).collect()
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // Skip the info string (e.g. "json").
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => break,
        }
    }
    out
}

/// Byte length of the balanced bracket span at the start of `s`.
fn balanced_end(s: &str) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => stack.push('}'),
            '[' => stack.push(']'),
            '}' | ']' => {
                if stack.pop() != Some(c) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}
