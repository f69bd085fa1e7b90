//! Recovery of a JSON object from free-form model output.
//!
//! Models asked for JSON still wrap it in markdown fences, prefix it with
//! chatter, leave trailing commas, or echo the `# comment` annotations from the
//! output examples. This module scans for the first balanced top-level object
//! and cleans those artifacts before handing it to `serde_json`.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PayloadError {
    #[error("no JSON object found in model output")]
    NoJsonFound { raw: String },
    #[error("malformed JSON in model output: {reason}")]
    MalformedJson { raw: String, reason: String },
}

impl PayloadError {
    /// The model text that failed to parse.
    pub fn raw(&self) -> &str {
        match self {
            PayloadError::NoJsonFound { raw } | PayloadError::MalformedJson { raw, .. } => raw,
        }
    }
}

/// Extracts the first top-level JSON object from `raw`.
pub fn extract_json_payload(raw: &str) -> Result<Value, PayloadError> {
    let search_space = fenced_block(raw).unwrap_or(raw);
    let candidate = match balanced_object(search_space) {
        Some(c) => c,
        // A fence may hold something other than the object; fall back to the whole text.
        None => balanced_object(raw).ok_or_else(|| {
            if raw.contains('{') {
                PayloadError::MalformedJson {
                    raw: raw.to_owned(),
                    reason: "unbalanced braces".into(),
                }
            } else {
                PayloadError::NoJsonFound { raw: raw.to_owned() }
            }
        })?,
    };
    let cleaned = strip_comments_and_trailing_commas(candidate);
    serde_json::from_str(&cleaned).map_err(|e| PayloadError::MalformedJson {
        raw: raw.to_owned(),
        reason: e.to_string(),
    })
}

fn fenced_block(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let after = &raw[start + 3..];
    // Skip the info string (e.g. `json`) up to the end of the fence line.
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

fn balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, ch) in text[start..].char_indices() {
        if in_string {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(&text[start..start + offset + ch.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Removes `#`/`//` line comments and commas directly before `}` or `]`,
/// leaving string contents untouched.
fn strip_comments_and_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if in_string {
            out.push(ch);
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            i += 1;
            continue;
        }
        match ch {
            '"' => {
                in_string = true;
                out.push(ch);
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            ',' => {
                let next = chars[i + 1..]
                    .iter()
                    .position(|c| !c.is_whitespace())
                    .map(|p| chars[i + 1 + p]);
                let next_is_comment = matches!(next, Some('#') | Some('/'));
                if next_is_comment {
                    // Look past the comment for the closing bracket.
                    let mut j = i + 1;
                    loop {
                        while j < chars.len() && chars[j].is_whitespace() {
                            j += 1;
                        }
                        if j < chars.len() && (chars[j] == '#' || chars[j] == '/') {
                            while j < chars.len() && chars[j] != '\n' {
                                j += 1;
                            }
                        } else {
                            break;
                        }
                    }
                    if !matches!(chars.get(j), Some('}') | Some(']')) {
                        out.push(ch);
                    }
                } else if !matches!(next, Some('}') | Some(']')) {
                    out.push(ch);
                }
            }
            _ => out.push(ch),
        }
        i += 1;
    }
    out
}
