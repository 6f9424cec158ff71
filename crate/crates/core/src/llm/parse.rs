use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no brace-delimited thoughts found in response")]
    NoThoughts,
    #[error("no fenced code block found in response")]
    NoCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAlgorithm {
    pub thoughts: String,
    pub code: String,
}

/// Canonical response layout understood by [`parse_algorithm`].
pub fn render_algorithm(thoughts: &str, code: &str) -> String {
    format!("{{{thoughts}}}\n```python\n{code}\n```\n")
}

/// Extracts the first fenced code block and the first brace-delimited span
/// outside any code block.
pub fn parse_algorithm(response: &str) -> Result<ParsedAlgorithm, ParseError> {
    let (code, fence_spans) = first_code_block(response);
    let thoughts = first_brace_span(response, &fence_spans).ok_or(ParseError::NoThoughts)?;
    let thoughts = thoughts.trim();
    if thoughts.is_empty() {
        return Err(ParseError::NoThoughts);
    }
    let code = code.filter(|c| !c.trim().is_empty()).ok_or(ParseError::NoCode)?;
    Ok(ParsedAlgorithm {
        thoughts: thoughts.to_string(),
        code: code.to_string(),
    })
}

/// Returns the content of the first closed fence plus the byte spans of all
/// fenced regions (closed or not), which are ignored when looking for thoughts.
fn first_code_block(text: &str) -> (Option<&str>, Vec<(usize, usize)>) {
    let mut spans = Vec::new();
    let mut first = None;
    let mut from = 0;
    while let Some(rel) = text[from..].find("```") {
        let open = from + rel;
        let body_start = match text[open + 3..].find('\n') {
            Some(nl) => open + 3 + nl + 1,
            None => {
                spans.push((open, text.len()));
                break;
            }
        };
        let close = if text[body_start..].starts_with("```") {
            Some((body_start, body_start))
        } else {
            text[body_start..]
                .find("\n```")
                .map(|p| (body_start + p, body_start + p + 1))
        };
        match close {
            Some((content_end, fence_at)) => {
                if first.is_none() {
                    first = Some(&text[body_start..content_end]);
                }
                let end = fence_at + 3;
                spans.push((open, end));
                from = end;
            }
            None => {
                spans.push((open, text.len()));
                break;
            }
        }
    }
    (first, spans)
}

fn first_brace_span<'a>(text: &'a str, skip: &[(usize, usize)]) -> Option<&'a str> {
    let inside = |i: usize| skip.iter().any(|&(a, b)| i >= a && i < b);
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' && !inside(i) {
            let mut depth = 0usize;
            for (j, &b) in bytes.iter().enumerate().skip(i) {
                match b {
                    b'{' => depth += 1,
                    b'}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&text[i + 1..j]);
                        }
                    }
                    _ => {}
                }
            }
            return None;
        }
        i += 1;
    }
    None
}
