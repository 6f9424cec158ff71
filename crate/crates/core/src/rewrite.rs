//! Lookup-table conversion of candidate code for half-precision execution.
//!
//! Each table row names a dotted function (`torch.linalg.pinv`), a one-line
//! preamble that defines a wrapper running it in full precision, and the
//! wrapper's name. Rewriting replaces every call-site identifier that sits in
//! code (never inside string literals or comments) and prepends each needed
//! preamble once.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use thiserror::Error;

const DEFAULT_TABLE: &str = include_str!("../assets/half_precision.tsv");

#[derive(Debug, Error)]
pub enum TableError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected `source<TAB>preamble<TAB>replacement`")]
    Malformed { line: usize },
    #[error("line {line}: duplicate source identifier `{source_ident}`")]
    Duplicate { line: usize, source_ident: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteEntry {
    pub source: String,
    pub preamble: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteTable {
    /// File order; preambles are emitted in this order.
    entries: Vec<RewriteEntry>,
    /// Indices into `entries`, longest source first.
    match_order: Vec<usize>,
}

impl Default for RewriteTable {
    /// The twelve shipped PyTorch mappings.
    fn default() -> Self {
        Self::parse(DEFAULT_TABLE).expect("bundled table is well-formed")
    }
}

impl RewriteTable {
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [source, preamble, replacement] = parts.as_slice() else {
                return Err(TableError::Malformed { line: i + 1 });
            };
            if source.is_empty() || replacement.is_empty() {
                return Err(TableError::Malformed { line: i + 1 });
            }
            if !seen.insert(source.to_string()) {
                return Err(TableError::Duplicate {
                    line: i + 1,
                    source_ident: source.to_string(),
                });
            }
            entries.push(RewriteEntry {
                source: source.to_string(),
                preamble: preamble.to_string(),
                replacement: replacement.to_string(),
            });
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    fn from_entries(entries: Vec<RewriteEntry>) -> Self {
        let mut match_order: Vec<usize> = (0..entries.len()).collect();
        match_order.sort_by(|&a, &b| {
            entries[b].source.len().cmp(&entries[a].source.len()).then(a.cmp(&b))
        });
        Self { entries, match_order }
    }

    pub fn entries(&self) -> &[RewriteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Result of one rewrite pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewrite {
    pub code: String,
    /// Replacements made per table entry (file order).
    pub counts: Vec<usize>,
}

impl Rewrite {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn to_half_precision(code: &str, table: &RewriteTable) -> String {
    rewrite(code, table).code
}

/// Rewrites `code` and reports how many occurrences of each entry were replaced.
pub fn rewrite(code: &str, table: &RewriteTable) -> Rewrite {
    // Preambles from an earlier pass are peeled off and re-emitted, which makes
    // the transformation idempotent even though preambles mention source names.
    let mut needed = BTreeSet::new();
    let mut body = code;
    loop {
        let (line, rest) = match body.find('\n') {
            Some(i) => (&body[..i], &body[i + 1..]),
            None => break,
        };
        match table.entries.iter().position(|e| e.preamble == line) {
            Some(idx) => {
                needed.insert(idx);
                body = rest;
            }
            None => break,
        }
    }

    let mut counts = vec![0usize; table.len()];
    let mut out = String::with_capacity(body.len() + 64);
    for seg in segments(body) {
        let text = &body[seg.start..seg.end];
        if seg.kind != SegmentKind::Code {
            out.push_str(text);
            continue;
        }
        let bytes = text.as_bytes();
        let mut i = 0;
        let mut copied = 0;
        while i < bytes.len() {
            let boundary_before = if i == 0 {
                seg.start == 0 || !blocks_before(body.as_bytes()[seg.start - 1])
            } else {
                !blocks_before(bytes[i - 1])
            };
            if boundary_before {
                let hit = table.match_order.iter().copied().find(|&idx| {
                    let src = table.entries[idx].source.as_bytes();
                    bytes[i..].starts_with(src)
                        && bytes.get(i + src.len()).is_none_or(|&b| !blocks_after(b))
                });
                if let Some(idx) = hit {
                    let entry = &table.entries[idx];
                    out.push_str(&text[copied..i]);
                    out.push_str(&entry.replacement);
                    i += entry.source.len();
                    copied = i;
                    counts[idx] += 1;
                    needed.insert(idx);
                    continue;
                }
            }
            i += 1;
        }
        out.push_str(&text[copied..]);
    }

    if needed.is_empty() {
        return Rewrite { code: out, counts };
    }
    let mut code = String::with_capacity(out.len() + 80 * needed.len());
    for idx in needed {
        code.push_str(&table.entries[idx].preamble);
        code.push('\n');
    }
    code.push_str(&out);
    Rewrite { code, counts }
}

fn is_ident(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

fn blocks_before(b: u8) -> bool {
    is_ident(b) || b == b'.'
}

fn blocks_after(b: u8) -> bool {
    is_ident(b) || b == b'.'
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Code,
    Comment,
    Str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
}

/// Splits Python-like source into code, `#` comments and string literals
/// (single, double and triple quoted; backslash escapes honoured).
pub fn segments(src: &str) -> Vec<Segment> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut push = |kind, start, end| {
        if start < end {
            out.push(Segment { kind, start, end });
        }
    };
    let mut code_start = 0;
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'#' => {
                push(SegmentKind::Code, code_start, i);
                let end = b[i..].iter().position(|&c| c == b'\n').map_or(b.len(), |p| i + p);
                push(SegmentKind::Comment, i, end);
                i = end;
                code_start = i;
            }
            q @ (b'\'' | b'"') => {
                push(SegmentKind::Code, code_start, i);
                let triple = b[i..].starts_with(&[q, q, q]);
                let start = i;
                i += if triple { 3 } else { 1 };
                loop {
                    if i >= b.len() {
                        break;
                    }
                    match b[i] {
                        b'\\' => i += 2,
                        c if c == q => {
                            if !triple {
                                i += 1;
                                break;
                            }
                            if b[i..].starts_with(&[q, q, q]) {
                                i += 3;
                                break;
                            }
                            i += 1;
                        }
                        // unterminated single-line literal stops at end of line
                        b'\n' if !triple => break,
                        _ => i += 1,
                    }
                }
                i = i.min(b.len());
                push(SegmentKind::Str, start, i);
                code_start = i;
            }
            _ => i += 1,
        }
    }
    push(SegmentKind::Code, code_start, b.len());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_has_twelve_entries() {
        let t = RewriteTable::default();
        assert_eq!(t.len(), 12);
        assert_eq!(t.entries()[0].source, "torch.linalg.pinv");
    }

    #[test]
    fn rewrites_pinv_with_single_preamble() {
        let t = RewriteTable::default();
        let code = "def f(a, b):\n    return torch.linalg.pinv(a) @ torch.linalg.pinv(b)\n";
        let out = to_half_precision(code, &t);
        assert_eq!(
            out,
            "new_pinv = lambda x: torch.linalg.pinv(x.float()).half()\n\
             def f(a, b):\n    return new_pinv(a) @ new_pinv(b)\n"
        );
    }

    #[test]
    fn untouched_code_is_identical() {
        let t = RewriteTable::default();
        let code = "def f(x):\n    return x @ x.T  # plain\n";
        assert_eq!(to_half_precision(code, &t), code);
    }

    #[test]
    fn longest_match_and_boundaries() {
        let t = RewriteTable::default();
        let code = "a = torch.zeros_like(x)\nb = torch.zeros(3)\nc = mytorch.zeros(2)\nd = torch.zeros_ish(1)\ne = torch.linalg.eigvals(m)\n";
        let r = rewrite(code, &t);
        assert!(r.code.contains("a = new_zeros_like(x)"));
        assert!(r.code.contains("b = new_zeros(3)"));
        assert!(r.code.contains("c = mytorch.zeros(2)"));
        assert!(r.code.contains("d = torch.zeros_ish(1)"));
        assert!(r.code.contains("e = new_eigvals(m)"));
        assert_eq!(r.total(), 3);
    }

    #[test]
    fn strings_and_comments_are_preserved() {
        let t = RewriteTable::default();
        let code = "s = 'torch.eye(3)'\n# torch.eye here\nt = \"\"\"torch.ones\n\"\"\"\nu = torch.eye(2)\n";
        let r = rewrite(code, &t);
        assert_eq!(r.total(), 1);
        assert!(r.code.contains("s = 'torch.eye(3)'"));
        assert!(r.code.contains("# torch.eye here"));
        assert!(r.code.contains("\"\"\"torch.ones\n\"\"\""));
        assert!(r.code.contains("u = new_eye(2)"));
    }

    #[test]
    fn double_application_is_identity() {
        let t = RewriteTable::default();
        let code = "import torch\nimport torch.nn.functional as F\n\
                    def g(x, y):\n    m = torch.inverse(x) + torch.linalg.inv(y)\n    return F.one_hot(m)\n";
        let once = to_half_precision(code, &t);
        let twice = to_half_precision(&once, &t);
        assert_eq!(once, twice);
    }

    #[test]
    fn escaped_quotes_stay_inside_literal() {
        let segs = segments(r#"a = "x\"torch.eye" + torch.eye(1)"#);
        let kinds: Vec<_> = segs.iter().map(|s| s.kind).collect();
        assert_eq!(kinds, [SegmentKind::Code, SegmentKind::Str, SegmentKind::Code]);
    }

    #[test]
    fn table_parse_errors() {
        assert!(matches!(RewriteTable::parse("a\tb"), Err(TableError::Malformed { line: 1 })));
        assert!(matches!(
            RewriteTable::parse("a\tp\tr\na\tq\ts\n"),
            Err(TableError::Duplicate { line: 2, .. })
        ));
    }
}
