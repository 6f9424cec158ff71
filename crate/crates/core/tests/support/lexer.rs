//! Independent tokenizer and corpus generator for checking the rewriter.

use adaptsearch::rewrite::RewriteTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

/// Python-ish lexer: triple/single-quoted strings, comments and maximal
/// dotted names. Anything else is punctuation we do not care about.
pub fn lexer() -> Regex {
    Regex::new(
        r#"(?s)(?P<str>"""(?:\\.|.)*?"""|'''(?:\\.|.)*?'''|"(?:\\.|[^"\\\n])*"|'(?:\\.|[^'\\\n])*')|(?P<comment>#[^\n]*)|(?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)"#,
    )
    .unwrap()
}

pub fn name_counts(code: &str, sources: &[String]) -> Vec<usize> {
    let mut counts = vec![0; sources.len()];
    for cap in lexer().captures_iter(code) {
        if let Some(m) = cap.name("name") {
            if let Some(i) = sources.iter().position(|s| s == m.as_str()) {
                counts[i] += 1;
            }
        }
    }
    counts
}

pub fn literals(code: &str) -> Vec<String> {
    lexer()
        .captures_iter(code)
        .filter_map(|c| c.name("str").or_else(|| c.name("comment")).map(|m| m.as_str().to_string()))
        .collect()
}

pub fn corpus(table: &RewriteTable, seed: u64, lines: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources: Vec<&str> = table.entries().iter().map(|e| e.source.as_str()).collect();
    let decoys = [
        "torch.zeros_likes", "my_torch.eye", "torch.eyes", "torch.svd_lowrank", "xF.one_hot",
        "torch.linalg.pinvh", "torch.onesie", "a.torch.inverse", "torch.inverse_fn", "F.one_hot2",
    ];
    let mut out = String::from("import torch\nimport torch.nn.functional as F\n\n\ndef compute(x, y):\n");
    for n in 0..lines {
        let src = sources[rng.random_range(0..sources.len())];
        let other = sources[rng.random_range(0..sources.len())];
        let decoy = decoys[rng.random_range(0..decoys.len())];
        let line = match rng.random_range(0..7) {
            0 => format!("    v{n} = {src}(x) + {other}(y)"),
            1 => format!("    v{n} = {decoy}(x)  # uses {src} on purpose"),
            2 => format!("    s{n} = \"call {src}(x) here\"; w{n} = {src}(y)"),
            3 => format!("    t{n} = '''multi\n    {other}(z)\n    ''' + str({src}(x))"),
            4 => format!("    u{n} = [{src}(a) for a in ({other}(x), {decoy}(y))]"),
            5 => format!("    r{n} = 'it\\'s {src}' if {src}(x).sum() > 0 else {other}(x)"),
            _ => format!("    q{n} = {src}({other}(x)).t()"),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("    return x\n");
    out
}

pub fn strip_preamble<'a>(code: &'a str, table: &RewriteTable) -> &'a str {
    let mut rest = code;
    while let Some((line, tail)) = rest.split_once('\n') {
        if table.entries().iter().any(|e| e.preamble == line) {
            rest = tail;
        } else {
            break;
        }
    }
    rest
}
