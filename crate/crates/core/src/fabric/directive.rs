//! `#native:` directives: comment lines in candidate code that route execution
//! to a built-in algorithm.
//!
//! ```text
//! #native: gda dims=8
//! #native: ape_select
//! ```
//!
//! Selection names: `ape_select`, `first_channels`, `select_fail`,
//! `select_dup`, `select_sleep ms=N`, `select_spin`.
//! Logits names: `zero_shot`, `tip_adapter`, `ape`, `gda`, `fail`, `nan`,
//! `sleep ms=N`, `spin`. Logits directives accept `dims=N`, which restricts
//! every tensor to the first `N` channels.

use std::collections::BTreeMap;

use super::protocol::{ErrorKind, ServiceError};

pub const DIRECTIVE_PREFIX: &str = "#native:";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectDirective {
    ApeSelect,
    FirstChannels,
    Fail,
    Duplicate,
    Sleep { ms: u64 },
    Spin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitsKind {
    ZeroShot,
    TipAdapter,
    Ape,
    Gda,
    Fail,
    Nan,
    Sleep { ms: u64 },
    Spin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogitsDirective {
    pub kind: LogitsKind,
    pub dims: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Raw {
    name: String,
    params: BTreeMap<String, String>,
}

fn raw_directives(code: &str) -> Result<Vec<Raw>, ServiceError> {
    let mut out = Vec::new();
    for line in code.lines() {
        let Some(rest) = line.trim().strip_prefix(DIRECTIVE_PREFIX) else {
            continue;
        };
        let mut words = rest.split_whitespace();
        let Some(name) = words.next() else {
            return Err(bad("empty directive"));
        };
        let mut params = BTreeMap::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed directive parameter `{w}`")))?;
            params.insert(k.to_string(), v.to_string());
        }
        out.push(Raw { name: name.to_string(), params });
    }
    Ok(out)
}

fn bad(msg: impl Into<String>) -> ServiceError {
    ServiceError::new(ErrorKind::CandidateError, msg)
}

fn int_param(raw: &Raw, key: &str) -> Result<Option<u64>, ServiceError> {
    raw.params
        .get(key)
        .map(|v| {
            v.parse::<u64>()
                .map_err(|_| bad(format!("`{}`: {key}={v} is not an integer", raw.name)))
        })
        .transpose()
}

fn select_of(raw: &Raw) -> Result<Option<SelectDirective>, ServiceError> {
    Ok(Some(match raw.name.as_str() {
        "ape_select" => SelectDirective::ApeSelect,
        "first_channels" => SelectDirective::FirstChannels,
        "select_fail" => SelectDirective::Fail,
        "select_dup" => SelectDirective::Duplicate,
        "select_spin" => SelectDirective::Spin,
        "select_sleep" => SelectDirective::Sleep { ms: int_param(raw, "ms")?.unwrap_or(0) },
        _ => return Ok(None),
    }))
}

fn logits_of(raw: &Raw) -> Result<Option<LogitsDirective>, ServiceError> {
    let kind = match raw.name.as_str() {
        "zero_shot" => LogitsKind::ZeroShot,
        "tip_adapter" => LogitsKind::TipAdapter,
        "ape" => LogitsKind::Ape,
        "gda" => LogitsKind::Gda,
        "fail" => LogitsKind::Fail,
        "nan" => LogitsKind::Nan,
        "spin" => LogitsKind::Spin,
        "sleep" => LogitsKind::Sleep { ms: int_param(raw, "ms")?.unwrap_or(0) },
        _ => return Ok(None),
    };
    let dims = int_param(raw, "dims")?.map(|n| n as usize);
    if dims == Some(0) {
        return Err(bad("dims must be positive"));
    }
    Ok(Some(LogitsDirective { kind, dims }))
}

fn first_known<T>(
    code: &str,
    service: &str,
    pick: impl Fn(&Raw) -> Result<Option<T>, ServiceError>,
    other: impl Fn(&Raw) -> Result<Option<()>, ServiceError>,
) -> Result<T, ServiceError> {
    let raws = raw_directives(code)?;
    for raw in &raws {
        if let Some(d) = pick(raw)? {
            return Ok(d);
        }
        if other(raw)?.is_none() {
            return Err(bad(format!("unknown native directive `{}`", raw.name)));
        }
    }
    Err(bad(format!(
        "no {service} directive: the native backend only executes `{DIRECTIVE_PREFIX}` lines"
    )))
}

/// The first selection directive in `code`.
pub fn parse_select(code: &str) -> Result<SelectDirective, ServiceError> {
    first_known(code, "feature-selection", select_of, |r| Ok(logits_of(r)?.map(|_| ())))
}

/// The first logits directive in `code`.
pub fn parse_logits(code: &str) -> Result<LogitsDirective, ServiceError> {
    first_known(code, "logits", logits_of, |r| Ok(select_of(r)?.map(|_| ())))
}
