//! Tiny helpers for the comma-separated formats used by the tools.

use anisofield::{Error, Result};

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn parse_f64(tok: &str) -> Result<f64> {
    tok.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("{tok:?}: {e}")))
}

pub fn parse_opt(tok: &str) -> Result<Option<f64>> {
    if tok.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(tok).map(Some)
    }
}

pub fn parse_usize(tok: &str) -> Result<usize> {
    tok.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("{tok:?}: {e}")))
}

pub fn parse_bool(tok: &str) -> Result<bool> {
    match tok.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(Error::Parse(format!("expected 0 or 1, got {other:?}"))),
    }
}

pub fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Splits a data line into exactly `n` fields.
pub fn fields(line: &str, n: usize) -> Result<Vec<&str>> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != n {
        return Err(Error::Parse(format!("expected {n} columns, got {}: {line:?}", parts.len())));
    }
    Ok(parts)
}

/// Parses every non-header line of `text` with `row`; the first line must
/// equal `header`.
pub fn parse_table<T>(text: &str, header: &str, row: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(row).collect()
}
