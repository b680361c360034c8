//! Line-based `key=value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored. Keys must be unique. Values keep internal whitespace but are
//! trimmed at the ends, so `lr = 0.001` and `lr=0.001` read the same.
//! Emission writes entries in the order given, which callers keep sorted
//! for reproducible output.

use std::path::Path;

use crate::error::{Error, Result};

/// Parses config text into `(key, value)` pairs in file order.
pub fn parse_str(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key=value`, got `{line}`",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if out.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Renders pairs back to config text, one `key=value` line per entry.
pub fn emit(entries: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in entries {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>> {
    parse_str(&std::fs::read_to_string(path)?)
}

pub fn save(path: &Path, entries: &[(String, String)]) -> Result<()> {
    Ok(std::fs::write(path, emit(entries))?)
}

/// Looks up `key`, failing with a message naming it when absent.
pub fn get_str<'a>(entries: &'a [(String, String)], key: &str) -> Result<&'a str> {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Config(format!("missing key `{key}`")))
}

pub fn get_usize(entries: &[(String, String)], key: &str) -> Result<usize> {
    let v = get_str(entries, key)?;
    v.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a nonnegative integer")))
}

pub fn get_f64(entries: &[(String, String)], key: &str) -> Result<f64> {
    let v = get_str(entries, key)?;
    v.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number")))
}
