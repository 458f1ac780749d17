//! `key=value` config files, merged into the argument list as long flags.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key = value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got `{line}`", no + 1);
        };
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() || key == "config" {
            bail!("config line {}: invalid key `{}`", no + 1, k.trim());
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn flag_given(args: &[OsString], key: &str) -> bool {
    let long = format!("--{key}");
    let with_eq = format!("--{key}=");
    args.iter().any(|a| a.to_str().is_some_and(|s| s == long || s.starts_with(&with_eq)))
}

/// Finds `--config FILE` (or `--config=FILE`) in `args`.
fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Appends every config entry whose flag is absent from `args`, so flags
/// given on the command line take precedence. A value of `true` becomes a
/// bare switch and `false` drops the entry.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("cannot read config `{}`", path.to_string_lossy()))?;
    let mut merged = args;
    let mut extra = Vec::new();
    for (k, v) in parse(&text)? {
        if flag_given(&merged, &k) {
            continue;
        }
        match v.as_str() {
            "true" => extra.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => extra.push(OsString::from(format!("--{k}={v}"))),
        }
    }
    merged.extend(extra);
    Ok(merged)
}
