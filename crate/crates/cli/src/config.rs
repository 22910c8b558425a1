//! `key = value` config files. Entries become `--key value` flags spliced in
//! right after the subcommand, so explicit flags later on the line win.

use anyhow::{bail, Context, Result};
use std::ffi::OsString;
use std::path::Path;

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected `key = value`", n + 1);
        };
        let key = k.trim().replace('_', "-");
        let value = v.trim().trim_matches('"').to_string();
        if key.is_empty() || key == "config" {
            bail!("config line {}: invalid key `{}`", n + 1, k.trim());
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Pull `--config FILE` (or `--config=FILE`) out of `args` and splice the
/// file's entries after the subcommand name.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let Some(p) = it.next() else {
                bail!("--config requires a file path")
            };
            path = Some(p);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("--config: cannot read {}", path.to_string_lossy()))?;
    let entries = parse(&text).context("--config")?;
    // argv[0], then the first non-flag token is the subcommand
    let sub = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|i| i + 2)
        .unwrap_or(rest.len());
    let mut out: Vec<OsString> = rest[..sub].to_vec();
    for (k, v) in entries {
        out.push(format!("--{k}").into());
        out.push(v.into());
    }
    out.extend_from_slice(&rest[sub..]);
    Ok(out)
}
