//! Flat `key = value` config files, spliced into argv ahead of the user's
//! own flags so that flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::Context;

use crate::InputError;

/// Keys that take no value; `true`/`false` decides whether the flag is set.
const SWITCHES: &[&str] = &["paper-protocol", "no-select"];

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, InputError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| InputError(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(InputError(format!("config line {}: invalid key `{}`", i + 1, k.trim())));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Returns argv with the config file's entries inserted right after the
/// program name.
pub fn expand_args(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = config_path(&args[1.min(args.len())..]) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| InputError(format!("cannot read config {}: {e}", path.display())))
        .context("loading config")?;
    let mut injected = Vec::new();
    for (key, value) in parse_config(&text)? {
        if SWITCHES.contains(&key.as_str()) {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(OsString::from(format!("--{key}"))),
                "false" | "0" | "no" => {}
                _ => return Err(InputError(format!("config key `{key}` expects true or false")).into()),
            }
        } else {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let mut out = Vec::with_capacity(args.len() + injected.len());
    let mut it = args.into_iter();
    out.extend(it.next());
    out.extend(injected);
    out.extend(it);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_pairs() {
        let kv = parse_config("# experiment\nn = 1..3\nig_threshold=0.2\n\npaper-protocol = true\n").unwrap();
        assert_eq!(
            kv,
            vec![
                ("n".to_string(), "1..3".to_string()),
                ("ig-threshold".to_string(), "0.2".to_string()),
                ("paper-protocol".to_string(), "true".to_string()),
            ]
        );
        assert!(parse_config("novalue\n").is_err());
    }

    #[test]
    fn config_entries_precede_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("exp.cfg");
        std::fs::write(&cfg, "seed = 4\npaper_protocol = false\nno-select = true\n").unwrap();
        let args: Vec<OsString> = ["nopcode", "--config", cfg.to_str().unwrap(), "stats", "--seed", "9"]
            .iter()
            .map(OsString::from)
            .collect();
        let out = expand_args(args).unwrap();
        let out: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(out[1], "--seed=4");
        assert_eq!(out[2], "--no-select");
        assert_eq!(out.last().unwrap(), "9");
    }
}
