//! TOML run configuration. Each section supplies flag defaults for one
//! subcommand (`[train]`, `[apps.spectrum]`, ...); `[global]` holds
//! `threads`, `base_seed` and `deterministic`. Command-line flags win.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use toml::{Table, Value};

use crate::error::{CliError, PathContext, Result};

/// Subcommands with a nested level.
const NESTED: [&str; 5] = ["bath", "noise", "hops", "heom", "apps"];

fn flag_values(key: &str, value: &Value) -> Result<Vec<String>> {
    let flag = format!("--{}", key.replace('_', "-"));
    Ok(match value {
        Value::Boolean(b) if key == "deterministic" => vec![flag, b.to_string()],
        Value::Boolean(true) => vec![flag],
        Value::Boolean(false) => vec![],
        Value::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                out.extend(flag_values(key, item)?);
            }
            out
        }
        Value::String(s) => vec![flag, s.clone()],
        Value::Integer(i) => vec![flag, i.to_string()],
        Value::Float(x) => vec![flag, x.to_string()],
        other => return Err(CliError::Usage(format!("config key '{key}' has unsupported value {other}"))),
    })
}

fn section_flags(table: &Table) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (k, v) in table {
        if !v.is_table() {
            out.extend(flag_values(k, v)?);
        }
    }
    Ok(out)
}

/// Finds `--config FILE` or `--config=FILE` and removes it from `argv`.
fn take_config(argv: &mut Vec<String>) -> Result<Option<PathBuf>> {
    let Some(k) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(None);
    };
    let arg = argv.remove(k);
    if let Some(v) = arg.strip_prefix("--config=") {
        return Ok(Some(v.into()));
    }
    if k < argv.len() {
        Ok(Some(argv.remove(k).into()))
    } else {
        Err(CliError::Usage("--config needs a file".into()))
    }
}

/// Inlines the config file into the argument list. The returned list
/// reproduces the run without the file, which is what manifests record.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<String>> {
    let mut argv: Vec<String> = argv
        .into_iter()
        .map(|a| a.into_string().map_err(|a| CliError::Usage(format!("argument {a:?} is not UTF-8"))))
        .collect::<Result<_>>()?;
    let Some(path) = take_config(&mut argv)? else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).at(&path)?;
    let cfg: Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;

    let Some(top) = argv.iter().skip(1).position(|a| cfg_section_name(a)).map(|p| p + 1) else {
        return Ok(argv);
    };
    let mut insert_at = top + 1;
    let mut section = cfg.get(&argv[top]).and_then(Value::as_table);
    if NESTED.contains(&argv[top].as_str()) {
        section = match argv.get(top + 1) {
            Some(sub) => {
                insert_at += 1;
                section.and_then(|s| s.get(sub)).and_then(Value::as_table)
            }
            None => None,
        };
    }
    let mut extra = Vec::new();
    if let Some(g) = cfg.get("global").and_then(Value::as_table) {
        extra.extend(section_flags(g)?);
    }
    if let Some(s) = section {
        extra.extend(section_flags(s)?);
    }
    let insert_at = insert_at.min(argv.len());
    argv.splice(insert_at..insert_at, extra);
    Ok(argv)
}

fn cfg_section_name(a: &str) -> bool {
    matches!(a, "bath" | "noise" | "hops" | "heom" | "train" | "validate" | "apps" | "repro")
}
