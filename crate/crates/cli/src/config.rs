//! Flat `key = value` defaults files.
//!
//! Keys are the long flag names of the chosen subcommand (with `_` accepted
//! for `-`), plus the global `jobs`. Values from the file are spliced into the
//! argument list ahead of parsing, so flags given on the command line win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::CommandFactory;

use crate::Cli;

const GLOBAL_KEYS: &[&str] = &["jobs"];

/// Parses a defaults file into key/value pairs in file order.
pub fn parse(text: &str, path: &Path) -> Result<Vec<(String, String)>, String> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected `key = value`", path.display(), lineno + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(format!("{}:{}: empty key or value", path.display(), lineno + 1));
        }
        if let Some(prev) = seen.insert(key.clone(), lineno + 1) {
            return Err(format!("{}:{}: `{key}` already set on line {prev}", path.display(), lineno + 1));
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Where `--config` points, if anywhere, and the position of the subcommand.
fn scan(args: &[OsString]) -> Result<(Option<PathBuf>, Option<usize>), String> {
    let mut config = None;
    let mut subcommand = None;
    let mut i = 1;
    while i < args.len() {
        let arg = args[i].to_string_lossy();
        if arg == "--config" {
            let value = args.get(i + 1).ok_or("--config needs a value")?;
            config = Some(PathBuf::from(value));
            i += 2;
            continue;
        }
        if let Some(value) = arg.strip_prefix("--config=") {
            config = Some(PathBuf::from(value));
        } else if subcommand.is_none() {
            if arg == "--jobs" {
                i += 2;
                continue;
            }
            if !arg.starts_with('-') {
                subcommand = Some(i);
            }
        }
        i += 1;
    }
    Ok((config, subcommand))
}

fn flag_given(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_value = format!("--{key}=");
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&with_value)
    })
}

/// Returns the argument list with defaults from the `--config` file spliced
/// in after the subcommand, and the file path that was used.
pub fn apply(args: Vec<OsString>) -> Result<(Vec<OsString>, Option<PathBuf>), String> {
    let (path, sub_pos) = scan(&args)?;
    let Some(path) = path else {
        return Ok((args, None));
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let entries = parse(&text, &path)?;
    let Some(sub_pos) = sub_pos else {
        // let clap report the missing subcommand
        return Ok((args, Some(path)));
    };
    let name = args[sub_pos].to_string_lossy().into_owned();
    let command = Cli::command();
    let Some(sub) = command.find_subcommand(&name) else {
        return Ok((args, Some(path)));
    };
    let known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| l != "help" && l != "config")
        .collect();

    let mut injected = Vec::new();
    for (key, value) in entries {
        if !known.contains(&key) && !GLOBAL_KEYS.contains(&key.as_str()) {
            return Err(format!("{}: unknown key `{key}` for `{name}`", path.display()));
        }
        if !flag_given(&args, &key) {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let mut out = args;
    let tail = out.split_off(sub_pos + 1);
    out.extend(injected);
    out.extend(tail);
    Ok((out, Some(path)))
}
