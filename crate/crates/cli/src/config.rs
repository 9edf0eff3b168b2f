//! `--config` files: `key=value` lines merged into the argument list before
//! clap sees it. A key only fills in a flag that is absent from the command
//! line, so flags always win.

use std::collections::BTreeMap;
use std::path::Path;

use clap::CommandFactory;

use crate::cli::Cli;
use crate::failure::Failure;

pub fn parse_config(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Failure::usage(format!(
                "{}:{}: expected key=value, found '{line}'",
                origin.display(),
                i + 1
            ))
        })?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Failure::usage(format!(
                "{}:{}: duplicate key '{key}'",
                origin.display(),
                i + 1
            )));
        }
    }
    Ok(out)
}

/// Locate `--config` and the subcommand in raw arguments.
fn scan(args: &[String]) -> (Option<String>, Option<usize>) {
    let cmd = Cli::command();
    let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = &args[i];
        if a == "--" {
            break;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if a == "--config" {
            config = args.get(i + 1).cloned();
            i += 1;
        } else if a == "--jobs" {
            i += 1;
        } else if sub.is_none() && names.contains(&a.as_str()) {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

/// Return `args` with config-file values appended for flags not given.
pub fn merge_config(args: Vec<String>) -> Result<Vec<String>, Failure> {
    let (Some(path), Some(sub_at)) = scan(&args) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text, path)?;

    let root = Cli::command();
    let sub = root
        .find_subcommand(&args[sub_at])
        .expect("scan only returns known subcommands");
    let flag_of = |cmd: &clap::Command, key: &str| {
        cmd.get_arguments()
            .find(|a| a.get_long() == Some(key))
            .map(|a| !a.get_action().takes_values())
    };
    let known_anywhere = |key: &str| {
        flag_of(&root, key).is_some() || root.get_subcommands().any(|c| flag_of(c, key).is_some())
    };

    let mut out = args.clone();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let is_switch = match flag_of(sub, &key).or_else(|| flag_of(&root, &key)) {
            Some(s) => s,
            // keys for other subcommands let one file serve a whole pipeline
            None if known_anywhere(&key) => continue,
            None => {
                return Err(Failure::usage(format!(
                    "{}: unknown key '{key}'",
                    path.display()
                )))
            }
        };
        let long = format!("--{key}");
        let given = args
            .iter()
            .any(|a| *a == long || a.starts_with(&format!("{long}=")));
        if given {
            continue;
        }
        if is_switch {
            match value.as_str() {
                "true" | "1" | "yes" => out.push(long),
                "false" | "0" | "no" => {}
                _ => {
                    return Err(Failure::usage(format!(
                        "{}: '{key}' expects true or false, got '{value}'",
                        path.display()
                    )))
                }
            }
        } else {
            out.push(format!("{long}={value}"));
        }
    }
    Ok(out)
}
