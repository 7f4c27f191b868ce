//! `--config FILE`: a TOML file whose top-level keys are global flags and
//! whose tables, named after subcommands, hold that subcommand's flags.
//!
//! ```toml
//! seed = 7
//! [train]
//! preset = "domain_specific"
//! dann = true
//! epochs = 5
//! ```
//!
//! Values become flags inserted after the subcommand name, so they go
//! through the same parser as typed flags and unknown keys are rejected the
//! same way. A flag given on the command line suppresses the config value.

use std::ffi::OsString;

use crate::CliError;

const GLOBAL_VALUE_FLAGS: [&str; 3] = ["--config", "--seed", "--log"];

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if GLOBAL_VALUE_FLAGS.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

fn given(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&format!("{flag}="))
    })
}

fn push_flag(out: &mut Vec<OsString>, args: &[OsString], key: &str, value: &toml::Value) -> Result<(), CliError> {
    let flag = format!("--{}", key.replace('_', "-"));
    if given(args, &flag) {
        return Ok(());
    }
    let text = match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(n) => n.to_string(),
        toml::Value::Float(x) => x.to_string(),
        toml::Value::Boolean(true) => {
            out.push(flag.into());
            return Ok(());
        }
        toml::Value::Boolean(false) => return Ok(()),
        other => return Err(CliError::Usage(format!("config key {key:?}: unsupported value {other}"))),
    };
    out.push(flag.into());
    out.push(text.into());
    Ok(())
}

/// Returns `args` with the config file's values spliced in.
pub fn apply(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else { return Ok(args) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.to_string_lossy())))?;
    let table: toml::Table =
        text.parse().map_err(|e| CliError::Usage(format!("config {}: {e}", path.to_string_lossy())))?;
    let Some(at) = subcommand_index(&args) else { return Ok(args) };
    let sub = args[at].to_string_lossy().replace('_', "-");

    let mut injected = Vec::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(section) => {
                if key.replace('_', "-") == sub {
                    for (k, v) in section {
                        push_flag(&mut injected, &args, k, v)?;
                    }
                }
            }
            v => push_flag(&mut injected, &args, key, v)?,
        }
    }
    let mut out = args[..=at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}
