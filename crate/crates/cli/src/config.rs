//! `--config FILE` support. The JSON object is turned into flags that are
//! spliced in front of the user's own arguments, so anything given
//! explicitly on the command line still wins (clap keeps the last value).

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde_json::Value;

/// Pulls `--config FILE` / `--config=FILE` out of `argv`.
fn take_config(argv: &mut Vec<OsString>) -> Result<Option<PathBuf>> {
    let mut found = None;
    let mut i = 0;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--config" {
            let Some(path) = argv.get(i + 1).cloned() else { bail!("--config needs a file") };
            found = Some(PathBuf::from(path));
            argv.drain(i..i + 2);
            continue;
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            found = Some(PathBuf::from(path));
            argv.remove(i);
            continue;
        }
        i += 1;
    }
    Ok(found)
}

/// Flags for one JSON object: `{"density_a": 0.3, "gzip": true}` becomes
/// `--density-a 0.3 --gzip`. `false` and `null` produce nothing.
pub fn flags_from_json(obj: &Value) -> Result<Vec<OsString>> {
    let Value::Object(map) = obj else { bail!("config must be a JSON object") };
    let mut out = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => out.extend([flag.into(), s.into()]),
            Value::Number(n) => out.extend([flag.into(), n.to_string().into()]),
            _ => bail!("config key `{key}`: only scalars are supported"),
        }
    }
    Ok(out)
}

/// Returns `argv` with the config flags inserted right after the
/// subcommand name.
pub fn expand_argv(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = take_config(&mut argv)? else { return Ok(argv) };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let json: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let flags = flags_from_json(&json)?;
    // argv[0] is the program, argv[1] the subcommand (if any).
    let at = argv.len().min(2);
    argv.splice(at..at, flags);
    Ok(argv)
}
