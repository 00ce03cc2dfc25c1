//! Flat `key=value` config files. Every key is the long name of a flag;
//! flags given on the command line win.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use epichaos::{Error, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{raw}'", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.starts_with('-') {
            return Err(Error::Config(format!("line {}: bad key '{k}'", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Config entries as flag tokens. `true`/`false` values toggle switches.
pub fn to_args(entries: &[(String, String)]) -> Vec<OsString> {
    let mut args = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => args.push(format!("--{k}").into()),
            "false" => {}
            _ => args.push(format!("--{k}={v}").into()),
        }
    }
    args
}

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

/// Rewrite `argv` so the config file's flags come right after the
/// subcommand and before everything given on the command line.
pub fn merge(argv: Vec<OsString>, subcommands: &[&str]) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv[1..]) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(Path::new(&path))?;
    let injected = to_args(&parse(&text)?);
    let Some(pos) = argv
        .iter()
        .skip(1)
        .position(|a| subcommands.contains(&a.to_string_lossy().as_ref()))
        .map(|p| p + 1)
    else {
        return Ok(argv);
    };
    let mut out = vec![argv[0].clone(), argv[pos].clone()];
    out.extend(injected);
    out.extend(argv[1..pos].iter().cloned());
    out.extend(argv[pos + 1..].iter().cloned());
    Ok(out)
}
