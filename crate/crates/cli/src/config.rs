//! `key=value` config files merged into the argument list.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Command;

#[derive(Debug)]
pub enum ConfigError {
    Read(String),
    Syntax(String),
}

/// Parses `key = value` lines; `#` starts a comment. Keys may carry a
/// leading `--`. Repeated keys yield repeated entries.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn flag_of(arg: &OsString) -> Option<String> {
    let s = arg.to_str()?;
    let rest = s.strip_prefix("--")?;
    Some(rest.split('=').next().unwrap_or_default().to_string())
}

/// Removes `--config FILE` from `argv` and inserts the file's entries right
/// after the subcommand name. Entries whose flag also appears on the command
/// line are dropped, so flags always win.
pub fn merge(argv: Vec<OsString>, cli: &Command) -> Result<Vec<OsString>, ConfigError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => match it.next() {
                Some(path) => config = Some(path),
                None => return Err(ConfigError::Syntax("--config needs a file".into())),
            },
            Some(s) if s.starts_with("--config=") => config = Some(OsString::from(&s["--config=".len()..])),
            _ => rest.push(a),
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let path = Path::new(&path);
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read(format!("{}: {e}", path.display())))?;
    let entries = parse(&text).map_err(|e| ConfigError::Syntax(format!("{}: {e}", path.display())))?;

    let Some(sub_pos) = rest
        .iter()
        .skip(1)
        .position(|a| a.to_str().is_some_and(|s| cli.find_subcommand(s).is_some()))
        .map(|p| p + 1)
    else {
        return Ok(rest);
    };
    let sub = cli
        .find_subcommand(rest[sub_pos].to_str().unwrap_or_default())
        .expect("position found by name");
    let given: Vec<String> = rest.iter().filter_map(flag_of).collect();

    let mut injected = Vec::new();
    for (key, value) in entries {
        if given.contains(&key) {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(cli.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()));
        let is_switch = arg.is_some_and(|a| !a.get_action().takes_values());
        if is_switch {
            match value.as_str() {
                "true" | "yes" | "1" => injected.push(OsString::from(format!("--{key}"))),
                "false" | "no" | "0" => {}
                other => return Err(ConfigError::Syntax(format!("{key}: '{other}' is not a boolean"))),
            }
        } else {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    rest.splice(sub_pos + 1..sub_pos + 1, injected);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Arg, ArgAction};

    fn cli() -> Command {
        Command::new("t").arg(Arg::new("seed").long("seed").global(true)).subcommand(
            Command::new("run")
                .arg(Arg::new("rate").long("rate"))
                .arg(Arg::new("fast").long("fast").action(ArgAction::SetTrue)),
        )
    }

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_comments_and_prefixes() {
        let e = parse("# header\n--rate = 5 # trailing\n\nsnr_db=3\n").unwrap();
        assert_eq!(e, vec![("rate".into(), "5".into()), ("snr-db".into(), "3".into())]);
        assert!(parse("novalue\n").is_err());
        assert!(parse("=3\n").is_err());
    }

    #[test]
    fn flags_override_file_entries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        fs::write(&path, "rate=5\nfast=true\nseed=9\n").unwrap();
        let argv = os(&["t", "run", "--rate", "7", "--config", path.to_str().unwrap()]);
        let merged = merge(argv, &cli()).unwrap();
        assert_eq!(merged, os(&["t", "run", "--fast", "--seed=9", "--rate", "7"]));
    }

    #[test]
    fn false_switch_is_dropped_and_bad_boolean_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        fs::write(&path, "fast=false\n").unwrap();
        let merged = merge(os(&["t", "run", &format!("--config={}", path.display())]), &cli()).unwrap();
        assert_eq!(merged, os(&["t", "run"]));
        fs::write(&path, "fast=maybe\n").unwrap();
        assert!(matches!(
            merge(os(&["t", "run", "--config", path.to_str().unwrap()]), &cli()),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn missing_file_is_a_read_error() {
        let r = merge(os(&["t", "run", "--config", "/nonexistent/x.cfg"]), &cli());
        assert!(matches!(r, Err(ConfigError::Read(_))));
    }
}
