//! `--config FILE`: `key=value` lines turned into flags placed before the
//! user's own flags, so that flags given on the command line win.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context};

const SUBCOMMANDS: &[&str] = &[
    "coeffs",
    "exact",
    "estimate",
    "spectrum",
    "convergence",
    "variance",
];

/// Parses a config file: blank lines and `#` comments are skipped, keys may
/// use `_` or `-`, and `true`/`false` switch boolean flags.
pub fn parse_config(text: &str) -> anyhow::Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got `{line}`", n + 1);
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        match value.trim() {
            "false" => {}
            "true" => out.push(format!("--{key}").into()),
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

pub fn expand_args(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = Some(it.next().context("--config needs a file")?);
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(path.into());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let flags = parse_config(&text)?;
    let at = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(rest.len(), |p| p + 1);
    rest.splice(at..at, flags);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_lines_become_flags() {
        let flags = parse_config("# comment\n\nmu_rule = 250*R^-1.5\nk=1,2\nverbose=true\nquiet=false\n").unwrap();
        assert_eq!(flags, os(&["--mu-rule", "250*R^-1.5", "--k", "1,2", "--verbose"]));
        assert!(parse_config("no equals sign").is_err());
    }

    #[test]
    fn config_flags_go_before_user_flags() {
        let dir = std::env::temp_dir().join(format!("homog-config-{}", std::process::id()));
        fs::write(&dir, "k=3\n").unwrap();
        let args = os(&["homog", "--config", dir.to_str().unwrap(), "coeffs", "--k", "2"]);
        assert_eq!(expand_args(args).unwrap(), os(&["homog", "coeffs", "--k", "3", "--k", "2"]));
        fs::remove_file(dir).unwrap();
    }
}
