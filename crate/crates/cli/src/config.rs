//! `key = value` config files, merged into the command line.
//!
//! Each key names a long flag of the chosen subcommand. Values from the file
//! are inserted right after the subcommand so that flags given on the command
//! line win.

use std::ffi::OsString;
use std::path::Path;

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Syntax(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config file: {e}"),
            ConfigError::Syntax(m) => write!(f, "config file: {m}"),
        }
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped; a
/// value of `true` turns the key into a bare switch, `false` drops it.
pub fn parse(text: &str) -> Result<Vec<String>, ConfigError> {
    let mut args = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() || key == "config" {
            return Err(ConfigError::Syntax(format!("line {}: invalid key `{key}`", lineno + 1)));
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => {
                args.push(format!("--{key}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

/// Strips `--config FILE` from `argv` and splices the file's flags in after
/// the subcommand (the first bare word).
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let mut out = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = it.next();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            out.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(out);
    };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(ConfigError::Io)?;
    let extra = parse(&text)?;
    let at = out
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(out.len(), |i| i + 2);
    out.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_switches_and_comments() {
        let text = "# run\nmodel = kernel-rim\nreg=0\n\nstandardize = true\nverbose = false\nn_init = 10 # restarts\n";
        assert_eq!(
            parse(text).unwrap(),
            vec!["--model", "kernel-rim", "--reg", "0", "--standardize", "--n-init", "10"]
        );
        assert!(parse("model kernel").is_err());
        assert!(parse("config = x").is_err());
    }

    #[test]
    fn merge_splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "k = 3\n").unwrap();
        let argv: Vec<OsString> = ["discclust", "--config", path.to_str().unwrap(), "fit", "--k", "4"]
            .iter()
            .map(OsString::from)
            .collect();
        let merged: Vec<String> = merge(argv)
            .unwrap()
            .into_iter()
            .map(|a| a.into_string().unwrap())
            .collect();
        assert_eq!(merged, vec!["discclust", "fit", "--k", "3", "--k", "4"]);
    }

    #[test]
    fn no_config_is_a_no_op() {
        let argv: Vec<OsString> = ["discclust", "fit"].iter().map(OsString::from).collect();
        assert_eq!(merge(argv.clone()).unwrap(), argv);
    }
}
