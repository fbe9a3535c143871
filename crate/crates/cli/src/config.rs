//! Flat TOML configuration merged into the command line.
//!
//! Keys are long option names of the subcommand (`prdc_k` and `prdc-k` are
//! the same key). A key becomes `--key value` unless the command line already
//! sets that option, so flags always win. Keys that belong to another
//! subcommand are ignored, which lets one file serve a whole pipeline.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Command};

use crate::UsageError;

/// Path given by `--config <path>` or `--config=<path>`, if any.
pub fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

pub fn load(path: &Path) -> Result<toml::Table, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

fn render(key: &str, value: &toml::Value) -> Result<String, UsageError> {
    use toml::Value::*;
    Ok(match value {
        String(s) => s.clone(),
        Integer(i) => i.to_string(),
        Float(f) => f.to_string(),
        Boolean(b) => b.to_string(),
        Array(items) => items
            .iter()
            .map(|v| render(key, v))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        _ => {
            return Err(UsageError(format!(
                "config key `{key}` must be a scalar or a list of scalars"
            )))
        }
    })
}

/// Appends the config entries the command line leaves unset to `argv`.
pub fn merge(
    mut argv: Vec<OsString>,
    table: &toml::Table,
    root: &Command,
) -> Result<Vec<OsString>, UsageError> {
    let names: Vec<String> = root
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let Some(sub_name) = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| names.contains(a))
    else {
        return Ok(argv);
    };
    let sub = root
        .find_subcommand(&sub_name)
        .expect("name came from the command");
    let known: BTreeSet<String> = root
        .get_subcommands()
        .flat_map(|c| {
            c.get_arguments()
                .filter_map(|a| a.get_long().map(str::to_string))
        })
        .chain(["config".to_string()])
        .collect();
    let given: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();

    let mut extra = Vec::new();
    for (raw_key, value) in table {
        let key = raw_key.replace('_', "-");
        if !known.contains(&key) {
            return Err(UsageError(format!("unknown config key `{raw_key}`")));
        }
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            continue;
        };
        let long = format!("--{key}");
        let short = arg.get_short().map(|c| format!("-{c}"));
        let set = given.iter().any(|g| {
            *g == long
                || g.starts_with(&format!("{long}="))
                || short.as_ref().is_some_and(|s| g.starts_with(s.as_str()))
        });
        if set {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value {
                toml::Value::Boolean(true) => extra.push(long),
                toml::Value::Boolean(false) => {}
                _ => {
                    return Err(UsageError(format!(
                        "config key `{raw_key}` must be true or false"
                    )))
                }
            },
            _ => {
                extra.push(long);
                extra.push(render(raw_key, value)?);
            }
        }
    }
    // Options go before any `--` so they are not read as positionals.
    let at = argv.iter().position(|a| a == "--").unwrap_or(argv.len());
    argv.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{Arg, ArgAction};

    fn command() -> Command {
        Command::new("t")
            .subcommand(
                Command::new("train")
                    .arg(Arg::new("epochs").long("epochs"))
                    .arg(Arg::new("rows").long("rows").short('n'))
                    .arg(Arg::new("fast").long("fast").action(ArgAction::SetTrue)),
            )
            .subcommand(Command::new("sample").arg(Arg::new("seed").long("seed")))
    }

    fn args(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_override_config() {
        let table: toml::Table = "epochs = 5\nrows = 10\nfast = true\nseed = 3\n"
            .parse()
            .unwrap();
        let out = merge(args(&["t", "train", "-n", "7"]), &table, &command()).unwrap();
        let out: Vec<String> = out
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        assert_eq!(out, ["t", "train", "-n", "7", "--epochs", "5", "--fast"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let table: toml::Table = "epoch = 5\n".parse().unwrap();
        assert!(merge(args(&["t", "train"]), &table, &command()).is_err());
    }

    #[test]
    fn finds_config_path() {
        assert_eq!(
            config_path(&args(&["t", "--config", "a.toml", "train"])),
            Some("a.toml".into())
        );
        assert_eq!(
            config_path(&args(&["t", "train", "--config=b.toml"])),
            Some("b.toml".into())
        );
        assert_eq!(config_path(&args(&["t", "train"])), None);
    }
}
