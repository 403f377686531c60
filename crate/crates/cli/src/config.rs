//! `--config` files: flat `key = value` lines whose keys are long flag names.
//! Values are appended to argv for the chosen subcommand unless the same flag
//! was already given.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::CommandFactory;
use veilkit_core::Error;

use crate::cli::Cli;

pub type Entries = Vec<(String, String, usize)>;

pub fn parse(path: &Path, text: &str) -> Result<Entries, Error> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::invalid(format!(
                "{}:{}: expected key = value, found {line:?}",
                path.display(),
                i + 1
            )));
        };
        let key = key.trim().replace('_', "-");
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if key.is_empty() || key == "config" {
            return Err(Error::invalid(format!(
                "{}:{}: invalid key {key:?}",
                path.display(),
                i + 1
            )));
        }
        out.push((key, value.to_string(), i + 1));
    }
    Ok(out)
}

/// The `--config` path in `args`, if any.
pub fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn all_longs(cmd: &clap::Command, into: &mut Vec<String>) {
    into.extend(
        cmd.get_arguments()
            .filter_map(|a| a.get_long().map(str::to_string)),
    );
    for sub in cmd.get_subcommands() {
        all_longs(sub, into);
    }
}

/// Appends config entries the selected subcommand accepts and `args` lacks.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries = parse(&path, &text)?;

    let root = Cli::command();
    let mut known = Vec::new();
    all_longs(&root, &mut known);
    // descend to the subcommand named in argv
    let mut cmd = &root;
    let mut skip_next = false;
    for a in args.iter().skip(1) {
        let a = a.to_string_lossy();
        if skip_next {
            skip_next = false;
            continue;
        }
        if a == "--config" {
            skip_next = true;
            continue;
        }
        if a.starts_with('-') {
            continue;
        }
        match cmd.find_subcommand(a.as_ref()) {
            Some(sub) => cmd = sub,
            None => break,
        }
    }

    let given = |key: &str| {
        let flag = format!("--{key}");
        let prefix = format!("--{key}=");
        args.iter().any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.starts_with(&prefix)
        })
    };
    let mut merged = args.clone();
    for (key, value, line) in entries {
        if !known.contains(&key) {
            return Err(Error::invalid(format!(
                "{}:{line}: unknown key {key:?}",
                path.display()
            )));
        }
        let Some(arg) = cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            continue;
        };
        if given(&key) {
            continue;
        }
        if arg.get_action().takes_values() {
            merged.push(format!("--{key}").into());
            merged.push(value.into());
        } else {
            match value.as_str() {
                "true" => merged.push(format!("--{key}").into()),
                "false" => {}
                other => {
                    return Err(Error::invalid(format!(
                        "{}:{line}: {key} is a switch and takes true or false, not {other:?}",
                        path.display()
                    )))
                }
            }
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<OsString> {
        s.split_whitespace().map(OsString::from).collect()
    }

    #[test]
    fn parses_lines() {
        let e = parse(
            Path::new("c"),
            "# note\nseed = 4\nemit_saliency=true\nselect = \"a,b\"\n",
        )
        .unwrap();
        assert_eq!(
            e,
            vec![
                ("seed".into(), "4".into(), 2),
                ("emit-saliency".into(), "true".into(), 3),
                ("select".into(), "a,b".into(), 4)
            ]
        );
        assert!(parse(Path::new("c"), "seed 4").is_err());
    }

    #[test]
    fn flags_win_and_irrelevant_keys_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("v.conf");
        fs::write(
            &cfg,
            "seed = 9\nmode = iid\nblock = 4\nemit-noise = true\nflatten = false\n",
        )
        .unwrap();
        let args = argv(&format!(
            "veilkit obfuscate m.json --seed 2 --config {}",
            cfg.display()
        ));
        let merged = merge(args.clone()).unwrap();
        let tail: Vec<String> = merged[args.len()..]
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect();
        assert_eq!(tail, ["--mode", "iid", "--emit-noise"]);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("v.conf");
        fs::write(&cfg, "sede = 9\n").unwrap();
        let err = merge(argv(&format!(
            "veilkit noise m.json --config={}",
            cfg.display()
        )))
        .unwrap_err();
        assert!(err.to_string().contains("unknown key \"sede\""));
    }
}
