//! Flat TOML config files mapped onto command-line flags.
//!
//! Top-level keys set global flags (`seed`, `workers`). A `[<subcommand>]`
//! table sets that subcommand's flags; keys use the flag names with `-` or `_`.
//! Values from the file are spliced in front of the user's own arguments, so
//! explicit flags win.

use std::path::Path;

use anyhow::{bail, Context, Result};
use toml::{Table, Value};

pub const SECTIONS: [&str; 5] = ["simulate", "grid-search", "fit", "evaluate", "bench"];
const GLOBAL_KEYS: [&str; 2] = ["seed", "workers"];

pub fn load(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: Table = text
        .parse()
        .with_context(|| format!("parsing config {}", path.display()))?;
    for (key, value) in &table {
        let name = key.replace('_', "-");
        match value {
            Value::Table(_) if SECTIONS.contains(&name.as_str()) => {}
            Value::Table(_) => bail!(
                "config {}: unknown section [{key}] (expected one of {})",
                path.display(),
                SECTIONS.join(", ")
            ),
            _ if GLOBAL_KEYS.contains(&name.as_str()) => {}
            _ => bail!(
                "config {}: unknown top-level key `{key}` (top-level keys: {}; put command flags in a [command] section)",
                path.display(),
                GLOBAL_KEYS.join(", ")
            ),
        }
    }
    Ok(table)
}

/// Sections present in the file, in pipeline order.
pub fn sections(table: &Table) -> Vec<&'static str> {
    SECTIONS
        .iter()
        .copied()
        .filter(|s| table.keys().any(|k| k.replace('_', "-") == *s))
        .collect()
}

/// Flags for `subcommand` derived from the file.
pub fn to_args(table: &Table, subcommand: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (key, value) in table {
        if !matches!(value, Value::Table(_)) {
            push_flag(&mut args, key, value)?;
        }
    }
    if let Some((_, Value::Table(section))) = table.iter().find(|(k, _)| k.replace('_', "-") == subcommand) {
        for (key, value) in section {
            push_flag(&mut args, key, value)?;
        }
    }
    Ok(args)
}

fn scalar(key: &str, value: &Value) -> Result<String> {
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        other => bail!("config key `{key}`: unsupported value {other}"),
    })
}

fn push_flag(args: &mut Vec<String>, key: &str, value: &Value) -> Result<()> {
    let flag = format!("--{}", key.replace('_', "-"));
    match value {
        Value::Boolean(true) => args.push(flag),
        Value::Boolean(false) => {}
        Value::Array(items) => {
            let parts = items.iter().map(|v| scalar(key, v)).collect::<Result<Vec<_>>>()?;
            args.push(flag);
            args.push(parts.join(","));
        }
        Value::Table(_) => bail!("config key `{key}`: nested tables are not supported"),
        other => {
            args.push(flag);
            args.push(scalar(key, other)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Table {
        text.parse().unwrap()
    }

    #[test]
    fn maps_keys_to_flags() {
        let t = parse(
            "seed = 3\n[fit]\nevents = \"a.csv\"\ngamma = 0.5\nno_clip = true\n[grid-search]\ngamma_grid = [0.1, 1.0]\n",
        );
        assert_eq!(
            to_args(&t, "fit").unwrap(),
            ["--seed", "3", "--events", "a.csv", "--gamma", "0.5", "--no-clip"]
        );
        assert_eq!(
            to_args(&t, "grid-search").unwrap(),
            ["--seed", "3", "--gamma-grid", "0.1,1"]
        );
        assert_eq!(sections(&t), ["grid-search", "fit"]);
    }

    #[test]
    fn rejects_unknown_sections_and_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[fitt]\ngamma = 1.0\n").unwrap();
        assert!(load(&p).is_err());
        std::fs::write(&p, "gamma = 1.0\n").unwrap();
        assert!(load(&p).is_err());
        std::fs::write(&p, "workers = 2\n[fit]\ngamma = 1.0\n").unwrap();
        assert!(load(&p).is_ok());
    }
}
