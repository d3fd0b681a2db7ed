//! Run configuration: a line-oriented `key = value` UTF-8 file plus
//! command-line overrides, validated against the owning subcommand's key
//! table. Unknown keys are rejected; every run writes its fully-resolved
//! config next to its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// A resolved configuration: every allowed key has a value (default or
/// overridden), in deterministic (sorted) order.
#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Build from a key table of (key, default), an optional config file,
    /// and `--set key=value` overrides (applied last).
    pub fn resolve(
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self> {
        let mut values: BTreeMap<String, String> = defaults
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            for (ln, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .with_context(|| format!("config line {}: expected key = value", ln + 1))?;
                let (k, v) = (k.trim(), v.trim());
                if !values.contains_key(k) {
                    bail!("config line {}: unknown key `{k}`", ln + 1);
                }
                values.insert(k.to_string(), v.to_string());
            }
        }
        for ov in overrides {
            let (k, v) = ov
                .split_once('=')
                .with_context(|| format!("override `{ov}`: expected key=value"))?;
            let (k, v) = (k.trim(), v.trim());
            if !values.contains_key(k) {
                bail!("override: unknown key `{k}`");
            }
            values.insert(k.to_string(), v.to_string());
        }
        Ok(RunConfig { values })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .with_context(|| format!("missing config key `{key}`"))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|e| anyhow::anyhow!("config key `{key}` = `{raw}`: {e}"))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.str(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => bail!("config key `{key}` = `{other}`: expected true/false"),
        }
    }

    /// `key = value` serialization of the fully-resolved state.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn write_resolved(&self, out_dir: &Path) -> Result<std::path::PathBuf> {
        let path = out_dir.join("config.resolved");
        fs::write(&path, self.to_text())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULTS: &[(&str, &str)] = &[("alpha", "0.5"), ("epochs", "50"), ("name", "run")];

    #[test]
    fn defaults_file_and_overrides_layer_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        fs::write(&p, "# comment\nepochs = 10\nname = file\n").unwrap();
        let cfg =
            RunConfig::resolve(DEFAULTS, Some(&p), &["name=cli".to_string()]).unwrap();
        assert_eq!(cfg.parse::<f64>("alpha").unwrap(), 0.5);
        assert_eq!(cfg.parse::<usize>("epochs").unwrap(), 10);
        assert_eq!(cfg.str("name").unwrap(), "cli");
    }

    #[test]
    fn unknown_keys_rejected_in_file_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        fs::write(&p, "bogus = 1\n").unwrap();
        assert!(RunConfig::resolve(DEFAULTS, Some(&p), &[]).is_err());
        assert!(RunConfig::resolve(DEFAULTS, None, &["nope=2".to_string()]).is_err());
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = RunConfig::resolve(DEFAULTS, None, &[]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = cfg.write_resolved(dir.path()).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(text, "alpha = 0.5\nepochs = 50\nname = run\n");
    }
}
