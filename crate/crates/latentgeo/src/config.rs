//! Flat `key=value` run configuration.
//!
//! Values are resolved as command-line override, then config file, then the
//! command's default. Each command publishes its full key list; anything else
//! is an error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// One accepted key with its default (`""` means unset) and a short help line.
#[derive(Clone, Copy, Debug)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str, origin: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        out.push(split_pair(line).map_err(|m| CliError::Config(format!("{origin}:{}: {m}", i + 1)))?);
    }
    Ok(out)
}

fn split_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in {s:?}"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

impl RunConfig {
    /// Resolves the configuration of one command.
    pub fn resolve(schema: &[Key], file: Option<&Path>, overrides: &[String]) -> CliResult<RunConfig> {
        let mut values: BTreeMap<String, String> =
            schema.iter().map(|k| (k.name.to_string(), k.default.to_string())).collect();
        let mut layers = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            layers.push(parse_pairs(&text, &path.display().to_string())?);
        }
        layers.push(
            overrides
                .iter()
                .map(|s| split_pair(s).map_err(CliError::Config))
                .collect::<CliResult<_>>()?,
        );
        for (k, v) in layers.into_iter().flatten() {
            match values.get_mut(&k) {
                Some(slot) => *slot = v,
                None => {
                    let known: Vec<&str> = schema.iter().map(|k| k.name).collect();
                    return Err(CliError::Config(format!(
                        "unknown key {k:?}; accepted keys: {}",
                        known.join(", ")
                    )));
                }
            }
        }
        Ok(RunConfig { values })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        RunConfig {
            values: pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// All resolved values in key order; this is the config echo written next
    /// to every output.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.str(key).is_empty()
    }

    pub fn required(&self, key: &str) -> CliResult<&str> {
        let v = self.str(key);
        if v.is_empty() {
            return Err(CliError::Config(format!("{key} is required")));
        }
        Ok(v)
    }

    pub fn path(&self, key: &str) -> CliResult<PathBuf> {
        self.required(key).map(PathBuf::from)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> CliResult<T> {
        let v = self.required(key)?;
        v.parse()
            .map_err(|_| CliError::Config(format!("{key}: expected {what}, got {v:?}")))
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        self.parse(key, "a nonnegative integer")
    }

    pub fn positive(&self, key: &str) -> CliResult<usize> {
        let v = self.usize(key)?;
        if v == 0 {
            return Err(CliError::Config(format!("{key} must be positive")));
        }
        Ok(v)
    }

    pub fn u64(&self, key: &str) -> CliResult<u64> {
        self.parse(key, "a nonnegative integer")
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        let v: f64 = self.parse(key, "a number")?;
        if !v.is_finite() {
            return Err(CliError::Config(format!("{key} must be finite")));
        }
        Ok(v)
    }

    pub fn opt_usize(&self, key: &str) -> CliResult<Option<usize>> {
        if self.is_set(key) {
            self.usize(key).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Comma-separated list; empty when unset.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn f64_list(&self, key: &str) -> CliResult<Vec<f64>> {
        self.list(key)
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::Config(format!("{key}: bad number {s:?}")))
            })
            .collect()
    }

    pub fn choice<'a>(&self, key: &str, options: &[&'a str]) -> CliResult<&'a str> {
        let v = self.str(key);
        options.iter().copied().find(|o| *o == v).ok_or_else(|| {
            CliError::Config(format!("{key}: expected one of {}, got {v:?}", options.join("|")))
        })
    }

    /// `key=value` lines, ready to be written back as a config file.
    pub fn to_text(&self) -> String {
        self.pairs().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
