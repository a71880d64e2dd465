//! Flat `key=value` run configuration.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored. Keys may use `-` or `_`. Unknown or repeated keys are errors.

use std::path::Path;

use crate::error::{Error, Result};

/// Every key the command line also accepts as a flag.
pub const KEYS: &[&str] = &[
    "mu", "r", "rho", "alpha", "kappa", "beta", "gamma", "y0", "T", "s0", "claim", "grid", "n_fft",
    "seed", "out", "format", "paths", "steps", "dt", "point", "n",
];

/// Parsed assignments in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    entries: Vec<(String, String)>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            let key = key.trim().replace('-', "_");
            let key = if key.eq_ignore_ascii_case("t") { "T".to_string() } else { key };
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", i + 1)));
            }
            if entries.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config(format!("line {}: key `{key}` repeated", i + 1)));
            }
            let value = value.trim();
            if value.is_empty() {
                return Err(Error::Config(format!("line {}: key `{key}` has no value", i + 1)));
            }
            entries.push((key, value.to_string()));
        }
        Ok(RunConfig { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Value of `key` parsed as `T`, if present.
    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
