//! Flat `key = value` configuration with line diagnostics.
//!
//! Blank lines and lines starting with `#` are ignored. Values may be
//! overridden from the command line. A [`Resolver`] reads typed values with
//! defaults and records everything it resolved, so a run can be replayed
//! from the record alone.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line { source: String, line: usize },
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line { source, line } => write!(f, "{source}:{line}"),
            Origin::Override => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    fn at(origin: &Origin, message: impl Into<String>) -> Self {
        Self { location: origin.to_string(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl Config {
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let mut config = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::Line { source: source.to_string(), line: i + 1 };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| ConfigError::at(&origin, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if !valid_key(key) {
                return Err(ConfigError::at(&origin, format!("invalid key `{key}`")));
            }
            if let Some(previous) = config.entries.get(key) {
                return Err(ConfigError::at(&origin, format!("duplicate key `{key}` (first set at {})", previous.origin)));
            }
            config.entries.insert(key.to_string(), Entry { value: value.to_string(), origin });
        }
        Ok(config)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, ConfigError> {
        let mut config = Config::default();
        for (k, v) in pairs {
            config.set(k, v)?;
        }
        Ok(config)
    }

    /// Set or replace a value, e.g. from `--set key=value`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !valid_key(key) {
            return Err(ConfigError::at(&Origin::Override, format!("invalid key `{key}`")));
        }
        self.entries.insert(key.to_string(), Entry { value: value.trim().to_string(), origin: Origin::Override });
        Ok(())
    }

    /// Parse `key=value`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::at(&Origin::Override, format!("expected key=value, got `{assignment}`")))?;
        self.set(k.trim(), v)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Typed, recording access to a [`Config`].
pub struct Resolver<'a> {
    config: &'a Config,
    resolved: RefCell<BTreeMap<String, String>>,
}

impl<'a> Resolver<'a> {
    pub fn new(config: &'a Config) -> Self {
        Self { config, resolved: RefCell::new(BTreeMap::new()) }
    }

    fn record(&self, key: &str, value: String) {
        self.resolved.borrow_mut().insert(key.to_string(), value);
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        let Some(entry) = self.config.entries.get(key) else {
            return Ok(None);
        };
        let v = entry
            .value
            .parse::<T>()
            .map_err(|_| ConfigError::at(&entry.origin, format!("{key}: expected {what}, got `{}`", entry.value)))?;
        self.record(key, entry.value.clone());
        Ok(Some(v))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.parse::<f64>(key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            return Err(self.error(key, "must be finite"));
        }
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn f64_required(&self, key: &str) -> Result<f64, ConfigError> {
        let v = self.parse::<f64>(key, "a number")?.ok_or_else(|| self.missing(key))?;
        if !v.is_finite() {
            return Err(self.error(key, "must be finite"));
        }
        Ok(v)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        // Accept `1e6` style counts as well as plain integers.
        let v = match self.parse::<usize>(key, "a count") {
            Ok(v) => v.unwrap_or(default),
            Err(e) => {
                let x = self.parse::<f64>(key, "a count").map_err(|_| e.clone())?.unwrap_or(f64::NAN);
                if !(x >= 0.0 && x.fract() == 0.0 && x < 1e18) {
                    return Err(e);
                }
                x as usize
            }
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        let v = self.parse::<bool>(key, "true or false")?.unwrap_or(default);
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        let v = self.config.get(key).unwrap_or(default).to_string();
        self.record(key, v.clone());
        v
    }

    /// Comma-separated numbers.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        let values = match self.config.entries.get(key) {
            None => default.to_vec(),
            Some(entry) => entry
                .value
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ConfigError::at(&entry.origin, format!("{key}: expected comma-separated numbers")))?,
        };
        let text = values.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        self.record(key, text);
        Ok(values)
    }

    pub fn has(&self, key: &str) -> bool {
        self.config.entries.contains_key(key)
    }

    pub fn error(&self, key: &str, message: &str) -> ConfigError {
        match self.config.entries.get(key) {
            Some(e) => ConfigError::at(&e.origin, format!("{key}: {message}")),
            None => ConfigError { location: "defaults".into(), message: format!("{key}: {message}") },
        }
    }

    fn missing(&self, key: &str) -> ConfigError {
        ConfigError { location: "config".into(), message: format!("missing required key `{key}`") }
    }

    /// Everything resolved so far, after checking that no key went unused.
    pub fn finish(self) -> Result<BTreeMap<String, String>, ConfigError> {
        let resolved = self.resolved.into_inner();
        if let Some((key, entry)) = self.config.entries.iter().find(|(k, _)| !resolved.contains_key(*k)) {
            return Err(ConfigError::at(&entry.origin, format!("unknown key `{key}`")));
        }
        Ok(resolved)
    }
}
