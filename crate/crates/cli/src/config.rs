//! Flat TOML configuration whose keys are the long flag names.

use crate::CliError;
use std::collections::BTreeMap;
use std::path::Path;
use toml::Value;

/// Every key a config file may set. `config` itself is not one of them.
pub const KEYS: &[&str] = &[
    "alpha",
    "barrier",
    "barrier-direction",
    "barrier-every",
    "beta",
    "bump",
    "coords",
    "dims",
    "dividend-yield",
    "exponent",
    "expiry",
    "export",
    "f0",
    "fd-step",
    "greeks",
    "horizon",
    "kappa",
    "model",
    "mu",
    "ordering",
    "paths",
    "payoff",
    "process",
    "rate",
    "record",
    "rho",
    "scheme",
    "seed",
    "sigma",
    "sigma0",
    "spacing",
    "spot",
    "spot2",
    "steps",
    "strike",
    "theta",
    "threshold",
    "v0",
    "vol",
    "vol-states",
    "vol2",
    "xi",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    name: String,
    values: toml::Table,
    lines: BTreeMap<String, usize>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self, CliError> {
        let values: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e.span().map_or(1, |s| line_of(text, s.start));
            CliError::Input(format!("config file {name}, line {line}: {}", e.message().trim()))
        })?;
        let mut lines = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let t = raw.trim_start();
            if let Some((k, _)) = t.split_once('=') {
                lines.entry(k.trim().trim_matches('"').to_string()).or_insert(i + 1);
            }
        }
        let cfg = FileConfig { name: name.to_string(), values, lines };
        for (k, v) in &cfg.values {
            if !KEYS.contains(&k.as_str()) {
                return Err(cfg.error(k, "is not a known option"));
            }
            if matches!(v, Value::Table(_) | Value::Array(_)) {
                return Err(cfg.error(k, "must be a single value (the file is flat)"));
            }
        }
        Ok(cfg)
    }

    fn error(&self, key: &str, what: &str) -> CliError {
        let line = self.lines.get(key).copied().unwrap_or(1);
        CliError::Input(format!("config file {}, line {line}: `{key}` {what}", self.name))
    }

    pub fn f64(&self, key: &str, flag: Option<f64>) -> Result<Option<f64>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Float(v)) => Ok(Some(*v)),
            Some(Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(_) => Err(self.error(key, "must be a number")),
        }
    }

    pub fn u64(&self, key: &str, flag: Option<u64>) -> Result<Option<u64>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
            Some(_) => Err(self.error(key, "must be a non-negative integer")),
        }
    }

    pub fn string(&self, key: &str, flag: Option<&str>) -> Result<Option<String>, CliError> {
        if let Some(f) = flag {
            return Ok(Some(f.to_string()));
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.error(key, "must be a string")),
        }
    }
}
