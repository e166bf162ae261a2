//! Flat `key = value` configuration files covering every model field.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use secn_core::config::ModelConfig;

/// Problems the user can fix by editing the file; reported as usage errors.
#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("{path}:{line}: expected `key = value`, found `{text}`")]
    Syntax { path: String, line: usize, text: String },
    #[error("{path}: key `{key}` appears twice")]
    Duplicate { path: String, key: String },
    #[error("{path}: missing key `{key}`")]
    Missing { path: String, key: String },
    #[error("{path}: {source}")]
    Value { path: String, source: secn_core::Error },
}

pub fn parse_pairs(path: &Path, text: &str) -> Result<Vec<(String, String)>, ConfigFileError> {
    let name = path.display().to_string();
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigFileError::Syntax { path: name, line: i + 1, text: raw.to_string() });
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !seen.insert(k.clone()) {
            return Err(ConfigFileError::Duplicate { path: name, key: k });
        }
        pairs.push((k, v));
    }
    Ok(pairs)
}

/// Parses a config file that must set every field of [`ModelConfig`].
pub fn parse(path: &Path, text: &str) -> Result<ModelConfig, ConfigFileError> {
    let pairs = parse_pairs(path, text)?;
    let name = path.display().to_string();
    let mut cfg = ModelConfig::toy();
    for (k, v) in &pairs {
        cfg.set(k, v).map_err(|source| ConfigFileError::Value { path: name.clone(), source })?;
    }
    for (key, _) in cfg.to_pairs() {
        if !pairs.iter().any(|(k, _)| k == key) {
            return Err(ConfigFileError::Missing { path: name, key: key.to_string() });
        }
    }
    cfg.validate().map_err(|source| ConfigFileError::Value { path: name, source })?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ModelConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(path, &text).map_err(|e| anyhow!(e))
}

pub fn render(cfg: &ModelConfig) -> String {
    cfg.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn save(path: &Path, cfg: &ModelConfig) -> Result<()> {
    fs::write(path, render(cfg)).with_context(|| format!("writing {}", path.display()))
}
