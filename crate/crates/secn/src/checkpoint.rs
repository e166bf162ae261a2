//! Checkpoint directories: one `.ten` per parameter grouped by module
//! namespace, Adam moments alongside, and a JSON manifest with names,
//! shapes, step counters and the model config.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use secn_core::autodiff::{Adam, AdamConfig, AdamState};
use secn_core::config::ModelConfig;
use secn_core::params::ParamStore;
use secn_core::trainer::{CheckpointSink, SecNet};
use serde::{Deserialize, Serialize};

use crate::tenfile::{self, Dtype};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamEntry {
    pub name: String,
    pub step: u64,
    pub m: String,
    pub v: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub step: u64,
    pub config: BTreeMap<String, String>,
    pub params: Vec<ParamEntry>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub adam: Vec<AdamEntry>,
}

/// `lffn.rdb0.conv1.w` → `lffn/rdb0.conv1.w<suffix>.ten`
fn file_for(name: &str, suffix: &str) -> String {
    match name.split_once('.') {
        Some((ns, rest)) => format!("{ns}/{rest}{suffix}.ten"),
        None => format!("{name}{suffix}.ten"),
    }
}

fn write_file(dir: &Path, rel: &str, t: &secn_core::Tensor) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    tenfile::write(&path, t, Dtype::F64)
}

pub fn save(dir: &Path, config: &ModelConfig, step: u64, params: &ParamStore, adam: &Adam) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut entries = Vec::with_capacity(params.len());
    for (_, name, value) in params.iter() {
        let file = file_for(name, "");
        write_file(dir, &file, value)?;
        entries.push(ParamEntry { name: name.to_string(), file, shape: value.shape().to_vec() });
    }
    let mut states = Vec::new();
    for (id, st) in adam.states() {
        let name = params.name(id);
        let (m, v) = (file_for(name, ".adam_m"), file_for(name, ".adam_v"));
        write_file(dir, &m, &st.m)?;
        write_file(dir, &v, &st.v)?;
        states.push(AdamEntry { name: name.to_string(), step: st.step, m, v });
    }
    let manifest = Manifest {
        version: 1,
        step,
        config: config.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        params: entries,
        lr: adam.config.lr,
        beta1: adam.config.beta1,
        beta2: adam.config.beta2,
        eps: adam.config.eps,
        adam: states,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST), json).with_context(|| format!("writing manifest in {}", dir.display()))
}

pub struct Loaded {
    pub model: SecNet,
    pub params: ParamStore,
    pub adam: Adam,
    pub step: u64,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ensure!(m.version == 1, "unsupported checkpoint version {}", m.version);
    Ok(m)
}

pub fn load(dir: &Path) -> Result<Loaded> {
    let manifest = read_manifest(dir)?;
    let mut config = ModelConfig::toy();
    for (k, v) in &manifest.config {
        config.set(k, v)?;
    }
    let (model, mut params) = SecNet::init(&config, 0)?;
    ensure!(
        manifest.params.len() == params.len(),
        "checkpoint has {} parameters, the configured network {}",
        manifest.params.len(),
        params.len()
    );
    for e in &manifest.params {
        let Some(id) = params.id(&e.name) else {
            bail!("checkpoint parameter `{}` does not exist in the network", e.name);
        };
        let t = tenfile::read(&dir.join(&e.file))?;
        ensure!(t.shape() == params.get(id).shape(), "`{}` has shape {:?}, expected {:?}", e.name, t.shape(), params.get(id).shape());
        params.set(id, t)?;
    }
    let mut adam = Adam::new(AdamConfig { lr: manifest.lr, beta1: manifest.beta1, beta2: manifest.beta2, eps: manifest.eps });
    for e in &manifest.adam {
        let id = params.id(&e.name).with_context(|| format!("optimiser state for unknown parameter `{}`", e.name))?;
        let m = tenfile::read(&dir.join(&e.m))?;
        let v = tenfile::read(&dir.join(&e.v))?;
        adam.insert_state(id, AdamState { m, v, step: e.step });
    }
    Ok(Loaded { model, params, adam, step: manifest.step })
}

/// Writes each improvement over the previous one into `dir`.
pub struct DirSink {
    pub dir: PathBuf,
    pub config: ModelConfig,
}

impl CheckpointSink for DirSink {
    fn save(&mut self, step: u64, params: &ParamStore, adam: &Adam) -> secn_core::Result<String> {
        let fail = |e: anyhow::Error| secn_core::Error::Training(format!("saving checkpoint: {e:#}"));
        // write aside first so an interrupted save never loses the old best
        let staging = self.dir.with_extension("partial");
        let replace = || -> Result<()> {
            if staging.exists() {
                fs::remove_dir_all(&staging)?;
            }
            save(&staging, &self.config, step, params, adam)?;
            if self.dir.exists() {
                fs::remove_dir_all(&self.dir)?;
            }
            fs::rename(&staging, &self.dir)?;
            Ok(())
        };
        replace().map_err(fail)?;
        Ok(self.dir.display().to_string())
    }
}
