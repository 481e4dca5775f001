//! Flat `section.key = value` configuration.
//!
//! Files are TOML; nested tables are flattened to dotted keys, so
//! `[pdhp]\nr = 0.5` and `pdhp.r = 0.5` are equivalent. Command-line
//! overrides use the same keys and take precedence over file values,
//! which take precedence over defaults.

use std::collections::BTreeMap;
use std::path::Path;

use toml::Value;

use crate::corpus::CorpusSpec;
use crate::error::{PdhpError, Result};
use crate::point_process::KernelBank;
use crate::smc::SmcConfig;

pub const KNOWN_KEYS: &[&str] = &[
    "kernel.timescales",
    "hawkes.baseline",
    "hawkes.weights",
    "pdhp.r",
    "pdhp.lambda0",
    "pdhp.epsilon_dead",
    "text.theta0",
    "text.vocab_size",
    "smc.n_particles",
    "smc.seed",
    "smc.em_sweeps",
    "smc.default_weights",
    "smc.parallel",
    "smc.progress_every",
    "corpus.n_clusters",
    "corpus.vocab_per_cluster",
    "corpus.words_per_doc",
    "corpus.horizon",
    "corpus.vocab_overlap",
    "corpus.temporal_overlap",
    "corpus.decorrelate_fraction",
    "corpus.zipf_exponent",
    "corpus.grid_step",
    "corpus.seed",
    "sweep.workers",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlatConfig {
    entries: BTreeMap<String, Value>,
}

impl FlatConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| PdhpError::Config(format!("config parse error: {e}")))?;
        let mut cfg = Self::new();
        flatten("", &Value::Table(table), &mut cfg.entries);
        for key in cfg.entries.keys() {
            check_key(key)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Sets `key` from a command-line string; the value is read as a TOML
    /// literal (`0.5`, `[0.5, 2, 8]`, `true`).
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        check_key(key)?;
        let value: Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .map_err(|e| PdhpError::Config(format!("bad value for {key}: {e}")))?
            .remove("v")
            .expect("just inserted");
        self.entries.insert(key.to_string(), value);
        Ok(())
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &FlatConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.entries.get(key).map(|v| as_f64(key, v)).transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.entries
            .get(key)
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                _ => Err(type_error(key, "a non-negative integer")),
            })
            .transpose()
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.entries.get(key).map(|v| v.as_bool().ok_or_else(|| type_error(key, "a boolean"))).transpose()
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.entries
            .get(key)
            .map(|v| match v {
                Value::Array(items) => items.iter().map(|x| as_f64(key, x)).collect(),
                _ => Err(type_error(key, "an array of numbers")),
            })
            .transpose()
    }

    pub fn apply_to_smc(&self, cfg: &mut SmcConfig) -> Result<()> {
        if let Some(ts) = self.f64_list("kernel.timescales")? {
            let bank = KernelBank::new(ts)?;
            if !self.contains("smc.default_weights") && bank.len() != cfg.default_weights.len() {
                let total: f64 = cfg.default_weights.iter().sum();
                cfg.default_weights = vec![total / bank.len() as f64; bank.len()];
            }
            cfg.bank = bank;
        }
        if let Some(v) = self.f64("pdhp.r")? {
            cfg.pdhp.r = v;
        }
        if let Some(v) = self.f64("pdhp.lambda0")? {
            cfg.pdhp.lambda0 = v;
        }
        if let Some(v) = self.f64("pdhp.epsilon_dead")? {
            cfg.pdhp.epsilon_dead = v;
        }
        if let Some(v) = self.f64("text.theta0")? {
            cfg.theta0 = v;
        }
        if let Some(v) = self.u64("text.vocab_size")? {
            cfg.vocab_size = Some(v as u32);
        }
        if let Some(v) = self.u64("smc.n_particles")? {
            cfg.n_particles = v as usize;
        }
        if let Some(v) = self.u64("smc.seed")? {
            cfg.seed = v;
        }
        if let Some(v) = self.u64("smc.em_sweeps")? {
            cfg.em_sweeps = v as usize;
        }
        if let Some(v) = self.f64_list("smc.default_weights")? {
            cfg.default_weights = v;
        }
        if let Some(v) = self.bool("smc.parallel")? {
            cfg.parallel = v;
        }
        if let Some(v) = self.u64("smc.progress_every")? {
            cfg.progress_every = v as usize;
        }
        cfg.validate()
    }

    pub fn apply_to_corpus(&self, spec: &mut CorpusSpec) -> Result<()> {
        if let Some(ts) = self.f64_list("kernel.timescales")? {
            if !self.contains("hawkes.weights") && ts.len() != spec.hawkes.weights.len() {
                let n = spec.hawkes.branching_ratio();
                spec.hawkes.weights = vec![n / ts.len() as f64; ts.len()];
            }
            spec.timescales = ts;
        }
        if let Some(v) = self.f64("hawkes.baseline")? {
            spec.hawkes.baseline = v;
        }
        if let Some(v) = self.f64_list("hawkes.weights")? {
            spec.hawkes.weights = v;
        }
        if let Some(v) = self.u64("corpus.n_clusters")? {
            spec.n_clusters = v as usize;
        }
        if let Some(v) = self.u64("corpus.vocab_per_cluster")? {
            spec.vocab_per_cluster = v as u32;
        }
        if let Some(v) = self.u64("corpus.words_per_doc")? {
            spec.words_per_doc = v as usize;
        }
        if let Some(v) = self.f64("corpus.horizon")? {
            spec.horizon = v;
        }
        if let Some(v) = self.f64("corpus.vocab_overlap")? {
            spec.vocab_overlap = v;
        }
        if let Some(v) = self.f64("corpus.temporal_overlap")? {
            spec.temporal_overlap = v;
        }
        if let Some(v) = self.f64("corpus.decorrelate_fraction")? {
            spec.decorrelate_fraction = v;
        }
        if let Some(v) = self.f64("corpus.zipf_exponent")? {
            spec.zipf_exponent = Some(v);
        }
        if let Some(v) = self.f64("corpus.grid_step")? {
            spec.grid_step = v;
        }
        if let Some(v) = self.u64("corpus.seed")? {
            spec.seed = v;
        }
        spec.validate()
    }

    pub fn workers(&self) -> Result<Option<usize>> {
        Ok(self.u64("sweep.workers")?.map(|v| v as usize))
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut BTreeMap<String, Value>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

fn check_key(key: &str) -> Result<()> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(PdhpError::Config(format!("unknown config key `{key}`")))
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_error(key, "a number")),
    }
}

fn type_error(key: &str, expected: &str) -> PdhpError {
    PdhpError::Config(format!("`{key}` must be {expected}"))
}
