//! Convolution cache files. A cache records the discretizations produced by
//! `aggregate` and a SHA-256 hash of the model and settings that produced
//! them; loading against any other model or settings fails.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hbn_core::aggregate::{AggSettings, CondDensity, ConvolutionCache};
use hbn_core::discretize::{Partition, RefinePolicy, SpreadMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model_file::ModelFile;

pub const CACHE_VERSION: u32 = 1;

/// The aggregation settings a cache depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggConfig {
    pub severity_iterations: usize,
    pub frequency_iterations: usize,
    pub max_bins: usize,
    pub exact_spreading: bool,
}

impl Default for AggConfig {
    fn default() -> Self {
        let s = AggSettings::default();
        AggConfig {
            severity_iterations: s.severity_iters,
            frequency_iterations: s.frequency_iters,
            max_bins: s.policy.max_bins,
            exact_spreading: s.spread == SpreadMode::Exact,
        }
    }
}

impl AggConfig {
    pub fn settings(&self) -> AggSettings {
        AggSettings {
            severity_iters: self.severity_iterations,
            frequency_iters: self.frequency_iterations,
            policy: RefinePolicy { max_bins: self.max_bins, ..Default::default() },
            spread: if self.exact_spreading { SpreadMode::Exact } else { SpreadMode::Uniform },
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PartitionDto {
    bins: Vec<[f64; 2]>,
    lattice: bool,
}

impl PartitionDto {
    fn of(p: &Partition) -> PartitionDto {
        PartitionDto { bins: p.bins.iter().map(|&(a, b)| [a, b]).collect(), lattice: p.lattice }
    }

    fn partition(&self) -> Result<Partition> {
        Ok(Partition::from_bins(self.bins.iter().map(|b| (b[0], b[1])).collect(), self.lattice)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ComponentDto {
    partition: PartitionDto,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheFile {
    version: u32,
    /// Hex SHA-256 of the producing model and `settings`.
    pub hash: String,
    pub settings: AggConfig,
    support: Vec<u64>,
    weights: Vec<f64>,
    selectors: Vec<f64>,
    partition: PartitionDto,
    components: Vec<ComponentDto>,
}

/// Hash of the canonical model JSON followed by the settings JSON.
pub fn content_hash(model: &ModelFile, settings: &AggConfig) -> String {
    let mut h = Sha256::new();
    h.update(model.to_json().as_bytes());
    h.update(serde_json::to_string(settings).expect("settings serialize").as_bytes());
    hex::encode(h.finalize())
}

impl CacheFile {
    pub fn new(model: &ModelFile, settings: &AggConfig, cache: &ConvolutionCache) -> CacheFile {
        CacheFile {
            version: CACHE_VERSION,
            hash: content_hash(model, settings),
            settings: settings.clone(),
            support: cache.support.clone(),
            weights: cache.weights.clone(),
            selectors: cache.selectors.clone(),
            partition: PartitionDto::of(&cache.partition),
            components: cache
                .components
                .iter()
                .map(|c| ComponentDto { partition: PartitionDto::of(&c.partition), rows: c.rows.clone() })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("caches always serialize");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<CacheFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let c: CacheFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if c.version != CACHE_VERSION {
            bail!("unsupported cache version {}", c.version);
        }
        Ok(c)
    }

    /// Rebuilds the cache for `model`, refusing a cache produced from a
    /// different model or different settings.
    pub fn restore(&self, model: &ModelFile) -> Result<ConvolutionCache> {
        let expected = content_hash(model, &self.settings);
        if expected != self.hash {
            bail!("stale cache: it was produced from a different model or settings (cache hash {}, model hashes to {expected})", self.hash);
        }
        let causes = model.compound_spec()?.causes()?;
        let components = self
            .components
            .iter()
            .map(|c| Ok(CondDensity { partition: c.partition.partition()?, rows: c.rows.clone() }))
            .collect::<Result<Vec<_>>>()?;
        if components.iter().any(|c| c.rows.len() != causes.len()) {
            bail!("cache rows do not match the cause configurations of the model");
        }
        Ok(ConvolutionCache {
            causes,
            support: self.support.clone(),
            weights: self.weights.clone(),
            components,
            partition: self.partition.partition()?,
            selectors: self.selectors.clone(),
        })
    }
}
