//! JSON run configuration.
//!
//! ```json
//! {
//!   "dataset": { "format": "mnist", "images": "train-images-idx3-ubyte",
//!                "labels": "train-labels-idx1-ubyte", "limit": 5000 },
//!   "train": { "bit_width": 16, "phase1_epochs": 15, "seed": 0 },
//!   "eval": { "query_count": 500, "top_k": 100, "seed": 0 },
//!   "output_dir": "out"
//! }
//! ```
//!
//! Every `train` and `eval` key is optional and falls back to the library
//! defaults. `train.network` overrides the default layer stack. Relative paths
//! are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uth_core::network::{build_network, default_layers};
use uth_core::{Dataset, Dims, EvalConfig, LayerSpec, NetworkParams, TrainConfig};

use crate::error::{Error, Result};
use crate::{cifar, idx};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DatasetSource {
    Mnist { images: PathBuf, labels: PathBuf },
    Cifar10 { batches: Vec<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub source: DatasetSource,
    /// Keep only the first `limit` images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(flatten)]
    pub config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<Vec<LayerSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Sets both the training and the evaluation seed.
    pub seed: Option<u64>,
    pub bits: Option<usize>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads, resolves, overrides and validates a config file.
    pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.dataset.source {
            DatasetSource::Mnist { images, labels } => {
                *images = resolve(base, images);
                *labels = resolve(base, labels);
            }
            DatasetSource::Cifar10 { batches } => {
                for b in batches {
                    *b = resolve(base, b);
                }
            }
        }
        self.output_dir = resolve(base, &self.output_dir);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.train.config.seed = seed;
            self.eval.seed = seed;
        }
        if let Some(bits) = o.bits {
            self.train.config.bit_width = bits;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
    }

    pub fn input_dims(&self) -> Dims {
        match self.dataset.source {
            DatasetSource::Mnist { .. } => Dims::MNIST,
            DatasetSource::Cifar10 { .. } => Dims::CIFAR10,
        }
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        self.train.network.clone().unwrap_or_else(|| default_layers(self.train.config.bit_width))
    }

    pub fn validate(&self) -> Result<()> {
        let paths: Vec<&PathBuf> = match &self.dataset.source {
            DatasetSource::Mnist { images, labels } => vec![images, labels],
            DatasetSource::Cifar10 { batches } => {
                if batches.is_empty() {
                    return Err(Error::Consistency("cifar10 dataset lists no batch files".into()));
                }
                batches.iter().collect()
            }
        };
        for p in paths {
            if !p.is_file() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("dataset file {} does not exist", p.display()),
                )));
            }
        }
        if self.dataset.limit == Some(0) {
            return Err(Error::Consistency("dataset limit must be at least 1".into()));
        }
        self.train.config.validate()?;
        self.eval.validate()?;
        // checks that the layer stack fits the input and ends in M units
        let net = self.initial_network()?;
        if net.bit_width() != self.train.config.bit_width {
            return Err(Error::Consistency(format!(
                "network emits {} bits but train.bit_width is {}",
                net.bit_width(),
                self.train.config.bit_width
            )));
        }
        Ok(())
    }

    /// Freshly initialized network, seeded by the training seed.
    pub fn initial_network(&self) -> Result<NetworkParams> {
        Ok(build_network(&self.layers(), self.input_dims(), self.train.config.seed)?)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = match &self.dataset.source {
            DatasetSource::Mnist { images, labels } => idx::load_mnist_idx(images, labels)?,
            DatasetSource::Cifar10 { batches } => cifar::load_cifar10(batches)?,
        };
        Ok(match self.dataset.limit {
            Some(n) if n < ds.len() => ds.take(n),
            _ => ds,
        })
    }

    /// Canonical JSON of the effective configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
