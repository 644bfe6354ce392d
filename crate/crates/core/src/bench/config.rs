//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/desk"
//! models = ["persistence", "seq2seq", "gru", "lstm", "transformer"]
//!
//! [data]          # omit `meta_path` / `series_dir` to use `<out_dir>/data`
//! gap_fill_hours = 3
//!
//! [synth]
//! n_stations = 8
//! n_hours = 21900
//!
//! [split]
//! water_year_end_month = 9
//!
//! [windows]
//! train_stride = 24
//! eval_stride = 1
//!
//! [train]         # shared defaults
//! lr = 1e-4
//! batch_size = 512
//!
//! [model.transformer]   # per-model overrides
//! lr = 1e-3
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ExtensionPolicy;
use crate::error::{Error, Result};
use crate::models::{ArchSpec, Architecture, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub windows: WindowConfig,
    #[serde(default)]
    pub train: TrainDefaults,
    #[serde(default)]
    pub model: BTreeMap<String, ModelOverride>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_models() -> Vec<String> {
    Architecture::ALL.iter().map(|a| a.tag().to_owned()).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub meta_path: Option<PathBuf>,
    pub series_dir: Option<PathBuf>,
    #[serde(default = "default_gap_fill")]
    pub gap_fill_hours: usize,
}

fn default_gap_fill() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_stations: usize,
    pub n_hours: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_stations: 8,
            n_hours: 21900,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub water_year_end_month: u32,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            water_year_end_month: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub train_stride: usize,
    pub eval_stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            train_stride: 24,
            eval_stride: 1,
        }
    }
}

/// Training and architecture settings shared by every model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainDefaults {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub early_stop_patience: usize,
    pub chunk_size: usize,
    pub hidden: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
}

impl Default for TrainDefaults {
    fn default() -> Self {
        let t = TrainConfig::default();
        let a = ArchSpec::new(Architecture::Transformer, 0);
        Self {
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            plateau_patience: t.plateau_patience,
            plateau_factor: t.plateau_factor,
            min_lr: t.min_lr,
            early_stop_patience: t.early_stop_patience,
            chunk_size: t.chunk_size,
            hidden: a.hidden,
            d_model: a.d_model,
            heads: a.heads,
            ffn: a.ffn,
        }
    }
}

/// Optional per-model replacements for [`TrainDefaults`] fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverride {
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub plateau_patience: Option<usize>,
    pub early_stop_patience: Option<usize>,
    pub chunk_size: Option<usize>,
    pub hidden: Option<usize>,
    pub policy: Option<ExtensionPolicy>,
}

/// Fully resolved settings of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPlan {
    pub spec: ArchSpec,
    pub train: TrainConfig,
    pub policy_overridden: bool,
}

impl RunConfig {
    /// Default configuration with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            out_dir: default_out_dir(),
            models: default_models(),
            data: DataConfig {
                gap_fill_hours: default_gap_fill(),
                ..Default::default()
            },
            synth: SynthConfig::default(),
            split: SplitConfig::default(),
            windows: WindowConfig::default(),
            train: TrainDefaults::default(),
            model: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let archs = self.architectures()?;
        if archs.is_empty() {
            return Err(Error::Config("`models` is empty".into()));
        }
        for tag in self.model.keys() {
            Architecture::parse(tag)?;
        }
        let w = &self.windows;
        if w.train_stride == 0 || w.eval_stride == 0 {
            return Err(Error::Config("window strides must be positive".into()));
        }
        if self.data.meta_path.is_some() != self.data.series_dir.is_some() {
            return Err(Error::Config("set both `data.meta_path` and `data.series_dir` or neither".into()));
        }
        for &arch in &archs {
            if arch != Architecture::Persistence {
                self.plan(arch)?;
            }
        }
        Ok(())
    }

    /// Requested models in canonical order.
    pub fn architectures(&self) -> Result<Vec<Architecture>> {
        let mut archs = self.models.iter().map(|t| Architecture::parse(t)).collect::<Result<Vec<_>>>()?;
        archs.sort();
        archs.dedup();
        Ok(archs)
    }

    /// Seed of model `arch`: the master seed plus the model's index.
    pub fn model_seed(&self, arch: Architecture) -> u64 {
        self.seed.wrapping_add(arch.index() as u64)
    }

    pub fn plan(&self, arch: Architecture) -> Result<ModelPlan> {
        let d = &self.train;
        let o = self.model.get(arch.tag()).cloned().unwrap_or_default();
        let seed = self.model_seed(arch);
        let spec = ArchSpec {
            arch,
            hidden: o.hidden.unwrap_or(d.hidden),
            heads: d.heads,
            d_model: d.d_model,
            ffn: d.ffn,
            policy: o.policy.unwrap_or(arch.default_policy()),
            seed,
        };
        let train = TrainConfig {
            lr: o.lr.unwrap_or(d.lr),
            batch_size: o.batch_size.unwrap_or(d.batch_size),
            max_epochs: o.max_epochs.unwrap_or(d.max_epochs),
            plateau_patience: o.plateau_patience.unwrap_or(d.plateau_patience),
            plateau_factor: d.plateau_factor,
            min_lr: d.min_lr,
            early_stop_patience: o.early_stop_patience.unwrap_or(d.early_stop_patience),
            chunk_size: o.chunk_size.unwrap_or(d.chunk_size),
            shuffle_seed: seed,
            target_train_mae: None,
            max_seconds: None,
        };
        if !(train.lr > 0.0) || train.batch_size == 0 || train.max_epochs == 0 || train.chunk_size == 0 {
            return Err(Error::Config(format!(
                "{arch}: lr, batch_size, max_epochs and chunk_size must be positive"
            )));
        }
        if spec.hidden == 0 || spec.d_model == 0 || spec.heads == 0 || spec.d_model % spec.heads != 0 {
            return Err(Error::Config(format!(
                "{arch}: need positive sizes and d_model divisible by heads"
            )));
        }
        Ok(ModelPlan {
            spec,
            train,
            policy_overridden: o.policy.is_some(),
        })
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    /// Metadata file and series directory the run reads.
    pub fn data_paths(&self) -> (PathBuf, PathBuf) {
        match (&self.data.meta_path, &self.data.series_dir) {
            (Some(m), Some(s)) => (m.clone(), s.clone()),
            _ => (self.data_dir().join("metadata.csv"), self.data_dir().join("series")),
        }
    }

    pub fn checkpoint_path(&self, arch: Architecture) -> PathBuf {
        self.out_dir.join("checkpoints").join(format!("{}.ckpt", arch.tag()))
    }

    pub fn log_path(&self, arch: Architecture) -> PathBuf {
        self.out_dir.join("logs").join(format!("{}.csv", arch.tag()))
    }

    pub fn predictions_dir(&self, arch: Architecture) -> PathBuf {
        self.out_dir.join("predictions").join(arch.tag())
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out_dir.join("report")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join("manifest.json")
    }
}
