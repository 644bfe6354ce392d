//! Run manifest: the effective config plus every stage's artifacts and
//! timings, rewritten atomically after each stage.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::pipeline::{PredictRecord, TrainRecord, VERSION};
use crate::error::{Error, Result};
use crate::metrics::Report;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Skip and tie counts gathered while scoring.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Lead hours skipped as undefined in the unified summary, per model
    /// (NSE, KGE, r).
    pub skipped_hours: BTreeMap<String, [usize; 3]>,
    /// Best-model ties resolved by model order, per metric.
    pub ties: BTreeMap<String, usize>,
    /// Stations no model could be scored on, per metric.
    pub unassigned: BTreeMap<String, usize>,
}

impl Diagnostics {
    pub fn from_report(report: &Report) -> Self {
        let mut d = Self::default();
        for m in &report.models {
            d.skipped_hours.insert(m.model.tag().into(), m.unified.skipped_hours);
        }
        for b in &report.per_station.best {
            d.ties.insert(b.metric.label().into(), b.ties);
            d.unassigned.insert(b.metric.label().into(), b.unassigned);
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub timings: Vec<StageTiming>,
    pub data_files: Vec<PathBuf>,
    pub training: BTreeMap<String, TrainRecord>,
    pub predictions: BTreeMap<String, PredictRecord>,
    pub reports: Vec<PathBuf>,
    pub diagnostics: Diagnostics,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            toolkit_version: VERSION.into(),
            config_sha256: cfg.digest(),
            config: cfg.clone(),
            timings: Vec::new(),
            data_files: Vec::new(),
            training: BTreeMap::new(),
            predictions: BTreeMap::new(),
            reports: Vec::new(),
            diagnostics: Diagnostics::default(),
        }
    }

    /// The manifest already in the run directory when it was written for the
    /// same config, otherwise a fresh one.
    pub fn open(cfg: &RunConfig) -> Self {
        fs::read_to_string(cfg.manifest_path())
            .ok()
            .and_then(|text| serde_json::from_str::<Self>(&text).ok())
            .filter(|m| m.config_sha256 == cfg.digest())
            .unwrap_or_else(|| Self::new(cfg))
    }

    pub fn record_time(&mut self, stage: impl Into<String>, seconds: f64) {
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds,
        });
    }

    pub fn record_train(&mut self, r: &TrainRecord) {
        self.training.insert(r.model.tag().into(), r.clone());
    }

    pub fn record_predict(&mut self, r: &PredictRecord) {
        self.predictions.insert(r.model.tag().into(), r.clone());
    }

    pub fn record_report(&mut self, report: &Report, paths: Vec<PathBuf>) {
        self.reports = paths;
        self.diagnostics = Diagnostics::from_report(report);
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_then_open_roundtrips_for_the_same_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::with_seed(5);
        cfg.out_dir = dir.path().to_owned();
        let mut m = RunManifest::new(&cfg);
        m.record_time("synth", 0.5);
        m.save(&cfg.manifest_path()).unwrap();
        assert_eq!(RunManifest::open(&cfg), m);
        cfg.seed = 6;
        assert!(RunManifest::open(&cfg).timings.is_empty());
    }
}
