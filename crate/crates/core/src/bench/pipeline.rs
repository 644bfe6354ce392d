//! The five pipeline stages: synth, train, predict, evaluate and report.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::data::{
    assemble_windows, fill_short_gaps, fit_norm_stats, generate_synthetic_catchments, load_metadata, load_series,
    make_split, write_metadata, write_series, NormStats, SplitSpec, StationMeta, StationSeries, TimeRange,
    WindowSample,
};
use crate::error::{Error, Result};
use crate::metrics::{build_report, read_predictions, write_predictions, write_report, ForecastArchive, Report};
use crate::models::{
    build_network, load_checkpoint, persistence_forecast, save_checkpoint, train, Architecture, Network, TrainOutcome,
};
use crate::par::{self, Exec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Samples per forward pass when predicting.
const PREDICT_CHUNK: usize = 32;

/// Loaded, gap-filled stations with their split and normalization.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub metas: Vec<StationMeta>,
    pub series: Vec<StationSeries>,
    pub split: SplitSpec,
    pub stats: NormStats,
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let (meta_path, series_dir) = cfg.data_paths();
        let metas = load_metadata(&meta_path)?;
        let series = metas
            .iter()
            .map(|m| {
                let path = series_dir.join(format!("{}.csv", m.station_id));
                let raw = load_series(&path, &m.station_id)?;
                Ok(fill_short_gaps(&raw, cfg.data.gap_fill_hours))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(cfg, metas, series)
    }

    pub fn from_parts(cfg: &RunConfig, metas: Vec<StationMeta>, series: Vec<StationSeries>) -> Result<Self> {
        let start = series.iter().map(|s| s.start).min();
        let end = series.iter().map(|s| s.span().end).max();
        let (Some(start), Some(end)) = (start, end) else {
            return Err(Error::Metadata("no stations".into()));
        };
        let split = make_split(TimeRange::new(start, end), cfg.split.water_year_end_month)?;
        let stats = fit_norm_stats(&series, &metas, &split)?;
        Ok(Self {
            metas,
            series,
            split,
            stats,
        })
    }

    /// Admissible windows of station `i` whose horizon lies in `range`.
    pub fn station_windows(&self, i: usize, range: TimeRange, stride: usize) -> Result<Vec<WindowSample>> {
        assemble_windows(&self.series[i], &self.metas[i], &self.stats, range, stride)
    }

    /// Windows of every station, concatenated in station order.
    pub fn windows(&self, range: TimeRange, stride: usize, exec: Exec) -> Result<Vec<WindowSample>> {
        let idx: Vec<usize> = (0..self.metas.len()).collect();
        let per = par::map(exec, &idx, |&i| self.station_windows(i, range, stride));
        let mut out = Vec::new();
        for w in per {
            out.extend(w?);
        }
        Ok(out)
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes `n_stations` synthetic catchments to the run's data directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let (metas, series) = generate_synthetic_catchments(cfg.synth.n_stations, cfg.synth.n_hours, cfg.seed)?;
    let (meta_path, series_dir) = cfg.data_paths();
    if let Some(parent) = meta_path.parent() {
        create_dir(parent)?;
    }
    create_dir(&series_dir)?;
    write_metadata(&meta_path, &metas)?;
    let mut paths = vec![meta_path];
    for s in &series {
        let path = series_dir.join(format!("{}.csv", s.station_id));
        write_series(&path, s)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Outcome of training one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub model: Architecture,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
    pub seconds: f64,
}

/// Trains `arch` on the run's data and writes its checkpoint and log.
pub fn cmd_train(cfg: &RunConfig, arch: Architecture, exec: Exec) -> Result<TrainRecord> {
    if arch == Architecture::Persistence {
        return Err(Error::NoTraining(arch.tag().into()));
    }
    let ds = Dataset::load(cfg)?;
    train_model(cfg, &ds, arch, exec)
}

/// Trains every configured model except persistence. Models run in
/// parallel under [`Exec::Parallel`]; each has its own derived seed, so the
/// artifacts match a sequential run.
pub fn cmd_train_all(cfg: &RunConfig, exec: Exec) -> Result<Vec<TrainRecord>> {
    let ds = Dataset::load(cfg)?;
    let archs: Vec<Architecture> = cfg
        .architectures()?
        .into_iter()
        .filter(|&a| a != Architecture::Persistence)
        .collect();
    par::map(exec, &archs, |&a| train_model(cfg, &ds, a, exec))
        .into_iter()
        .collect()
}

pub fn train_model(cfg: &RunConfig, ds: &Dataset, arch: Architecture, exec: Exec) -> Result<TrainRecord> {
    let clock = Instant::now();
    let plan = cfg.plan(arch)?;
    let train_set = ds.windows(ds.split.train, cfg.windows.train_stride, exec)?;
    let val_set = ds.windows(ds.split.val, cfg.windows.train_stride, exec)?;
    let mut net = build_network(&plan.spec)?;
    let outcome = train(net.as_mut(), &train_set, &val_set, &plan.train, exec)?;
    let checkpoint = cfg.checkpoint_path(arch);
    let log = cfg.log_path(arch);
    for path in [&checkpoint, &log] {
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
    }
    save_checkpoint(&checkpoint, net.spec(), net.params())?;
    write_train_log(&log, &outcome)?;
    Ok(TrainRecord {
        model: arch,
        checkpoint,
        log,
        train_samples: train_set.len(),
        val_samples: val_set.len(),
        epochs: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        best_val_mae: outcome.best_val_mae,
        stopped_early: outcome.stopped_early,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

pub const TRAIN_LOG_HEADER: [&str; 4] = ["epoch", "train_mae", "val_mae", "lr"];

fn write_train_log(path: &Path, outcome: &TrainOutcome) -> Result<()> {
    let mut text = TRAIN_LOG_HEADER.join(",");
    text.push('\n');
    for row in &outcome.log {
        text.push_str(&format!("{},{},{},{}\n", row.epoch, row.train_mae, row.val_mae, row.lr));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Forecast archive written for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRecord {
    pub model: Architecture,
    pub dir: PathBuf,
    pub stations: usize,
    pub anchors: usize,
    /// Stations without a single admissible test window.
    pub skipped_stations: Vec<String>,
    pub seconds: f64,
}

fn load_for_prediction(cfg: &RunConfig, arch: Architecture) -> Result<Option<Box<dyn Network>>> {
    if arch == Architecture::Persistence {
        return Ok(None);
    }
    let plan = cfg.plan(arch)?;
    let ckpt = load_checkpoint(&cfg.checkpoint_path(arch))?;
    if ckpt.spec.arch != arch || ckpt.spec.policy != plan.spec.policy {
        return Err(Error::Config(format!(
            "checkpoint holds {} with policy {}, but {} with policy {} was requested",
            ckpt.spec.arch,
            ckpt.spec.policy.as_str(),
            arch,
            plan.spec.policy.as_str()
        )));
    }
    ckpt.into_network().map(Some)
}

/// Physical-unit forecasts of `samples`, 120 per sample, flattened.
pub fn forecast(net: Option<&dyn Network>, samples: &[WindowSample], stats: &NormStats, exec: Exec) -> Result<Vec<f64>> {
    let Some(net) = net else {
        return Ok(samples.iter().flat_map(persistence_forecast).collect());
    };
    let refs: Vec<&WindowSample> = samples.iter().collect();
    let chunks: Vec<&[&WindowSample]> = refs.chunks(PREDICT_CHUNK).collect();
    let outs = par::map(exec, &chunks, |chunk| net.predict_norm(chunk));
    let mut flat = Vec::with_capacity(samples.len() * crate::HORIZON);
    let mut rows = samples.iter();
    for out in outs {
        for pred in out? {
            let sample = rows.next().expect("one prediction per sample");
            let z = stats.station(&sample.station_id)?;
            flat.extend(pred.into_iter().map(|v| z.invert(v)));
        }
    }
    Ok(flat)
}

/// Forecasts every admissible test window and writes one CSV per station.
pub fn cmd_predict(cfg: &RunConfig, arch: Architecture, exec: Exec) -> Result<PredictRecord> {
    let ds = Dataset::load(cfg)?;
    predict_model(cfg, &ds, arch, exec)
}

pub fn predict_model(cfg: &RunConfig, ds: &Dataset, arch: Architecture, exec: Exec) -> Result<PredictRecord> {
    let clock = Instant::now();
    let net = load_for_prediction(cfg, arch)?;
    let dir = cfg.predictions_dir(arch);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    create_dir(&dir)?;
    let (mut stations, mut anchors, mut skipped) = (0, 0, Vec::new());
    for (i, meta) in ds.metas.iter().enumerate() {
        let samples = ds.station_windows(i, ds.split.test, cfg.windows.eval_stride)?;
        if samples.is_empty() {
            skipped.push(meta.station_id.clone());
            continue;
        }
        let predicted = forecast(net.as_deref(), &samples, &ds.stats, exec)?;
        let observed: Vec<f64> = samples.iter().flat_map(|s| s.target.iter().copied()).collect();
        let times: Vec<_> = samples.iter().map(|s| s.anchor_time).collect();
        write_predictions(&dir.join(format!("{}.csv", meta.station_id)), &times, &observed, &predicted)?;
        stations += 1;
        anchors += samples.len();
    }
    if stations == 0 {
        return Err(Error::Alignment(format!("{arch}: no station has an admissible test window")));
    }
    Ok(PredictRecord {
        model: arch,
        dir,
        stations,
        anchors,
        skipped_stations: skipped,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Reads the stored prediction CSVs of `models`. Every model must cover the
/// same stations with the same anchors and observations.
pub fn load_archive(cfg: &RunConfig, models: &[Architecture]) -> Result<ForecastArchive> {
    let mut archive = ForecastArchive::new();
    let mut station_sets: Vec<(Architecture, BTreeSet<String>)> = Vec::new();
    for &m in models {
        let dir = cfg.predictions_dir(m);
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|x| x == "csv") {
                files.push(path);
            }
        }
        files.sort();
        let mut ids = BTreeSet::new();
        for path in files {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            let p = read_predictions(&path)?;
            archive.insert(&id, m, p.anchors, p.observed, p.predicted)?;
            ids.insert(id);
        }
        station_sets.push((m, ids));
    }
    if let Some((first, reference)) = station_sets.first() {
        for (m, ids) in &station_sets[1..] {
            let diff: Vec<&String> = reference.symmetric_difference(ids).collect();
            if !diff.is_empty() {
                return Err(Error::Alignment(format!(
                    "{first} and {m} cover different stations: {}",
                    diff.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                )));
            }
        }
    }
    Ok(archive)
}

/// `# key: value` lines heading every report file.
pub fn provenance(cfg: &RunConfig) -> Vec<(String, String)> {
    vec![
        ("flowcast".into(), VERSION.into()),
        ("seed".into(), cfg.seed.to_string()),
        ("config_sha256".into(), cfg.digest()),
    ]
}

/// Scores the stored archives of `models` and writes the report files.
pub fn cmd_evaluate(cfg: &RunConfig, models: &[Architecture], exec: Exec) -> Result<(Report, Vec<PathBuf>)> {
    if models.is_empty() {
        return Err(Error::Config("no models to evaluate".into()));
    }
    let archive = load_archive(cfg, models)?;
    let report = build_report(&archive, models, provenance(cfg), exec)?;
    let paths = write_report(&cfg.report_dir(), &report)?;
    Ok((report, paths))
}
