//! Unified, per-station-hourly and per-station aggregation protocols.

use serde::{Deserialize, Serialize};

use super::archive::{ForecastArchive, StationForecasts};
use super::scores::{kge, median, nrmse, nse, pearson_r};
use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::par::{self, Exec};
use crate::HORIZON;

/// The four scores in report column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Nse,
    Kge,
    R,
    Nrmse,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Nse, Metric::Kge, Metric::R, Metric::Nrmse];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Nse => "NSE",
            Metric::Kge => "KGE",
            Metric::R => "R",
            Metric::Nrmse => "NRMSE",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Nrmse)
    }
}

/// NSE, KGE and r at one lead hour; `None` marks an undefined value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HourlyScores {
    pub lead_hour: usize,
    pub nse: Option<f64>,
    pub kge: Option<f64>,
    pub r: Option<f64>,
}

fn hourly(lead_hour: usize, obs: &[f64], pred: &[f64]) -> HourlyScores {
    HourlyScores {
        lead_hour,
        nse: nse(obs, pred).ok(),
        kge: kge(obs, pred).ok().map(|k| k.kge),
        r: pearson_r(obs, pred).ok(),
    }
}

fn station_lead(s: &StationForecasts, model: Architecture, lead: usize) -> (Vec<f64>, Vec<f64>) {
    let obs = s.observed_at(lead).collect();
    let pred = s.predicted_at(model, lead).expect("model checked").collect();
    (obs, pred)
}

/// Scores per lead hour after pooling every station and anchor.
pub fn unified_hourly(archive: &ForecastArchive, model: Architecture) -> Result<Vec<HourlyScores>> {
    archive.require(model)?;
    Ok((1..=HORIZON)
        .map(|lead| {
            let (mut obs, mut pred) = (Vec::new(), Vec::new());
            for s in archive.stations() {
                let (o, p) = station_lead(s, model, lead);
                obs.extend(o);
                pred.extend(p);
            }
            hourly(lead, &obs, &pred)
        })
        .collect())
}

/// Per-metric medians of defined hourly values plus the number of hours
/// skipped as undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianScores {
    pub nse: Option<f64>,
    pub kge: Option<f64>,
    pub r: Option<f64>,
    pub skipped: [usize; 3],
}

fn hourly_medians(rows: &[HourlyScores]) -> MedianScores {
    let pick = |f: fn(&HourlyScores) -> Option<f64>| -> (Option<f64>, usize) {
        let vals: Vec<f64> = rows.iter().filter_map(f).collect();
        (median(&vals), rows.len() - vals.len())
    };
    let (nse, s0) = pick(|h| h.nse);
    let (kge, s1) = pick(|h| h.kge);
    let (r, s2) = pick(|h| h.r);
    MedianScores {
        nse,
        kge,
        r,
        skipped: [s0, s1, s2],
    }
}

/// One row of the unified summary table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnifiedSummary {
    pub nse: f64,
    pub kge: f64,
    pub r: f64,
    pub nrmse: f64,
    pub skipped_hours: [usize; 3],
}

/// Medians of the unified hourly scores and the NRMSE of the whole pooled
/// prediction set.
pub fn unified_summary(archive: &ForecastArchive, model: Architecture) -> Result<UnifiedSummary> {
    let rows = unified_hourly(archive, model)?;
    let m = hourly_medians(&rows);
    let (mut obs, mut pred) = (Vec::new(), Vec::new());
    for s in archive.stations() {
        obs.extend_from_slice(&s.observed);
        pred.extend_from_slice(&s.predicted[&model]);
    }
    match (m.nse, m.kge, m.r) {
        (Some(nse), Some(kge), Some(r)) => Ok(UnifiedSummary {
            nse,
            kge,
            r,
            nrmse: nrmse(&obs, &pred)?,
            skipped_hours: m.skipped,
        }),
        _ => Err(Error::UndefinedMetric("unified summary: a metric is undefined at every lead hour")),
    }
}

/// Cross-station median NSE and KGE at one lead hour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMedianRow {
    pub lead_hour: usize,
    pub nse: Option<f64>,
    pub kge: Option<f64>,
    /// Stations with an undefined NSE / KGE at this hour.
    pub skipped: [usize; 2],
}

/// Minimum, maximum, median and mean of a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub mean: f64,
}

impl SeriesStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let median = median(values)?;
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            median,
            mean: values.iter().sum::<f64>() / values.len() as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationHourlyMedian {
    pub rows: Vec<StationMedianRow>,
    pub nse: Option<SeriesStats>,
    pub kge: Option<SeriesStats>,
}

/// Per lead hour, scores each station on its own anchors and takes the
/// median across stations; summarizes the 120 medians.
pub fn per_station_hourly_median(archive: &ForecastArchive, model: Architecture, exec: Exec) -> Result<StationHourlyMedian> {
    archive.require(model)?;
    let stations: Vec<&StationForecasts> = archive.stations().collect();
    let per_station: Vec<Vec<HourlyScores>> = par::map(exec, &stations, |s| station_hourly(s, model));
    let rows: Vec<StationMedianRow> = (0..HORIZON)
        .map(|h| {
            let nse: Vec<f64> = per_station.iter().filter_map(|rows| rows[h].nse).collect();
            let kge: Vec<f64> = per_station.iter().filter_map(|rows| rows[h].kge).collect();
            StationMedianRow {
                lead_hour: h + 1,
                nse: median(&nse),
                kge: median(&kge),
                skipped: [stations.len() - nse.len(), stations.len() - kge.len()],
            }
        })
        .collect();
    let nse: Vec<f64> = rows.iter().filter_map(|r| r.nse).collect();
    let kge: Vec<f64> = rows.iter().filter_map(|r| r.kge).collect();
    Ok(StationHourlyMedian {
        nse: SeriesStats::of(&nse),
        kge: SeriesStats::of(&kge),
        rows,
    })
}

fn station_hourly(s: &StationForecasts, model: Architecture) -> Vec<HourlyScores> {
    (1..=HORIZON)
        .map(|lead| {
            let (obs, pred) = station_lead(s, model, lead);
            hourly(lead, &obs, &pred)
        })
        .collect()
}

/// One station's scores for one model: medians of its hourly NSE, KGE and
/// r, and NRMSE over its whole horizon set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationScores {
    pub nse: Option<f64>,
    pub kge: Option<f64>,
    pub r: Option<f64>,
    pub nrmse: Option<f64>,
}

impl StationScores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Nse => self.nse,
            Metric::Kge => self.kge,
            Metric::R => self.r,
            Metric::Nrmse => self.nrmse,
        }
    }
}

pub fn station_scores(s: &StationForecasts, model: Architecture) -> StationScores {
    let m = hourly_medians(&station_hourly(s, model));
    StationScores {
        nse: m.nse,
        kge: m.kge,
        r: m.r,
        nrmse: nrmse(&s.observed, &s.predicted[&model]).ok(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationRow {
    pub station_id: String,
    /// Scores in the order of [`PerStationSummary::models`].
    pub scores: Vec<StationScores>,
}

/// Best-model counts for one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestCounts {
    pub metric: Metric,
    /// Stations won, in the order of [`PerStationSummary::models`].
    pub wins: Vec<usize>,
    /// Stations whose winner was decided by the fixed model order.
    pub ties: usize,
    /// Stations where no model had a defined score.
    pub unassigned: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerStationSummary {
    /// Models in canonical order.
    pub models: Vec<Architecture>,
    pub stations: Vec<StationRow>,
    /// Cross-station medians per model (NSE, KGE, r, NRMSE).
    pub medians: Vec<[Option<f64>; 4]>,
    pub best: Vec<BestCounts>,
    /// Stations per model whose median NSE is strictly above the threshold.
    pub above_threshold: Vec<usize>,
    pub threshold: f64,
}

pub const NSE_THRESHOLD: f64 = 0.5;

/// Per-station medians for every model and their cross-station aggregates.
pub fn per_station_summary(archive: &ForecastArchive, models: &[Architecture], exec: Exec) -> Result<PerStationSummary> {
    let mut models = models.to_vec();
    models.sort();
    models.dedup();
    if models.is_empty() {
        return Err(Error::Contract("no models to summarize".into()));
    }
    for &m in &models {
        archive.require(m)?;
    }
    let stations: Vec<&StationForecasts> = archive.stations().collect();
    let rows: Vec<StationRow> = par::map(exec, &stations, |s| StationRow {
        station_id: s.station_id.clone(),
        scores: models.iter().map(|&m| station_scores(s, m)).collect(),
    });
    let medians = (0..models.len())
        .map(|k| {
            Metric::ALL.map(|metric| {
                let vals: Vec<f64> = rows.iter().filter_map(|r| r.scores[k].get(metric)).collect();
                median(&vals)
            })
        })
        .collect();
    let best = Metric::ALL.iter().map(|&metric| best_counts(&rows, models.len(), metric)).collect();
    let above_threshold = (0..models.len())
        .map(|k| {
            rows.iter()
                .filter(|r| r.scores[k].nse.is_some_and(|v| v > NSE_THRESHOLD))
                .count()
        })
        .collect();
    Ok(PerStationSummary {
        models,
        stations: rows,
        medians,
        best,
        above_threshold,
        threshold: NSE_THRESHOLD,
    })
}

/// Strictly better scores win; exact ties go to the earlier model.
fn best_counts(rows: &[StationRow], n_models: usize, metric: Metric) -> BestCounts {
    let mut wins = vec![0; n_models];
    let (mut ties, mut unassigned) = (0, 0);
    for row in rows {
        let mut best: Option<(usize, f64)> = None;
        let mut tied = false;
        for (k, s) in row.scores.iter().enumerate() {
            let Some(v) = s.get(metric) else { continue };
            match best {
                None => best = Some((k, v)),
                Some((_, b)) => {
                    let better = if metric.higher_is_better() { v > b } else { v < b };
                    if better {
                        best = Some((k, v));
                        tied = false;
                    } else if v == b {
                        tied = true;
                    }
                }
            }
        }
        match best {
            Some((k, _)) => {
                wins[k] += 1;
                ties += usize::from(tied);
            }
            None => unassigned += 1,
        }
    }
    BestCounts {
        metric,
        wins,
        ties,
        unassigned,
    }
}
