//! Per-station observed and predicted horizons, and their CSV form.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::HORIZON;

/// Observed and predicted horizons of one station, stored anchors x 120.
#[derive(Clone, Debug, PartialEq)]
pub struct StationForecasts {
    pub station_id: String,
    pub anchors: Vec<DateTime<Utc>>,
    pub observed: Vec<f64>,
    pub predicted: BTreeMap<Architecture, Vec<f64>>,
}

impl StationForecasts {
    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// Observed values at 1-based `lead`, one per anchor.
    pub fn observed_at(&self, lead: usize) -> impl Iterator<Item = f64> + '_ {
        column(&self.observed, lead)
    }

    pub fn predicted_at(&self, model: Architecture, lead: usize) -> Option<impl Iterator<Item = f64> + '_> {
        self.predicted.get(&model).map(|p| column(p, lead))
    }
}

fn column(rows: &[f64], lead: usize) -> impl Iterator<Item = f64> + '_ {
    rows.iter().skip(lead - 1).step_by(HORIZON).copied()
}

/// Per-station forecast archive, ordered by station id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForecastArchive {
    stations: BTreeMap<String, StationForecasts>,
}

impl ForecastArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stations(&self) -> impl Iterator<Item = &StationForecasts> {
        self.stations.values()
    }

    pub fn station(&self, id: &str) -> Option<&StationForecasts> {
        self.stations.get(id)
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    /// Models with predictions at every station, in canonical order.
    pub fn models(&self) -> Vec<Architecture> {
        Architecture::ALL
            .into_iter()
            .filter(|m| !self.is_empty() && self.stations().all(|s| s.predicted.contains_key(m)))
            .collect()
    }

    /// Registers one model's predictions for a station. The first insertion
    /// for a station fixes its anchors and observations; later ones must
    /// match them exactly.
    pub fn insert(
        &mut self,
        station_id: &str,
        model: Architecture,
        anchors: Vec<DateTime<Utc>>,
        observed: Vec<f64>,
        predicted: Vec<f64>,
    ) -> Result<()> {
        if anchors.is_empty() || observed.len() != anchors.len() * HORIZON || predicted.len() != observed.len() {
            return Err(Error::Alignment(format!(
                "station {station_id}, {model}: {} anchors, {} observed, {} predicted values",
                anchors.len(),
                observed.len(),
                predicted.len()
            )));
        }
        if let Some(bad) = observed.iter().chain(&predicted).find(|v| !v.is_finite()) {
            return Err(Error::Alignment(format!("station {station_id}, {model}: non-finite value {bad}")));
        }
        if observed.iter().any(|v| *v < 0.0) {
            return Err(Error::Alignment(format!("station {station_id}: negative observed discharge")));
        }
        match self.stations.get_mut(station_id) {
            Some(existing) => {
                if existing.anchors != anchors || existing.observed != observed {
                    return Err(Error::Alignment(format!(
                        "station {station_id}: {model} anchors or observations differ from those already archived"
                    )));
                }
                existing.predicted.insert(model, predicted);
            }
            None => {
                self.stations.insert(
                    station_id.to_owned(),
                    StationForecasts {
                        station_id: station_id.to_owned(),
                        anchors,
                        observed,
                        predicted: BTreeMap::from([(model, predicted)]),
                    },
                );
            }
        }
        Ok(())
    }

    pub(crate) fn require(&self, model: Architecture) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Alignment("archive is empty".into()));
        }
        match self.stations().find(|s| !s.predicted.contains_key(&model)) {
            Some(s) => Err(Error::Alignment(format!("station {} has no {model} predictions", s.station_id))),
            None => Ok(()),
        }
    }
}

pub const PREDICTIONS_HEADER: [&str; 4] = ["anchor_time", "lead_hour", "observed_cms", "predicted_cms"];

/// One model's forecasts for one station as read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionFile {
    pub anchors: Vec<DateTime<Utc>>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Writes `anchors.len() x 120` rows in anchor-major, lead-minor order.
pub fn write_predictions(path: &Path, anchors: &[DateTime<Utc>], observed: &[f64], predicted: &[f64]) -> Result<()> {
    if observed.len() != anchors.len() * HORIZON || predicted.len() != observed.len() {
        return Err(Error::Alignment(format!(
            "{}: {} anchors, {} observed, {} predicted values",
            path.display(),
            anchors.len(),
            observed.len(),
            predicted.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut text = PREDICTIONS_HEADER.join(",");
    text.push('\n');
    for (a, anchor) in anchors.iter().enumerate() {
        let stamp = anchor.to_rfc3339_opts(SecondsFormat::Secs, true);
        for lead in 1..=HORIZON {
            let k = a * HORIZON + lead - 1;
            text.push_str(&format!("{stamp},{lead},{},{}\n", observed[k], predicted[k]));
        }
    }
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<PredictionFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if found != PREDICTIONS_HEADER {
        return Err(Error::Schema {
            path: path.into(),
            detail: format!("expected header `{}`, found `{}`", PREDICTIONS_HEADER.join(","), found.join(",")),
        });
    }
    let bad = |row: usize, what: &str| Error::Schema {
        path: path.into(),
        detail: format!("row {row}: {what}"),
    };
    let mut out = PredictionFile {
        anchors: Vec::new(),
        observed: Vec::new(),
        predicted: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 4 {
            return Err(bad(row, "expected 4 cells"));
        }
        let anchor: DateTime<Utc> = rec[0].parse().map_err(|_| bad(row, "bad anchor_time"))?;
        let lead: usize = rec[1].parse().map_err(|_| bad(row, "bad lead_hour"))?;
        let obs: f64 = rec[2].parse().map_err(|_| bad(row, "bad observed_cms"))?;
        let pred: f64 = rec[3].parse().map_err(|_| bad(row, "bad predicted_cms"))?;
        if lead != i % HORIZON + 1 {
            return Err(bad(row, "lead hours must run 1..=120 within each anchor"));
        }
        if lead == 1 {
            out.anchors.push(anchor);
        } else if out.anchors.last() != Some(&anchor) {
            return Err(bad(row, "anchor_time changes inside a horizon"));
        }
        out.observed.push(obs);
        out.predicted.push(pred);
    }
    if out.observed.len() != out.anchors.len() * HORIZON {
        return Err(bad(out.observed.len() + 1, "truncated horizon"));
    }
    Ok(out)
}
