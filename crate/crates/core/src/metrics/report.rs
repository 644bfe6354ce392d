//! Report assembly and emission: five table CSVs, two hourly series CSVs
//! and a JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::aggregate::{
    per_station_hourly_median, per_station_summary, unified_hourly, unified_summary, HourlyScores, Metric,
    PerStationSummary, StationHourlyMedian, UnifiedSummary,
};
use super::archive::ForecastArchive;
use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::par::Exec;

pub const TABLE3_HEADER: [&str; 5] = ["model", "NSE", "KGE", "R", "NRMSE"];
pub const TABLE4_HEADER: [&str; 9] = [
    "model",
    "NSE_min",
    "NSE_max",
    "NSE_median",
    "NSE_mean",
    "KGE_min",
    "KGE_max",
    "KGE_median",
    "KGE_mean",
];
pub const TABLE5_HEADER: [&str; 5] = TABLE3_HEADER;
pub const TABLE6_HEADER: [&str; 5] = TABLE3_HEADER;
pub const TABLE7_HEADER: [&str; 2] = ["model", "NSE > 0.5"];
pub const HOURLY_HEADER: [&str; 4] = ["lead_hour", "model", "metric", "value"];

pub const REPORT_FILES: [&str; 8] = [
    "table3.csv",
    "table4.csv",
    "table5.csv",
    "table6.csv",
    "table7.csv",
    "hourly_unified.csv",
    "hourly_station_median.csv",
    "summary.json",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelReport {
    pub model: Architecture,
    pub unified: UnifiedSummary,
    pub unified_hourly: Vec<HourlyScores>,
    pub station_hourly: StationHourlyMedian,
}

/// Every aggregation for every model in the archive.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub provenance: Vec<(String, String)>,
    pub n_stations: usize,
    pub models: Vec<ModelReport>,
    pub per_station: PerStationSummary,
}

pub fn build_report(
    archive: &ForecastArchive,
    models: &[Architecture],
    provenance: Vec<(String, String)>,
    exec: Exec,
) -> Result<Report> {
    let per_station = per_station_summary(archive, models, exec)?;
    let models = per_station
        .models
        .iter()
        .map(|&m| {
            Ok(ModelReport {
                model: m,
                unified: unified_summary(archive, m)?,
                unified_hourly: unified_hourly(archive, m)?,
                station_hourly: per_station_hourly_median(archive, m, exec)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Report {
        provenance,
        n_stations: archive.len(),
        models,
        per_station,
    })
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Table {
    text: String,
}

impl Table {
    fn new(provenance: &[(String, String)], notes: &[String], header: &[&str]) -> Self {
        let mut text = String::new();
        for (k, v) in provenance {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        for n in notes {
            text.push_str(&format!("# {n}\n"));
        }
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let line: Vec<&str> = cells.iter().map(AsRef::as_ref).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }
}

/// Writes every report file into `dir` and returns their paths.
pub fn write_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prov = &report.provenance;
    let ps = &report.per_station;
    let mut files: Vec<(&str, String)> = Vec::new();

    let mut t3 = Table::new(prov, &["unified evaluation over all stations".into()], &TABLE3_HEADER);
    for m in &report.models {
        let u = &m.unified;
        t3.row(&[m.model.label().to_owned(), num(u.nse), num(u.kge), num(u.r), num(u.nrmse)]);
    }
    files.push((REPORT_FILES[0], t3.text));

    let mut t4 = Table::new(prov, &["summary of the 120 hourly cross-station medians".into()], &TABLE4_HEADER);
    for m in &report.models {
        let mut cells = vec![m.model.label().to_owned()];
        for s in [m.station_hourly.nse, m.station_hourly.kge] {
            cells.extend([s.map(|s| s.min), s.map(|s| s.max), s.map(|s| s.median), s.map(|s| s.mean)].map(opt));
        }
        t4.row(&cells);
    }
    files.push((REPORT_FILES[1], t4.text));

    let mut t5 = Table::new(prov, &[format!("cross-station medians over {} stations", report.n_stations)], &TABLE5_HEADER);
    for (k, m) in ps.models.iter().enumerate() {
        let mut cells = vec![m.label().to_owned()];
        cells.extend(ps.medians[k].map(opt));
        t5.row(&cells);
    }
    files.push((REPORT_FILES[2], t5.text));

    let tie_note = ps
        .best
        .iter()
        .map(|b| format!("{}={}", b.metric.label(), b.ties))
        .collect::<Vec<_>>()
        .join(" ");
    let unassigned_note = ps
        .best
        .iter()
        .map(|b| format!("{}={}", b.metric.label(), b.unassigned))
        .collect::<Vec<_>>()
        .join(" ");
    let mut t6 = Table::new(
        prov,
        &[
            "stations where each model scores best; exact ties go to the earlier row".into(),
            format!("ties: {tie_note}"),
            format!("unassigned: {unassigned_note}"),
        ],
        &TABLE6_HEADER,
    );
    for (k, m) in ps.models.iter().enumerate() {
        let mut cells = vec![m.label().to_owned()];
        cells.extend(ps.best.iter().map(|b| b.wins[k].to_string()));
        t6.row(&cells);
    }
    files.push((REPORT_FILES[3], t6.text));

    let mut t7 = Table::new(prov, &[format!("stations with per-station median NSE > {}", ps.threshold)], &TABLE7_HEADER);
    for (k, m) in ps.models.iter().enumerate() {
        t7.row(&[m.label().to_owned(), ps.above_threshold[k].to_string()]);
    }
    files.push((REPORT_FILES[4], t7.text));

    let mut hu = Table::new(prov, &[], &HOURLY_HEADER);
    for m in &report.models {
        for h in &m.unified_hourly {
            for (metric, v) in [(Metric::Nse, h.nse), (Metric::Kge, h.kge), (Metric::R, h.r)] {
                hu.row(&[h.lead_hour.to_string(), m.model.label().to_owned(), metric.label().to_owned(), opt(v)]);
            }
        }
    }
    files.push((REPORT_FILES[5], hu.text));

    let mut hs = Table::new(prov, &[], &HOURLY_HEADER);
    for m in &report.models {
        for r in &m.station_hourly.rows {
            for (metric, v) in [(Metric::Nse, r.nse), (Metric::Kge, r.kge)] {
                hs.row(&[r.lead_hour.to_string(), m.model.label().to_owned(), metric.label().to_owned(), opt(v)]);
            }
        }
    }
    files.push((REPORT_FILES[6], hs.text));

    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    files.push((REPORT_FILES[7], json));

    let mut paths = Vec::with_capacity(files.len());
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
