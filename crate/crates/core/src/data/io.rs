//! Station metadata and hourly series CSV formats.
//!
//! Metadata: `station_id,area_km2,concentration_time_h,slope,loam,silt,sandy_clay_loam,silty_clay_loam`.
//! Series (one file per station, named `<station_id>.csv`):
//! `timestamp_utc,precip_mm,et_mm,discharge_cms` with ISO-8601 hourly
//! timestamps and empty cells for missing values.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use super::station::{StationMeta, StationSeries};
use crate::error::{Error, Result};

pub const META_HEADER: [&str; 8] = [
    "station_id",
    "area_km2",
    "concentration_time_h",
    "slope",
    "loam",
    "silt",
    "sandy_clay_loam",
    "silty_clay_loam",
];

pub const SERIES_HEADER: [&str; 4] = ["timestamp_utc", "precip_mm", "et_mm", "discharge_cms"];

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::Schema {
            path: path.into(),
            detail: format!("expected header `{}`, found `{}`", header.join(","), found.join(",")),
        });
    }
    Ok(rdr)
}

pub fn load_metadata(path: &Path) -> Result<Vec<StationMeta>> {
    let mut rdr = open_csv(path, &META_HEADER)?;
    let mut out: Vec<StationMeta> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_owned();
        if id.is_empty() {
            return Err(Error::Metadata(format!("{}: row {} has no station_id", path.display(), line + 2)));
        }
        let mut vals = [0.0; 7];
        for (k, v) in vals.iter_mut().enumerate() {
            let cell = rec.get(k + 1).unwrap_or_default();
            *v = cell.parse().map_err(|_| {
                Error::Metadata(format!(
                    "station {id}: {} is missing or not a number (`{cell}`)",
                    META_HEADER[k + 1]
                ))
            })?;
        }
        let meta = StationMeta {
            station_id: id,
            area_km2: vals[0],
            concentration_time_h: vals[1],
            slope: vals[2],
            loam: vals[3],
            silt: vals[4],
            sandy_clay_loam: vals[5],
            silty_clay_loam: vals[6],
        };
        meta.validate()?;
        if out.iter().any(|m| m.station_id == meta.station_id) {
            return Err(Error::Metadata(format!("duplicate station {}", meta.station_id)));
        }
        out.push(meta);
    }
    Ok(out)
}

fn parse_time(cell: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(cell)
        .map(|t| t.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
                .iter()
                .find_map(|f| NaiveDateTime::parse_from_str(cell, f).ok())
                .map(|t| t.and_utc())
        })
}

/// Blank or unparseable numeric cells become missing values.
fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn load_series(path: &Path, station_id: &str) -> Result<StationSeries> {
    let mut rdr = open_csv(path, &SERIES_HEADER)?;
    let grid_err = |detail: String| Error::TimeGrid {
        path: path.into(),
        detail,
    };
    let (mut precip, mut et, mut discharge) = (Vec::new(), Vec::new(), Vec::new());
    let mut start = None;
    let mut prev: Option<DateTime<Utc>> = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(0).unwrap_or_default();
        let t = parse_time(cell).ok_or_else(|| Error::Schema {
            path: path.into(),
            detail: format!("row {}: bad timestamp `{cell}`", line + 2),
        })?;
        if let Some(p) = prev {
            if t - p != chrono::Duration::hours(1) {
                return Err(grid_err(format!("row {}: {p} is followed by {t}", line + 2)));
            }
        }
        start.get_or_insert(t);
        prev = Some(t);
        let (p, e, q) = (
            parse_cell(rec.get(1).unwrap_or_default()),
            parse_cell(rec.get(2).unwrap_or_default()),
            parse_cell(rec.get(3).unwrap_or_default()),
        );
        // negative precipitation or discharge is a sensor fault; treat as missing
        precip.push(p.filter(|v| *v >= 0.0));
        et.push(e);
        discharge.push(q.filter(|v| *v >= 0.0));
    }
    let start = start.ok_or_else(|| grid_err("no rows".into()))?;
    StationSeries::new(station_id, start, precip, et, discharge).map_err(|e| grid_err(e.to_string()))
}

/// Loads the series at `series_path` and the matching metadata row. The
/// station id is the series file stem.
pub fn load_station_csv(meta_path: &Path, series_path: &Path) -> Result<(StationMeta, StationSeries)> {
    let id = series_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Metadata(format!("cannot derive station id from {}", series_path.display())))?;
    let meta = load_metadata(meta_path)?
        .into_iter()
        .find(|m| m.station_id == id)
        .ok_or_else(|| Error::Metadata(format!("station {id} has no row in {}", meta_path.display())))?;
    let series = load_series(series_path, id)?;
    Ok((meta, series))
}

pub fn write_metadata(path: &Path, metas: &[StationMeta]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(META_HEADER)?;
    for m in metas {
        let mut row = vec![m.station_id.clone()];
        row.extend(m.statics().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_series(path: &Path, series: &StationSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut text = SERIES_HEADER.join(",");
    text.push('\n');
    for i in 0..series.len() {
        text.push_str(&series.time_at(i).to_rfc3339_opts(SecondsFormat::Secs, true));
        for v in [series.precip[i], series.et[i], series.discharge[i]] {
            text.push(',');
            text.push_str(&cell(v));
        }
        text.push('\n');
    }
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const META: &str = "station_id,area_km2,concentration_time_h,slope,loam,silt,sandy_clay_loam,silty_clay_loam\n\
                        s1,1918,53,0.018,0.33,0.21,0.04,0.07\n";

    #[test]
    fn blank_discharge_cell_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let meta = write(dir.path(), "meta.csv", META);
        let series = write(
            dir.path(),
            "s1.csv",
            "timestamp_utc,precip_mm,et_mm,discharge_cms\n\
             2012-01-01T00:00:00Z,0,0.1,5\n\
             2012-01-01T01:00:00Z,0,0.1,\n\
             2012-01-01T02:00:00Z,1.5,0.1,7\n",
        );
        let (m, s) = load_station_csv(&meta, &series).unwrap();
        assert_eq!(m.loam, 0.33);
        assert_eq!(m.silt, 0.21);
        assert_eq!(s.len(), 3);
        assert_eq!(s.discharge, vec![Some(5.0), None, Some(7.0)]);
    }

    #[test]
    fn two_hour_step_is_a_grid_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "s1.csv",
            "timestamp_utc,precip_mm,et_mm,discharge_cms\n\
             2012-01-01T00:00:00Z,0,0,1\n\
             2012-01-01T02:00:00Z,0,0,1\n",
        );
        assert!(matches!(load_series(&p, "s1"), Err(Error::TimeGrid { .. })));
    }

    #[test]
    fn wrong_header_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s1.csv", "time,p,e,q\n");
        assert!(matches!(load_series(&p, "s1"), Err(Error::Schema { .. })));
    }

    #[test]
    fn missing_static_is_a_metadata_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "meta.csv",
            "station_id,area_km2,concentration_time_h,slope,loam,silt,sandy_clay_loam,silty_clay_loam\n\
             s1,1918,53,0.018,,0.21,0.04,0.07\n",
        );
        assert!(matches!(load_metadata(&p), Err(Error::Metadata(_))));
    }

    #[test]
    fn write_then_read_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let start = "2012-03-01T00:00:00Z".parse().unwrap();
        let s = StationSeries::new(
            "x",
            start,
            vec![Some(0.1), None, Some(2.0 / 3.0)],
            vec![Some(-0.01), Some(0.2), Some(0.3)],
            vec![Some(1e-9), Some(12963.0), None],
        )
        .unwrap();
        let p = dir.path().join("x.csv");
        write_series(&p, &s).unwrap();
        assert_eq!(load_series(&p, "x").unwrap(), s);
    }
}
