use std::sync::Arc;

use chrono::{DateTime, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::N_STATIC;

/// Static catchment attributes. Soil fractions are decimals in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub area_km2: f64,
    pub concentration_time_h: f64,
    pub slope: f64,
    pub loam: f64,
    pub silt: f64,
    pub sandy_clay_loam: f64,
    pub silty_clay_loam: f64,
}

impl StationMeta {
    pub const STATIC_NAMES: [&'static str; N_STATIC] = [
        "area_km2",
        "concentration_time_h",
        "slope",
        "loam",
        "silt",
        "sandy_clay_loam",
        "silty_clay_loam",
    ];

    /// The seven static features in model column order.
    pub fn statics(&self) -> [f64; N_STATIC] {
        [
            self.area_km2,
            self.concentration_time_h,
            self.slope,
            self.loam,
            self.silt,
            self.sandy_clay_loam,
            self.silty_clay_loam,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(Error::Metadata(format!(
                "station {}: {what} = {v} is out of range",
                self.station_id
            )))
        };
        for (name, v) in Self::STATIC_NAMES.iter().zip(self.statics()) {
            if !v.is_finite() {
                return bad(name, v);
            }
        }
        if self.area_km2 <= 0.0 {
            return bad("area_km2", self.area_km2);
        }
        if self.concentration_time_h <= 0.0 {
            return bad("concentration_time_h", self.concentration_time_h);
        }
        if self.slope <= 0.0 {
            return bad("slope", self.slope);
        }
        for (name, v) in Self::STATIC_NAMES[3..].iter().zip(&self.statics()[3..]) {
            if !(0.0..=1.0).contains(v) {
                return bad(name, *v);
            }
        }
        Ok(())
    }
}

/// Half-open interval `[start, end)` on the hourly grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeRange {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        Self { start, end }
    }

    pub fn hours(&self) -> i64 {
        (self.end - self.start).num_hours()
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }
}

/// Hourly precipitation (mm), evapotranspiration (mm) and discharge (m³/s)
/// for one station; `None` marks a missing value.
#[derive(Clone, Debug, PartialEq)]
pub struct StationSeries {
    pub station_id: Arc<str>,
    pub start: DateTime<Utc>,
    pub precip: Vec<Option<f64>>,
    pub et: Vec<Option<f64>>,
    pub discharge: Vec<Option<f64>>,
}

impl StationSeries {
    pub fn new(
        station_id: &str,
        start: DateTime<Utc>,
        precip: Vec<Option<f64>>,
        et: Vec<Option<f64>>,
        discharge: Vec<Option<f64>>,
    ) -> Result<Self> {
        let series = Self {
            station_id: station_id.into(),
            start,
            precip,
            et,
            discharge,
        };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |detail: String| Error::Contract(format!("series {}: {detail}", self.station_id));
        if self.start.minute() != 0 || self.start.second() != 0 || self.start.nanosecond() != 0 {
            return Err(err(format!("start {} is not on a whole hour", self.start)));
        }
        if self.precip.len() != self.et.len() || self.et.len() != self.discharge.len() {
            return Err(err("channel lengths differ".into()));
        }
        let negative = |xs: &[Option<f64>]| xs.iter().flatten().any(|v| *v < 0.0 || !v.is_finite());
        if negative(&self.precip) || negative(&self.discharge) {
            return Err(err("negative or non-finite precipitation or discharge".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.discharge.len()
    }

    pub fn is_empty(&self) -> bool {
        self.discharge.is_empty()
    }

    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    /// Index of `t` on this series' grid, clamped to `0..=len`.
    pub fn clamp_index(&self, t: DateTime<Utc>) -> usize {
        (t - self.start).num_hours().clamp(0, self.len() as i64) as usize
    }

    pub fn span(&self) -> TimeRange {
        TimeRange::new(self.start, self.time_at(self.len()))
    }

    /// `true` at every hour where all three channels are present.
    pub fn presence(&self) -> Vec<bool> {
        (0..self.len())
            .map(|i| self.precip[i].is_some() && self.et[i].is_some() && self.discharge[i].is_some())
            .collect()
    }
}

/// Forward-fills runs of at most `max_gap` consecutive missing values in
/// every channel. Longer runs and leading gaps stay missing.
pub fn fill_short_gaps(series: &StationSeries, max_gap: usize) -> StationSeries {
    let mut out = series.clone();
    for ch in [&mut out.precip, &mut out.et, &mut out.discharge] {
        fill_channel(ch, max_gap);
    }
    out
}

fn fill_channel(xs: &mut [Option<f64>], max_gap: usize) {
    let mut i = 0;
    while i < xs.len() {
        if xs[i].is_some() {
            i += 1;
            continue;
        }
        let run_end = xs[i..].iter().position(Option::is_some).map_or(xs.len(), |p| i + p);
        let fill = if i > 0 { xs[i - 1] } else { None };
        if let Some(v) = fill {
            if run_end - i <= max_gap {
                xs[i..run_end].fill(Some(v));
            }
        }
        i = run_end;
    }
}
