use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::split::SplitSpec;
use super::station::{StationMeta, StationSeries};
use crate::error::{Error, Result};
use crate::N_STATIC;

/// Mean and population standard deviation of one channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: f64,
    pub std: f64,
}

impl ZScore {
    /// Fits over the present values; needs at least two and a non-zero
    /// spread.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<Self> {
        let xs: Vec<f64> = values.into_iter().copied().collect();
        if xs.len() < 2 {
            return Err(Error::DegenerateStats(format!(
                "{what}: {} present training values, need at least 2",
                xs.len()
            )));
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::DegenerateStats(format!("{what}: zero standard deviation")));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Training-period statistics: per-station discharge z-scores, pooled
/// precipitation and ET z-scores, and global static min/max.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub discharge: BTreeMap<String, ZScore>,
    pub precip: ZScore,
    pub et: ZScore,
    pub static_min: [f64; N_STATIC],
    pub static_max: [f64; N_STATIC],
}

impl NormStats {
    pub fn station(&self, station_id: &str) -> Result<&ZScore> {
        self.discharge
            .get(station_id)
            .ok_or_else(|| Error::Contract(format!("no discharge statistics for station {station_id}")))
    }

    /// Min-max scales static feature `k`; a constant feature maps to 0.
    pub fn scale_static(&self, k: usize, x: f64) -> f64 {
        let (lo, hi) = (self.static_min[k], self.static_max[k]);
        if hi > lo {
            (x - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn scaled_statics(&self, meta: &StationMeta) -> [f64; N_STATIC] {
        let raw = meta.statics();
        std::array::from_fn(|k| self.scale_static(k, raw[k]))
    }
}

/// Fits [`NormStats`] on the training range of every station.
pub fn fit_norm_stats(all_series: &[StationSeries], all_meta: &[StationMeta], split: &SplitSpec) -> Result<NormStats> {
    if all_series.is_empty() || all_meta.is_empty() {
        return Err(Error::Contract("no stations to fit statistics on".into()));
    }
    let mut discharge = BTreeMap::new();
    let (mut precip, mut et) = (Vec::new(), Vec::new());
    for s in all_series {
        let lo = s.clamp_index(split.train.start);
        let hi = s.clamp_index(split.train.end);
        let q: Vec<f64> = s.discharge[lo..hi].iter().flatten().copied().collect();
        let z = ZScore::fit(&q, &format!("discharge at station {}", s.station_id))?;
        discharge.insert(s.station_id.to_string(), z);
        precip.extend(s.precip[lo..hi].iter().flatten());
        et.extend(s.et[lo..hi].iter().flatten());
    }
    let precip = ZScore::fit(&precip, "precipitation")?;
    let et = ZScore::fit(&et, "evapotranspiration")?;
    let mut static_min = [f64::INFINITY; N_STATIC];
    let mut static_max = [f64::NEG_INFINITY; N_STATIC];
    for m in all_meta {
        for (k, v) in m.statics().into_iter().enumerate() {
            static_min[k] = static_min[k].min(v);
            static_max[k] = static_max[k].max(v);
        }
    }
    Ok(NormStats {
        discharge,
        precip,
        et,
        static_min,
        static_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::station::TimeRange;
    use chrono::{DateTime, Duration, Utc};

    fn start() -> DateTime<Utc> {
        "2012-01-01T00:00:00Z".parse().unwrap()
    }

    fn series(id: &str, q: &[f64]) -> StationSeries {
        let n = q.len();
        let p = (0..n).map(|i| Some(i as f64)).collect();
        let e = (0..n).map(|i| Some(0.1 * i as f64)).collect();
        StationSeries::new(id, start(), p, e, q.iter().map(|&x| Some(x)).collect()).unwrap()
    }

    fn meta(id: &str, area: f64) -> StationMeta {
        StationMeta {
            station_id: id.into(),
            area_km2: area,
            concentration_time_h: 10.0,
            slope: 0.02,
            loam: 0.3,
            silt: 0.2,
            sandy_clay_loam: 0.1,
            silty_clay_loam: 0.1,
        }
    }

    fn split(train_hours: i64) -> SplitSpec {
        let a = start();
        let b = a + Duration::hours(train_hours);
        let far = a + Duration::hours(100_000);
        SplitSpec {
            train: TimeRange::new(a, b),
            val: TimeRange::new(b, far),
            test: TimeRange::new(far, far + Duration::hours(1)),
        }
    }

    #[test]
    fn two_point_population_statistics() {
        let stats = fit_norm_stats(&[series("a", &[2.0, 4.0, 100.0])], &[meta("a", 5.0)], &split(2)).unwrap();
        let z = stats.station("a").unwrap();
        assert_eq!(z.mean, 3.0);
        assert_eq!(z.std, 1.0);
    }

    #[test]
    fn constant_static_maps_to_zero() {
        let s = [series("a", &[1.0, 2.0]), series("b", &[3.0, 5.0])];
        let stats = fit_norm_stats(&s, &[meta("a", 7.0), meta("b", 7.0)], &split(2)).unwrap();
        assert_eq!(stats.scale_static(0, 7.0), 0.0);
    }

    #[test]
    fn per_station_statistics_are_distinct() {
        let s = [series("a", &[2.0, 4.0]), series("b", &[12962.0, 12964.0])];
        let stats = fit_norm_stats(&s, &[meta("a", 6.0), meta("b", 36453.0)], &split(2)).unwrap();
        assert_eq!(stats.station("a").unwrap().mean, 3.0);
        assert_eq!(stats.station("b").unwrap().mean, 12963.0);
        assert_eq!(stats.scale_static(0, 6.0), 0.0);
        assert_eq!(stats.scale_static(0, 36453.0), 1.0);
    }

    #[test]
    fn flat_discharge_is_degenerate() {
        let r = fit_norm_stats(&[series("a", &[3.0, 3.0, 3.0])], &[meta("a", 1.0)], &split(3));
        assert!(matches!(r, Err(Error::DegenerateStats(_))));
    }

    #[test]
    fn only_training_hours_are_used() {
        let a = fit_norm_stats(&[series("a", &[1.0, 2.0, 3.0, 1e6])], &[meta("a", 1.0)], &split(3)).unwrap();
        let b = fit_norm_stats(&[series("a", &[1.0, 2.0, 3.0, -0.0])], &[meta("a", 1.0)], &split(3)).unwrap();
        assert_eq!(a, b);
    }
}
