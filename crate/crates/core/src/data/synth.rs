//! Synthetic catchments driven by two parallel discrete linear reservoirs.
//!
//! Each reservoir follows `S(t+1) = S(t) + a·P(t) − k·S(t)` with outflow
//! `Q(t) = k·S(t)`, where `a` converts effective rainfall (mm/h) over the
//! catchment area (km²) into m³/s. The quick reservoir drains with
//! `k = 1 / concentration_time`; a slow one with a recession of several
//! weeks carries the baseflow share of the rain.

use chrono::{DateTime, Datelike, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::station::{StationMeta, StationSeries};
use crate::error::{Error, Result};

/// m³/s produced by 1 mm/h falling on 1 km².
pub const MM_PER_HOUR_KM2_TO_CMS: f64 = 1000.0 / 3600.0;

pub const AREA_RANGE: (f64, f64) = (6.0, 36453.0);
pub const CONCENTRATION_RANGE: (f64, f64) = (2.0, 315.0);
pub const SLOPE_RANGE: (f64, f64) = (0.0038, 0.0432);
/// Upper bounds of loam, silt, sandy clay loam and silty clay loam.
pub const SOIL_MAX: [f64; 4] = [0.98, 1.0, 0.84, 0.93];
/// Residence time of the baseflow reservoir in hours.
pub const BASEFLOW_RESIDENCE_RANGE: (f64, f64) = (600.0, 2400.0);
/// Share of effective rainfall routed through the baseflow reservoir.
pub const BASEFLOW_SHARE_RANGE: (f64, f64) = (0.3, 0.6);

/// First hour of every synthetic series.
pub fn synthetic_start() -> DateTime<Utc> {
    "2011-10-01T00:00:00Z".parse().expect("valid literal")
}

/// Simulates the reservoir from storage `s0`. Returns the outflow series.
pub fn linear_reservoir(precip: &[f64], k: f64, a: f64, s0: f64) -> Vec<f64> {
    let mut s = s0;
    precip
        .iter()
        .map(|&p| {
            let q = k * s;
            s += a * p - k * s;
            q
        })
        .collect()
}

/// Generates `n_stations` catchments of `n_hours` hours each, fully
/// determined by `seed`.
pub fn generate_synthetic_catchments(
    n_stations: usize,
    n_hours: usize,
    seed: u64,
) -> Result<(Vec<StationMeta>, Vec<StationSeries>)> {
    if n_stations == 0 || n_hours < 400 {
        return Err(Error::Parameter(format!(
            "need at least 1 station and 400 hours, got {n_stations} stations and {n_hours} hours"
        )));
    }
    let mut metas = Vec::with_capacity(n_stations);
    let mut all = Vec::with_capacity(n_stations);
    for i in 0..n_stations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let (meta, series) = station(&mut rng, &format!("syn{:03}", i + 1), n_hours)?;
        metas.push(meta);
        all.push(series);
    }
    Ok((metas, all))
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp().clamp(lo, hi)
}

fn station(rng: &mut ChaCha8Rng, id: &str, n_hours: usize) -> Result<(StationMeta, StationSeries)> {
    let area = log_uniform(rng, AREA_RANGE);
    let tc = log_uniform(rng, CONCENTRATION_RANGE);
    let slope = rng.random_range(SLOPE_RANGE.0..SLOPE_RANGE.1);
    let unit = Exp::new(1.0).expect("positive rate");
    let weights: Vec<f64> = (0..5).map(|_| unit.sample(rng)).collect();
    let total: f64 = weights.iter().sum();
    let soil: Vec<f64> = (0..4).map(|j| (weights[j] / total).min(SOIL_MAX[j])).collect();
    let meta = StationMeta {
        station_id: id.to_owned(),
        area_km2: area,
        concentration_time_h: tc,
        slope,
        loam: soil[0],
        silt: soil[1],
        sandy_clay_loam: soil[2],
        silty_clay_loam: soil[3],
    };

    let start = synthetic_start();
    let storm_rate = rng.random_range(0.008..0.012);
    let mean_intensity = rng.random_range(1.4..2.0);
    let mean_duration = rng.random_range(4.0..9.0);
    let intensity = Exp::new(1.0 / mean_intensity).expect("positive rate");
    let mut precip = Vec::with_capacity(n_hours);
    let mut remaining = 0usize;
    let mut current: f64 = 0.0;
    for h in 0..n_hours {
        let t = start + chrono::Duration::hours(h as i64);
        let season = (2.0 * std::f64::consts::PI * (t.ordinal0() as f64 - 120.0) / 365.25).cos();
        if remaining == 0 && rng.random_bool((storm_rate * (1.0 + 0.5 * season)).clamp(0.0, 1.0)) {
            remaining = 1 + (unit.sample(rng) * mean_duration) as usize;
            current = intensity.sample(rng);
        }
        let p = if remaining > 0 {
            remaining -= 1;
            (current * rng.random_range(0.5..1.5)).min(60.0)
        } else {
            0.0
        };
        precip.push(p);
    }

    let et: Vec<f64> = (0..n_hours)
        .map(|h| {
            let t = start + chrono::Duration::hours(h as i64);
            let day = (2.0 * std::f64::consts::PI * (t.hour() as f64 - 7.0) / 24.0).sin().max(0.0);
            let season = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (t.ordinal0() as f64 + 10.0) / 365.25).cos();
            0.4 * day * (0.15 + 0.85 * season)
        })
        .collect();

    let runoff_coef = rng.random_range(0.2..0.6);
    let share = rng.random_range(BASEFLOW_SHARE_RANGE.0..BASEFLOW_SHARE_RANGE.1);
    let k_slow = 1.0 / rng.random_range(BASEFLOW_RESIDENCE_RANGE.0..BASEFLOW_RESIDENCE_RANGE.1);
    let a = runoff_coef * area * MM_PER_HOUR_KM2_TO_CMS;
    let mean_p = precip.iter().sum::<f64>() / n_hours as f64;
    // both stores start in equilibrium with the mean rainfall
    let (a_quick, a_slow) = ((1.0 - share) * a, share * a);
    let quick = linear_reservoir(&precip, 1.0 / tc, a_quick, a_quick * mean_p * tc);
    let slow = linear_reservoir(&precip, k_slow, a_slow, a_slow * mean_p / k_slow);
    let discharge = quick.iter().zip(&slow).map(|(q, b)| q + b).collect();

    let wrap = |xs: Vec<f64>| xs.into_iter().map(Some).collect();
    let series = StationSeries::new(id, start, wrap(precip), wrap(et), wrap(discharge))?;
    meta.validate()?;
    Ok((meta, series))
}
