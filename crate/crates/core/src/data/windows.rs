use super::norm::NormStats;
use super::sample::WindowSample;
use super::station::{StationMeta, StationSeries, TimeRange};
use crate::error::{Error, Result};
use crate::{FUTURE_FEATURES, HORIZON, N_STATIC, PAST_FEATURES, PAST_HOURS};

/// Anchors `t` admitted for a series of `presence.len()` hours restricted to
/// index range `[lo, hi)`.
///
/// Anchors step by `stride` from `max(lo, 71)`. An anchor is kept when its
/// horizon `t+1..=t+120` ends inside the range and every hour of
/// `t-71..=t+120` is present. The lookback may reach back before `lo`.
pub fn admissible_anchors(presence: &[bool], lo: usize, hi: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let hi = hi.min(presence.len());
    let first = lo.max(PAST_HOURS - 1);
    // missing[i] = number of absent hours in presence[..i]
    let mut missing = Vec::with_capacity(presence.len() + 1);
    missing.push(0usize);
    for &p in presence {
        missing.push(missing.last().copied().unwrap_or(0) + usize::from(!p));
    }
    (first..hi)
        .step_by(stride)
        .take_while(|&t| t + HORIZON < hi)
        .filter(|&t| missing[t + HORIZON + 1] == missing[t + 1 - PAST_HOURS])
        .collect()
}

/// Builds every admissible sample of `series` whose horizon lies in `range`.
/// Windows touching a missing value are skipped.
pub fn assemble_windows(
    series: &StationSeries,
    meta: &StationMeta,
    stats: &NormStats,
    range: TimeRange,
    stride: usize,
) -> Result<Vec<WindowSample>> {
    if meta.station_id != *series.station_id {
        return Err(Error::Contract(format!(
            "metadata for {} paired with series {}",
            meta.station_id, series.station_id
        )));
    }
    let q_stats = *stats.station(&meta.station_id)?;
    let statics = stats.scaled_statics(meta);
    let lo = series.clamp_index(range.start);
    let hi = series.clamp_index(range.end);
    let anchors = admissible_anchors(&series.presence(), lo, hi, stride);

    let value = |ch: &[Option<f64>], i: usize| ch[i].expect("admissible windows are fully present");
    let p = |i| stats.precip.apply(value(&series.precip, i));
    let e = |i| stats.et.apply(value(&series.et, i));

    Ok(anchors
        .into_iter()
        .map(|t| {
            let mut past = Vec::with_capacity(PAST_HOURS * PAST_FEATURES);
            for i in t + 1 - PAST_HOURS..=t {
                past.extend_from_slice(&[p(i), e(i), q_stats.apply(value(&series.discharge, i))]);
                past.extend_from_slice(&statics);
            }
            let mut future = Vec::with_capacity(HORIZON * FUTURE_FEATURES);
            let mut target = Vec::with_capacity(HORIZON);
            for i in t + 1..=t + HORIZON {
                future.extend_from_slice(&[p(i), e(i)]);
                future.extend_from_slice(&statics);
                target.push(value(&series.discharge, i));
            }
            let target_norm = target.iter().map(|&q| q_stats.apply(q)).collect();
            debug_assert_eq!(statics.len(), N_STATIC);
            WindowSample {
                station_id: series.station_id.clone(),
                anchor_time: series.time_at(t),
                past,
                future,
                target,
                target_norm,
                last_discharge: value(&series.discharge, t),
            }
        })
        .collect())
}
