use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::{FUTURE_FEATURES, HORIZON, PAST_FEATURES, PAST_HOURS, SEQ_LEN};

/// Column of discharge inside a lookback row.
pub const DISCHARGE_COL: usize = 2;

/// One training / evaluation instance anchored at hour `t`.
///
/// `past` holds hours `t-71..=t` as a row-major 72x10 matrix, `future` holds
/// hours `t+1..=t+120` as 120x9, both normalized. `target` is discharge for
/// the horizon in m³/s and `target_norm` the same in normalized units;
/// `last_discharge` is the anchor-hour discharge in m³/s.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub station_id: Arc<str>,
    pub anchor_time: DateTime<Utc>,
    pub past: Vec<f64>,
    pub future: Vec<f64>,
    pub target: Vec<f64>,
    pub target_norm: Vec<f64>,
    pub last_discharge: f64,
}

impl WindowSample {
    pub fn past_row(&self, hour: usize) -> &[f64] {
        &self.past[hour * PAST_FEATURES..(hour + 1) * PAST_FEATURES]
    }

    pub fn future_row(&self, hour: usize) -> &[f64] {
        &self.future[hour * FUTURE_FEATURES..(hour + 1) * FUTURE_FEATURES]
    }

    /// Normalized discharge at the anchor hour.
    pub fn last_discharge_norm(&self) -> f64 {
        self.past_row(PAST_HOURS - 1)[DISCHARGE_COL]
    }

    pub fn is_well_formed(&self) -> bool {
        self.past.len() == PAST_HOURS * PAST_FEATURES
            && self.future.len() == HORIZON * FUTURE_FEATURES
            && self.target.len() == HORIZON
            && self.target_norm.len() == HORIZON
            && self
                .past
                .iter()
                .chain(&self.future)
                .chain(&self.target)
                .chain(&self.target_norm)
                .all(|v| v.is_finite())
            && self.last_discharge.is_finite()
    }
}

/// How the discharge column is filled over the horizon rows when lookback
/// and horizon are stacked into one sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionPolicy {
    /// Repeat the anchor-hour discharge.
    Persistence,
    /// Write zeros.
    ZeroPad,
}

impl ExtensionPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtensionPolicy::Persistence => "persistence",
            ExtensionPolicy::ZeroPad => "zero_pad",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "persistence" => Some(ExtensionPolicy::Persistence),
            "zero_pad" => Some(ExtensionPolicy::ZeroPad),
            _ => None,
        }
    }
}

/// The 192x10 stacked lookback + horizon input.
#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedInput {
    pub matrix: Vec<f64>,
    pub policy: ExtensionPolicy,
}

impl UnifiedInput {
    pub fn row(&self, hour: usize) -> &[f64] {
        &self.matrix[hour * PAST_FEATURES..(hour + 1) * PAST_FEATURES]
    }
}

/// Stacks `sample.past` on top of the horizon covariates. Horizon rows keep
/// the lookback column order; their discharge column follows `policy`.
pub fn unify_input(sample: &WindowSample, policy: ExtensionPolicy) -> UnifiedInput {
    let mut matrix = Vec::with_capacity(SEQ_LEN * PAST_FEATURES);
    write_unified(sample, policy, &mut matrix);
    UnifiedInput { matrix, policy }
}

/// Appends the unified rows of `sample` to `out`.
pub(crate) fn write_unified(sample: &WindowSample, policy: ExtensionPolicy, out: &mut Vec<f64>) {
    out.extend_from_slice(&sample.past);
    let fill = match policy {
        ExtensionPolicy::Persistence => sample.last_discharge_norm(),
        ExtensionPolicy::ZeroPad => 0.0,
    };
    for h in 0..HORIZON {
        let f = sample.future_row(h);
        out.extend_from_slice(&f[..DISCHARGE_COL]);
        out.push(fill);
        out.extend_from_slice(&f[DISCHARGE_COL..]);
    }
}
