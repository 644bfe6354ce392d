use crate::data::WindowSample;
use crate::HORIZON;

/// Repeats the anchor-hour discharge across the whole horizon (m³/s).
pub fn persistence_forecast(sample: &WindowSample) -> Vec<f64> {
    vec![sample.last_discharge; HORIZON]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{FUTURE_FEATURES, PAST_FEATURES, PAST_HOURS};

    fn sample(history: f64, last: f64) -> WindowSample {
        WindowSample {
            station_id: "s".into(),
            anchor_time: chrono::DateTime::UNIX_EPOCH,
            past: vec![history; PAST_HOURS * PAST_FEATURES],
            future: vec![0.0; HORIZON * FUTURE_FEATURES],
            target: vec![0.0; HORIZON],
            target_norm: vec![0.0; HORIZON],
            last_discharge: last,
        }
    }

    #[test]
    fn repeats_last_observation() {
        assert_eq!(persistence_forecast(&sample(0.0, 14.2)), vec![14.2; HORIZON]);
    }

    #[test]
    fn ignores_history() {
        assert_eq!(
            persistence_forecast(&sample(-1.0, 3.5)),
            persistence_forecast(&sample(2.0, 3.5))
        );
    }
}
