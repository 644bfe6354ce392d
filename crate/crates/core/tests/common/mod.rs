#![allow(dead_code)]

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use flowcast::autodiff::{ParamStore, Tensor};
use flowcast::data::WindowSample;
use flowcast::metrics::ForecastArchive;
use flowcast::models::Architecture;
use flowcast::{FUTURE_FEATURES, HORIZON, PAST_FEATURES, PAST_HOURS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn t0() -> DateTime<Utc> {
    "2013-10-01T00:00:00Z".parse().unwrap()
}

/// A well-formed sample with random normalized features.
pub fn random_sample(rng: &mut impl Rng, station: &str, hour: i64) -> WindowSample {
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.5..1.5)).collect() };
    let past = draw(PAST_HOURS * PAST_FEATURES);
    let future = draw(HORIZON * FUTURE_FEATURES);
    let target_norm = draw(HORIZON);
    let target = target_norm.iter().map(|z| 10.0 + 3.0 * z).collect();
    let last = past[(PAST_HOURS - 1) * PAST_FEATURES + 2];
    WindowSample {
        station_id: Arc::from(station),
        anchor_time: t0() + Duration::hours(hour),
        past,
        future,
        target,
        target_norm,
        last_discharge: 10.0 + 3.0 * last,
    }
}

pub fn zero_params(store: &mut ParamStore) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store.value_mut(id).data_mut().fill(0.0);
    }
}

/// Archive of positive observations where each model adds its own
/// multiplicative noise level; later models in `models` are noisier.
pub fn random_archive(rng: &mut impl Rng, stations: usize, anchors: usize, models: &[Architecture]) -> ForecastArchive {
    let mut archive = ForecastArchive::new();
    for s in 0..stations {
        let id = format!("st{s:02}");
        let times: Vec<_> = (0..anchors as i64).map(|a| t0() + Duration::hours(a * 7)).collect();
        let level = rng.random_range(2.0..200.0);
        let observed: Vec<f64> = (0..anchors * HORIZON).map(|_| level * rng.random_range(0.2..2.0)).collect();
        for (k, &m) in models.iter().enumerate() {
            let noise = 0.05 * (k + 1) as f64;
            let predicted = observed
                .iter()
                .map(|o| o * (1.0 + rng.random_range(-noise..noise)))
                .collect();
            archive.insert(&id, m, times.clone(), observed.clone(), predicted).unwrap();
        }
    }
    archive
}

pub mod oracle;
