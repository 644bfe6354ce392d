use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{ParamId, ParamStore, Tensor};

/// Seeded parameter factory. Parameters must be requested in a fixed order
/// for initialization to be reproducible.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `[fan_in, fan_out]` weight drawn uniformly from `±1/√fan_in`.
    pub fn weight(&mut self, store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        store.add(name, Tensor::from_parts(vec![fan_in, fan_out], data))
    }

    pub fn constant(&mut self, store: &mut ParamStore, name: &str, len: usize, value: f64) -> ParamId {
        store.add(name, Tensor::filled(&[len], value))
    }

    pub fn normal(&mut self, store: &mut ParamStore, name: &str, shape: &[usize], scale: f64) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| scale * self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        store.add(name, Tensor::from_parts(shape.to_vec(), data))
    }
}
