use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .ids()
            .map(|id| vec![0.0; params.value(id).len()])
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update using the gradients accumulated in `params`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if params.len() != self.first.len()
            || params
                .ids()
                .zip(&self.first)
                .any(|(id, m)| params.grad(id).len() != m.len())
        {
            return Err(Error::Contract(
                "optimizer state does not match the parameter layout".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (values, grads) = params.split_mut();
        for (((p, g), m), v) in values
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((pi, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// a strictly lower validation metric.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    lr: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize, factor: f64, min_lr: f64) -> Result<Self> {
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::Parameter(format!("plateau factor {factor} not in (0,1)")));
        }
        if patience == 0 {
            return Err(Error::Parameter("plateau patience must be positive".into()));
        }
        Ok(Self {
            patience,
            factor,
            min_lr,
            lr,
            best: f64::INFINITY,
            stale: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, metric: f64) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr.min(self.lr));
                self.stale = 0;
            }
        }
        self.lr
    }
}

/// Signals a stop once `patience` consecutive epochs pass without a strictly
/// lower metric. The flag latches.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub patience: usize,
    best: f64,
    stale: usize,
    stopped: bool,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            stale: 0,
            stopped: false,
        }
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn step(&mut self, metric: f64) -> bool {
        if self.stopped {
            return true;
        }
        if metric < self.best {
            self.best = metric;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.stopped = true;
            }
        }
        self.stopped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn scalar_store(p: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::scalar(p));
        s
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(vec![0.3, -1.2, 4.0]));
        let before = s.clone();
        let mut adam = AdamState::new(&s, 1e-3);
        for _ in 0..5 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn adam_first_step_moves_by_about_lr() {
        let mut s = scalar_store(1.0);
        let id = s.find("p").unwrap();
        let mut tape = crate::autodiff::Tape::new();
        let p = tape.param(&s, id);
        let loss = tape.sum(p);
        let g = tape.backward(loss).unwrap();
        s.accumulate(&g);
        let mut adam = AdamState::new(&s, 0.1);
        adam.step(&mut s).unwrap();
        // m̂ = 1, v̂ = 1 -> step = lr / (1 + eps)
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((s.value(id).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut s = scalar_store(2.0);
            let mut adam = AdamState::new(&s, 0.05);
            for k in 0..10 {
                let id = s.find("p").unwrap();
                let mut tape = crate::autodiff::Tape::new();
                let p = tape.param(&s, id);
                let q = tape.mul(p, p).unwrap();
                let q = tape.scale(q, 1.0 + k as f64);
                let loss = tape.sum(q);
                let g = tape.backward(loss).unwrap();
                s.zero_grads();
                s.accumulate(&g);
                adam.step(&mut s).unwrap();
            }
            s.value(s.find("p").unwrap()).data()[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }

    #[test]
    fn adam_rejects_foreign_layout() {
        let s = scalar_store(1.0);
        let mut adam = AdamState::new(&s, 0.1);
        let mut other = ParamStore::new();
        other.add("w", Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(adam.step(&mut other), Err(Error::Contract(_))));
    }

    #[test]
    fn scheduler_keeps_lr_while_improving() {
        let mut s = PlateauScheduler::new(1e-4, 10, 0.5, 1e-6).unwrap();
        for e in 0..30 {
            assert_eq!(s.step(1.0 - e as f64 * 0.01), 1e-4);
        }
    }

    #[test]
    fn scheduler_halves_at_tenth_stagnant_epoch() {
        let mut s = PlateauScheduler::new(1e-4, 10, 0.5, 1e-6).unwrap();
        s.step(0.5);
        for stagnant in 1..=25 {
            let lr = s.step(0.5);
            let expected = match stagnant {
                1..=9 => 1e-4,
                10..=19 => 5e-5,
                _ => 2.5e-5,
            };
            assert_eq!(lr, expected, "stagnant epoch {stagnant}");
        }
    }

    #[test]
    fn scheduler_respects_min_lr() {
        let mut s = PlateauScheduler::new(4e-6, 1, 0.5, 1e-6).unwrap();
        s.step(1.0);
        let lrs: Vec<f64> = (0..5).map(|_| s.step(1.0)).collect();
        assert_eq!(lrs, vec![2e-6, 1e-6, 1e-6, 1e-6, 1e-6]);
    }

    #[test]
    fn scheduler_rejects_bad_factor() {
        assert!(PlateauScheduler::new(1e-4, 10, 1.0, 1e-6).is_err());
        assert!(PlateauScheduler::new(1e-4, 10, 0.0, 1e-6).is_err());
    }

    #[test]
    fn early_stop_after_twenty_flat_epochs() {
        let mut s = EarlyStopper::new(20);
        let mut stopped_at = None;
        for epoch in 1..=40 {
            let metric = if epoch <= 5 { 1.0 / epoch as f64 } else { 0.2 };
            if s.step(metric) {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(25));
    }

    #[test]
    fn early_stop_never_fires_while_improving_or_alternating() {
        let mut s = EarlyStopper::new(20);
        for e in 0..100 {
            assert!(!s.step(-(e as f64)));
        }
        let mut s = EarlyStopper::new(20);
        let mut best = 10.0;
        for e in 0..100 {
            let m = if e % 2 == 0 {
                best -= 0.01;
                best
            } else {
                best + 5.0
            };
            assert!(!s.step(m));
        }
    }

    #[test]
    fn early_stop_flag_latches() {
        let mut s = EarlyStopper::new(1);
        s.step(1.0);
        assert!(s.step(1.0));
        assert!(s.step(-100.0));
        assert!(s.stopped());
    }
}
