//! Mini-batch training with Adam, plateau halving, early stopping and
//! best-validation checkpointing.
//!
//! Each batch is cut into fixed-size chunks that run forward and backward on
//! their own tape. Chunk gradients are summed in chunk order, so the result
//! does not depend on how many threads ran them.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{target_tensor, Network};
use crate::autodiff::{AdamState, EarlyStopper, Gradients, ParamStore, PlateauScheduler, Tape};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::HORIZON;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub early_stop_patience: usize,
    /// Samples per tape inside a batch; the unit of parallel work.
    pub chunk_size: usize,
    pub shuffle_seed: u64,
    /// Stop as soon as an epoch's mean training MAE falls below this value.
    pub target_train_mae: Option<f64>,
    /// Stop after the first epoch that ends past this many wall-clock
    /// seconds. Runs cut short this way are not reproducible.
    #[serde(default)]
    pub max_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 512,
            max_epochs: 200,
            plateau_patience: 10,
            plateau_factor: 0.5,
            min_lr: 1e-6,
            early_stop_patience: 20,
            chunk_size: 8,
            shuffle_seed: 0,
            target_train_mae: None,
            max_seconds: None,
        }
    }
}

/// One row of the training log. `lr` is the rate used during the epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
}

/// Trains `net` in place and leaves it holding the parameters with the
/// lowest validation MAE.
pub fn train(
    net: &mut dyn Network,
    train_set: &[WindowSample],
    val_set: &[WindowSample],
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Contract(format!(
            "training needs non-empty sets (train {}, validation {})",
            train_set.len(),
            val_set.len()
        )));
    }
    if cfg.batch_size == 0 || cfg.chunk_size == 0 || cfg.max_epochs == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config(
            "batch_size, chunk_size, max_epochs and lr must be positive".into(),
        ));
    }
    let mut adam = AdamState::new(net.params(), cfg.lr);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.plateau_patience, cfg.plateau_factor, cfg.min_lr)?;
    let mut stopper = EarlyStopper::new(cfg.early_stop_patience);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut log = Vec::new();
    let mut stopped_early = false;
    let started = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let lr = sched.lr();
        adam.lr = lr;
        let mut abs_sum = 0.0;
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&WindowSample> = batch_idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_gradients(&*net, &batch, cfg.chunk_size, exec)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("training loss is {loss}"),
                });
            }
            abs_sum += loss * batch.len() as f64;
            let params = net.params_mut();
            params.zero_grads();
            for g in &grads {
                params.accumulate(g);
            }
            adam.step(params)?;
        }
        let train_mae = abs_sum / train_set.len() as f64;
        let val_mae = evaluate_mae(&*net, val_set, cfg.chunk_size, exec)?;
        if !val_mae.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("validation loss is {val_mae}"),
            });
        }
        log.push(EpochLog {
            epoch,
            train_mae,
            val_mae,
            lr,
        });
        if best.as_ref().is_none_or(|(_, b, _)| val_mae < *b) {
            best = Some((epoch, val_mae, net.params().clone()));
        }
        sched.step(val_mae);
        if stopper.step(val_mae) {
            stopped_early = true;
            break;
        }
        if cfg.target_train_mae.is_some_and(|t| train_mae < t) {
            break;
        }
        if cfg.max_seconds.is_some_and(|s| started.elapsed().as_secs_f64() > s) {
            break;
        }
    }

    let (best_epoch, best_val_mae, params) = best.expect("at least one epoch ran");
    net.params_mut().copy_values_from(&params)?;
    Ok(TrainOutcome {
        log,
        best_epoch,
        best_val_mae,
        stopped_early,
    })
}

/// Batch-mean MAE and the per-chunk gradients, in chunk order.
fn batch_gradients(
    net: &dyn Network,
    batch: &[&WindowSample],
    chunk_size: usize,
    exec: Exec,
) -> Result<(f64, Vec<Gradients>)> {
    let denom = batch.len() * HORIZON;
    let chunks: Vec<&[&WindowSample]> = batch.chunks(chunk_size).collect();
    let results = par::map(exec, &chunks, |chunk| -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let pred = net.forward(&mut tape, chunk)?;
        let target = tape.constant(target_tensor(chunk));
        let loss = tape.mae_with_denominator(pred, target, denom)?;
        let value = tape.value(loss).data()[0];
        Ok((value, tape.backward(loss)?))
    });
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(results.len());
    for r in results {
        let (l, g) = r?;
        loss += l;
        grads.push(g);
    }
    Ok((loss, grads))
}

/// Mean absolute error in normalized units over every sample and lead hour.
pub fn evaluate_mae(net: &dyn Network, samples: &[WindowSample], chunk_size: usize, exec: Exec) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Contract("no samples to evaluate".into()));
    }
    let refs: Vec<&WindowSample> = samples.iter().collect();
    let chunks: Vec<&[&WindowSample]> = refs.chunks(chunk_size.max(1)).collect();
    let sums = par::map(exec, &chunks, |chunk| -> Result<f64> {
        let preds = net.predict_norm(chunk)?;
        Ok(preds
            .iter()
            .zip(chunk.iter())
            .flat_map(|(p, s)| p.iter().zip(&s.target_norm).map(|(a, b)| (a - b).abs()))
            .sum())
    });
    let mut total = 0.0;
    for s in sums {
        total += s?;
    }
    Ok(total / (samples.len() * HORIZON) as f64)
}
