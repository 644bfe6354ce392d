//! The five forecasters and the shared training loop.

pub mod checkpoint;
mod init;
pub mod persistence;
pub mod recurrent;
pub mod seq2seq;
pub mod train;
pub mod transformer;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::data::{ExtensionPolicy, WindowSample};
use crate::error::{Error, Result};
use crate::HORIZON;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use init::Initializer;
pub use persistence::persistence_forecast;
pub use recurrent::{GruCell, LstmCell, RecurrentForecaster};
pub use seq2seq::Seq2SeqForecaster;
pub use train::{evaluate_mae, train, EpochLog, TrainConfig, TrainOutcome};
pub use transformer::{MultiHeadAttention, TransformerForecaster};

/// Forecaster family. The declaration order is the canonical model order
/// used for report rows and tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Persistence,
    Seq2Seq,
    Gru,
    Lstm,
    Transformer,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Persistence,
        Architecture::Seq2Seq,
        Architecture::Gru,
        Architecture::Lstm,
        Architecture::Transformer,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Persistence => "persistence",
            Architecture::Seq2Seq => "seq2seq",
            Architecture::Gru => "gru",
            Architecture::Lstm => "lstm",
            Architecture::Transformer => "transformer",
        }
    }

    /// Row label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Architecture::Persistence => "Persistence",
            Architecture::Seq2Seq => "Seq2Seq",
            Architecture::Gru => "GRU",
            Architecture::Lstm => "LSTM",
            Architecture::Transformer => "Transformer",
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == tag.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown model tag `{tag}`")))
    }

    /// Extension policy paired with the architecture by default.
    pub fn default_policy(self) -> ExtensionPolicy {
        match self {
            Architecture::Transformer | Architecture::Persistence => ExtensionPolicy::Persistence,
            _ => ExtensionPolicy::ZeroPad,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Everything needed to rebuild a network's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub arch: Architecture,
    pub hidden: usize,
    pub heads: usize,
    pub d_model: usize,
    pub ffn: usize,
    pub policy: ExtensionPolicy,
    pub seed: u64,
}

impl ArchSpec {
    /// Reference-scale defaults: d_model 64, 8 heads, FFN 256, hidden 64.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        Self {
            arch,
            hidden: 64,
            heads: 8,
            d_model: 64,
            ffn: 256,
            policy: arch.default_policy(),
            seed,
        }
    }
}

/// A trainable forecaster mapping a batch to `[B, 120]` normalized
/// discharge.
pub trait Network: Send + Sync {
    fn spec(&self) -> &ArchSpec;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Forward pass reading weights from `params`, which must share this
    /// network's layout.
    fn forward_with(&self, tape: &mut Tape, params: &ParamStore, batch: &[&WindowSample]) -> Result<Var>;

    fn forward(&self, tape: &mut Tape, batch: &[&WindowSample]) -> Result<Var> {
        self.forward_with(tape, self.params(), batch)
    }

    /// Normalized forecasts, one `Vec` of 120 values per sample.
    fn predict_norm(&self, batch: &[&WindowSample]) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, batch)?;
        Ok(tape
            .value(out)
            .data()
            .chunks(HORIZON)
            .map(<[f64]>::to_vec)
            .collect())
    }
}

/// Builds a freshly initialized network for `spec`.
pub fn build_network(spec: &ArchSpec) -> Result<Box<dyn Network>> {
    Ok(match spec.arch {
        Architecture::Persistence => {
            return Err(Error::NoTraining(spec.arch.tag().into()));
        }
        Architecture::Lstm | Architecture::Gru => Box::new(RecurrentForecaster::new(spec.clone())?),
        Architecture::Seq2Seq => Box::new(Seq2SeqForecaster::new(spec.clone())?),
        Architecture::Transformer => Box::new(TransformerForecaster::new(spec.clone())?),
    })
}

/// Normalized targets of a batch as a `[B, 120]` tensor.
pub fn target_tensor(batch: &[&WindowSample]) -> Tensor {
    let data: Vec<f64> = batch.iter().flat_map(|s| s.target_norm.iter().copied()).collect();
    Tensor::from_parts(vec![batch.len(), HORIZON], data)
}

pub(crate) fn check_batch(batch: &[&WindowSample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    if let Some(bad) = batch.iter().find(|s| !s.is_well_formed()) {
        return Err(Error::shape(
            "forward",
            format!(
                "sample {}@{} is not 72x10 / 120x9 / 120",
                bad.station_id, bad.anchor_time
            ),
        ));
    }
    Ok(())
}

/// Shared `d -> 1` projection producing `[B, 120]` from `[B*120, d]` rows in
/// sample-major order.
pub(crate) fn horizon_head(
    tape: &mut Tape,
    rows: Var,
    w: Var,
    b: Var,
    batch: usize,
) -> Result<Var> {
    let y = tape.matmul(rows, w)?;
    let y = tape.add(y, b)?;
    tape.reshape(y, &[batch, HORIZON])
}
