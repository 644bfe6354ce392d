//! GRU encoder-decoder forecaster.
//!
//! The encoder reads the 72x10 lookback; its final state seeds a decoder
//! that reads the 120x9 horizon covariates. Every decoder state passes
//! through `dense(64, GELU)` and `dense(1)`.

use super::init::Initializer;
use super::recurrent::{to_time_major, GruCell};
use super::{check_batch, ArchSpec, Network};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::{FUTURE_FEATURES, HORIZON, PAST_FEATURES, PAST_HOURS};

/// Width of the hidden dense layer applied to each decoder state.
pub const DENSE_WIDTH: usize = 64;

pub struct Seq2SeqForecaster {
    spec: ArchSpec,
    encoder: GruCell,
    decoder: GruCell,
    dense_w: ParamId,
    dense_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    params: ParamStore,
}

impl Seq2SeqForecaster {
    pub fn new(spec: ArchSpec) -> Result<Self> {
        if spec.hidden == 0 {
            return Err(Error::Parameter("hidden size must be positive".into()));
        }
        let mut store = ParamStore::new();
        let mut init = Initializer::new(spec.seed);
        let encoder = GruCell::new(&mut init, &mut store, "encoder", PAST_FEATURES, spec.hidden);
        let decoder = GruCell::new(&mut init, &mut store, "decoder", FUTURE_FEATURES, spec.hidden);
        let dense_w = init.weight(&mut store, "dense.w", spec.hidden, DENSE_WIDTH);
        let dense_b = init.constant(&mut store, "dense.b", DENSE_WIDTH, 0.0);
        let out_w = init.weight(&mut store, "out.w", DENSE_WIDTH, 1);
        let out_b = init.constant(&mut store, "out.b", 1, 0.0);
        Ok(Self {
            spec,
            encoder,
            decoder,
            dense_w,
            dense_b,
            out_w,
            out_b,
            params: store,
        })
    }

    /// Final encoder state, `[B, H]`.
    pub fn context(&self, tape: &mut Tape, params: &ParamStore, batch: &[&WindowSample]) -> Result<Var> {
        check_batch(batch)?;
        let b = batch.len();
        let past: Vec<f64> = batch.iter().flat_map(|s| s.past.iter().copied()).collect();
        let x = tape.constant(to_time_major(&past, b, PAST_HOURS, PAST_FEATURES));
        let h0 = tape.constant(Tensor::zeros(&[b, self.spec.hidden]));
        let states = self.encoder.unroll(tape, params, x, b, h0)?;
        Ok(*states.last().expect("lookback is non-empty"))
    }
}

impl Network for Seq2SeqForecaster {
    fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn forward_with(&self, tape: &mut Tape, params: &ParamStore, batch: &[&WindowSample]) -> Result<Var> {
        let context = self.context(tape, params, batch)?;
        let b = batch.len();
        let future: Vec<f64> = batch.iter().flat_map(|s| s.future.iter().copied()).collect();
        let x = tape.constant(to_time_major(&future, b, HORIZON, FUTURE_FEATURES));
        let states = self.decoder.unroll(tape, params, x, b, context)?;

        let rows = tape.concat_rows(&states)?;
        let w = tape.param(params, self.dense_w);
        let bias = tape.param(params, self.dense_b);
        let y = tape.matmul(rows, w)?;
        let y = tape.add(y, bias)?;
        let y = tape.gelu(y);
        let w = tape.param(params, self.out_w);
        let bias = tape.param(params, self.out_b);
        let y = tape.matmul(y, w)?;
        let y = tape.add(y, bias)?;
        let y = tape.reshape(y, &[HORIZON, b])?;
        Ok(tape.transpose(y))
    }
}
