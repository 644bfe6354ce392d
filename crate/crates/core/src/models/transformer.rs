//! Single-layer Transformer encoder forecaster.
//!
//! The unified 192x10 input is embedded to `d_model`, a learnable positional
//! table is added, one post-norm encoder layer (multi-head self-attention and
//! a GELU feed-forward block) is applied, and a shared linear head maps each
//! of the final 120 positions to one forecast hour.

use super::init::Initializer;
use super::{check_batch, horizon_head, ArchSpec, Network};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::data::{sample::write_unified, WindowSample};
use crate::error::{Error, Result};
use crate::{HORIZON, PAST_FEATURES, PAST_HOURS, SEQ_LEN};

const LN_EPS: f64 = 1e-5;

/// Multi-head scaled dot-product self-attention. Each head attends over
/// `d_model / heads` columns and scores are scaled by `1/√d_head`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub d_model: usize,
    w_q: ParamId,
    b_q: ParamId,
    w_k: ParamId,
    b_k: ParamId,
    w_v: ParamId,
    b_v: ParamId,
    w_o: ParamId,
    b_o: ParamId,
}

pub struct AttentionOutput {
    /// Projected attention output, same shape as the input.
    pub out: Var,
    /// Concatenated head outputs before the output projection; its softmax
    /// weights are available through [`Tape::attention_weights`].
    pub heads: Var,
}

impl MultiHeadAttention {
    pub fn new(
        init: &mut Initializer,
        store: &mut ParamStore,
        prefix: &str,
        d_model: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::Parameter(format!(
                "d_model {d_model} is not divisible by {heads} heads"
            )));
        }
        let mut proj = |name: &str| {
            let w = init.weight(store, &format!("{prefix}.w_{name}"), d_model, d_model);
            let b = init.constant(store, &format!("{prefix}.b_{name}"), d_model, 0.0);
            (w, b)
        };
        let (w_q, b_q) = proj("q");
        let (w_k, b_k) = proj("k");
        let (w_v, b_v) = proj("v");
        let (w_o, b_o) = proj("o");
        Ok(Self {
            heads,
            d_model,
            w_q,
            b_q,
            w_k,
            b_k,
            w_v,
            b_v,
            w_o,
            b_o,
        })
    }

    /// Ids of the key projection, exposed for tests that zero it.
    pub fn key_params(&self) -> (ParamId, ParamId) {
        (self.w_k, self.b_k)
    }

    /// `x` stacks `x.rows() / seq_len` independent sequences of `seq_len`
    /// rows each; attention never crosses sequence boundaries.
    pub fn forward(&self, tape: &mut Tape, params: &ParamStore, x: Var, seq_len: usize) -> Result<AttentionOutput> {
        let xv = tape.value(x);
        if xv.cols() != self.d_model || seq_len == 0 || xv.rows() % seq_len != 0 {
            return Err(Error::shape(
                "multi_head_attention",
                format!("input {:?} with sequence length {seq_len}", xv.shape()),
            ));
        }
        let linear = |tape: &mut Tape, w: ParamId, b: ParamId, input: Var| -> Result<Var> {
            let wv = tape.param(params, w);
            let bv = tape.param(params, b);
            let y = tape.matmul(input, wv)?;
            tape.add(y, bv)
        };
        let q = linear(tape, self.w_q, self.b_q, x)?;
        let k = linear(tape, self.w_k, self.b_k, x)?;
        let v = linear(tape, self.w_v, self.b_v, x)?;
        let heads = tape.attention(q, k, v, self.heads, seq_len)?;
        let out = linear(tape, self.w_o, self.b_o, heads)?;
        Ok(AttentionOutput { out, heads })
    }
}

#[derive(Clone, Debug)]
struct Layout {
    embed_w: ParamId,
    embed_b: ParamId,
    pos: ParamId,
    attn: MultiHeadAttention,
    ln1_g: ParamId,
    ln1_b: ParamId,
    ffn_w1: ParamId,
    ffn_b1: ParamId,
    ffn_w2: ParamId,
    ffn_b2: ParamId,
    ln2_g: ParamId,
    ln2_b: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

pub struct TransformerForecaster {
    spec: ArchSpec,
    layout: Layout,
    params: ParamStore,
}

impl TransformerForecaster {
    pub fn new(spec: ArchSpec) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(spec.seed);
        let d = spec.d_model;
        let embed_w = init.weight(&mut store, "embed.w", PAST_FEATURES, d);
        let embed_b = init.constant(&mut store, "embed.b", d, 0.0);
        let pos = init.normal(&mut store, "pos", &[SEQ_LEN, d], 0.02);
        let attn = MultiHeadAttention::new(&mut init, &mut store, "attn", d, spec.heads)?;
        let ln1_g = init.constant(&mut store, "ln1.gain", d, 1.0);
        let ln1_b = init.constant(&mut store, "ln1.bias", d, 0.0);
        let ffn_w1 = init.weight(&mut store, "ffn.w1", d, spec.ffn);
        let ffn_b1 = init.constant(&mut store, "ffn.b1", spec.ffn, 0.0);
        let ffn_w2 = init.weight(&mut store, "ffn.w2", spec.ffn, d);
        let ffn_b2 = init.constant(&mut store, "ffn.b2", d, 0.0);
        let ln2_g = init.constant(&mut store, "ln2.gain", d, 1.0);
        let ln2_b = init.constant(&mut store, "ln2.bias", d, 0.0);
        let head_w = init.weight(&mut store, "head.w", d, 1);
        let head_b = init.constant(&mut store, "head.b", 1, 0.0);
        Ok(Self {
            spec,
            layout: Layout {
                embed_w,
                embed_b,
                pos,
                attn,
                ln1_g,
                ln1_b,
                ffn_w1,
                ffn_b1,
                ffn_w2,
                ffn_b2,
                ln2_g,
                ln2_b,
                head_w,
                head_b,
            },
            params: store,
        })
    }

    pub fn attention(&self) -> &MultiHeadAttention {
        &self.layout.attn
    }

    /// Forward pass over pre-built unified rows (`[B*192, 10]`).
    pub fn forward_unified(&self, tape: &mut Tape, params: &ParamStore, unified: Tensor) -> Result<Var> {
        if unified.cols() != PAST_FEATURES || unified.rows() % SEQ_LEN != 0 {
            return Err(Error::shape(
                "transformer_forward",
                format!("expected [B*{SEQ_LEN}, {PAST_FEATURES}], got {:?}", unified.shape()),
            ));
        }
        let l = &self.layout;
        let batch = unified.rows() / SEQ_LEN;
        let p = |tape: &mut Tape, id| tape.param(params, id);

        let u = tape.constant(unified);
        let (w, b) = (p(tape, l.embed_w), p(tape, l.embed_b));
        let e = tape.matmul(u, w)?;
        let e = tape.add(e, b)?;
        let pos = p(tape, l.pos);
        let e = tape.add(e, pos)?;

        let attn = l.attn.forward(tape, params, e, SEQ_LEN)?;
        let x = tape.add(e, attn.out)?;
        let (g, b) = (p(tape, l.ln1_g), p(tape, l.ln1_b));
        let x1 = tape.layer_norm(x, g, b, LN_EPS)?;

        let (w1, b1) = (p(tape, l.ffn_w1), p(tape, l.ffn_b1));
        let f = tape.matmul(x1, w1)?;
        let f = tape.add(f, b1)?;
        let f = tape.gelu(f);
        let (w2, b2) = (p(tape, l.ffn_w2), p(tape, l.ffn_b2));
        let f = tape.matmul(f, w2)?;
        let f = tape.add(f, b2)?;
        let x = tape.add(x1, f)?;
        let (g, b) = (p(tape, l.ln2_g), p(tape, l.ln2_b));
        let x2 = tape.layer_norm(x, g, b, LN_EPS)?;

        let tails: Vec<Var> = (0..batch)
            .map(|s| tape.slice(x2, s * SEQ_LEN + PAST_HOURS, HORIZON, 0, self.spec.d_model))
            .collect::<Result<_>>()?;
        let rows = if tails.len() == 1 { tails[0] } else { tape.concat_rows(&tails)? };
        let (hw, hb) = (p(tape, l.head_w), p(tape, l.head_b));
        horizon_head(tape, rows, hw, hb, batch)
    }
}

impl Network for TransformerForecaster {
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
        check_batch(batch)?;
        let mut rows = Vec::with_capacity(batch.len() * SEQ_LEN * PAST_FEATURES);
        for s in batch {
            write_unified(s, self.spec.policy, &mut rows);
        }
        let unified = Tensor::from_parts(vec![batch.len() * SEQ_LEN, PAST_FEATURES], rows);
        self.forward_unified(tape, params, unified)
    }
}
