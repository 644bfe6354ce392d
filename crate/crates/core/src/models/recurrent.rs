//! LSTM and GRU cells and the single-layer recurrent forecaster.
//!
//! Weight `W` maps input to hidden (`[in, H]`), `U` maps hidden to hidden
//! (`[H, H]`). Sequences are laid out time-major: row `t * B + b` is step `t`
//! of batch element `b`, so one step is a contiguous row block.

use super::init::Initializer;
use super::{check_batch, ArchSpec, Architecture, Network};
use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::data::{sample::write_unified, WindowSample};
use crate::error::{Error, Result};
use crate::{HORIZON, PAST_FEATURES, PAST_HOURS, SEQ_LEN};

/// Input-to-hidden projections of a whole sequence, one per gate.
fn project_inputs(
    tape: &mut Tape,
    params: &ParamStore,
    x_seq: Var,
    w: &[ParamId],
    b: &[ParamId],
) -> Result<Vec<Var>> {
    w.iter()
        .zip(b)
        .map(|(&w, &b)| {
            let wv = tape.param(params, w);
            let bv = tape.param(params, b);
            let y = tape.matmul(x_seq, wv)?;
            tape.add(y, bv)
        })
        .collect()
}

fn check_seq(tape: &Tape, x_seq: Var, input: usize, batch: usize) -> Result<usize> {
    let xv = tape.value(x_seq);
    if xv.cols() != input || batch == 0 || xv.rows() % batch != 0 {
        return Err(Error::shape(
            "recurrent",
            format!("sequence {:?} for input size {input}, batch {batch}", xv.shape()),
        ));
    }
    Ok(xv.rows() / batch)
}

/// Gates in the order input, forget, output, candidate.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    w: [ParamId; 4],
    u: [ParamId; 4],
    b: [ParamId; 4],
}

impl LstmCell {
    pub const GATES: [&'static str; 4] = ["i", "f", "o", "c"];

    /// Uniform `±1/√fan_in` weights; forget-gate bias 1, other biases 0.
    pub fn new(init: &mut Initializer, store: &mut ParamStore, prefix: &str, input: usize, hidden: usize) -> Self {
        let mut w = [ParamId(0); 4];
        let mut u = [ParamId(0); 4];
        let mut b = [ParamId(0); 4];
        for (g, name) in Self::GATES.iter().enumerate() {
            w[g] = init.weight(store, &format!("{prefix}.w_{name}"), input, hidden);
            u[g] = init.weight(store, &format!("{prefix}.u_{name}"), hidden, hidden);
            let bias = if *name == "f" { 1.0 } else { 0.0 };
            b[g] = init.constant(store, &format!("{prefix}.b_{name}"), hidden, bias);
        }
        Self { input, hidden, w, u, b }
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.w.iter().chain(&self.u).chain(&self.b).copied()
    }

    /// One step: `x_t` is `[B, in]`, `h_prev` and `c_prev` are `[B, H]`.
    pub fn step(&self, tape: &mut Tape, params: &ParamStore, x_t: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let batch = tape.value(x_t).rows();
        check_seq(tape, x_t, self.input, batch)?;
        let xw = project_inputs(tape, params, x_t, &self.w, &self.b)?;
        self.step_projected(tape, params, [xw[0], xw[1], xw[2], xw[3]], h_prev, c_prev)
    }

    fn step_projected(&self, tape: &mut Tape, params: &ParamStore, xw: [Var; 4], h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
        let hv = tape.value(h_prev);
        if hv.cols() != self.hidden || tape.value(c_prev).shape() != hv.shape() {
            return Err(Error::shape("lstm_cell", format!("hidden state {:?}", hv.shape())));
        }
        let mut pre = [h_prev; 4];
        for g in 0..4 {
            let u = tape.param(params, self.u[g]);
            let hu = tape.matmul(h_prev, u)?;
            pre[g] = tape.add(xw[g], hu)?;
        }
        let i = tape.sigmoid(pre[0]);
        let f = tape.sigmoid(pre[1]);
        let o = tape.sigmoid(pre[2]);
        let cand = tape.tanh(pre[3]);
        let keep = tape.mul(f, c_prev)?;
        let write = tape.mul(i, cand)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }

    /// Runs the cell over a time-major `[T*B, in]` sequence and returns the
    /// hidden state after every step.
    pub fn unroll(&self, tape: &mut Tape, params: &ParamStore, x_seq: Var, batch: usize, h0: Var, c0: Var) -> Result<Vec<Var>> {
        let steps = check_seq(tape, x_seq, self.input, batch)?;
        let xw = project_inputs(tape, params, x_seq, &self.w, &self.b)?;
        let (mut h, mut c) = (h0, c0);
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut x_t = [h0; 4];
            for g in 0..4 {
                x_t[g] = tape.slice(xw[g], t * batch, batch, 0, self.hidden)?;
            }
            (h, c) = self.step_projected(tape, params, x_t, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Gates in the order update, reset, candidate. The new state blends as
/// `h = (1 - z) ⊙ h_prev + z ⊙ h̃`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    w: [ParamId; 3],
    u: [ParamId; 3],
    b: [ParamId; 3],
}

impl GruCell {
    pub const GATES: [&'static str; 3] = ["z", "r", "h"];

    pub fn new(init: &mut Initializer, store: &mut ParamStore, prefix: &str, input: usize, hidden: usize) -> Self {
        let mut w = [ParamId(0); 3];
        let mut u = [ParamId(0); 3];
        let mut b = [ParamId(0); 3];
        for (g, name) in Self::GATES.iter().enumerate() {
            w[g] = init.weight(store, &format!("{prefix}.w_{name}"), input, hidden);
            u[g] = init.weight(store, &format!("{prefix}.u_{name}"), hidden, hidden);
            b[g] = init.constant(store, &format!("{prefix}.b_{name}"), hidden, 0.0);
        }
        Self { input, hidden, w, u, b }
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.w.iter().chain(&self.u).chain(&self.b).copied()
    }

    pub fn step(&self, tape: &mut Tape, params: &ParamStore, x_t: Var, h_prev: Var) -> Result<Var> {
        let batch = tape.value(x_t).rows();
        check_seq(tape, x_t, self.input, batch)?;
        let xw = project_inputs(tape, params, x_t, &self.w, &self.b)?;
        self.step_projected(tape, params, [xw[0], xw[1], xw[2]], h_prev)
    }

    fn step_projected(&self, tape: &mut Tape, params: &ParamStore, xw: [Var; 3], h_prev: Var) -> Result<Var> {
        if tape.value(h_prev).cols() != self.hidden {
            return Err(Error::shape(
                "gru_cell",
                format!("hidden state {:?}", tape.value(h_prev).shape()),
            ));
        }
        let u_z = tape.param(params, self.u[0]);
        let u_r = tape.param(params, self.u[1]);
        let u_h = tape.param(params, self.u[2]);
        let hz = tape.matmul(h_prev, u_z)?;
        let z = tape.add(xw[0], hz)?;
        let z = tape.sigmoid(z);
        let hr = tape.matmul(h_prev, u_r)?;
        let r = tape.add(xw[1], hr)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h_prev)?;
        let hh = tape.matmul(rh, u_h)?;
        let cand = tape.add(xw[2], hh)?;
        let cand = tape.tanh(cand);
        let delta = tape.sub(cand, h_prev)?;
        let step = tape.mul(z, delta)?;
        tape.add(h_prev, step)
    }

    pub fn unroll(&self, tape: &mut Tape, params: &ParamStore, x_seq: Var, batch: usize, h0: Var) -> Result<Vec<Var>> {
        let steps = check_seq(tape, x_seq, self.input, batch)?;
        let xw = project_inputs(tape, params, x_seq, &self.w, &self.b)?;
        let mut h = h0;
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut x_t = [h0; 3];
            for g in 0..3 {
                x_t[g] = tape.slice(xw[g], t * batch, batch, 0, self.hidden)?;
            }
            h = self.step_projected(tape, params, x_t, h)?;
            out.push(h);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
enum Cell {
    Lstm(LstmCell),
    Gru(GruCell),
}

/// LSTM or GRU run over the unified 192-step input from a zero state; a
/// shared linear head reads the hidden states of the last 120 steps.
pub struct RecurrentForecaster {
    spec: ArchSpec,
    cell: Cell,
    head_w: ParamId,
    head_b: ParamId,
    params: ParamStore,
}

impl RecurrentForecaster {
    pub fn new(spec: ArchSpec) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut init = Initializer::new(spec.seed);
        let cell = match spec.arch {
            Architecture::Lstm => Cell::Lstm(LstmCell::new(&mut init, &mut store, "lstm", PAST_FEATURES, spec.hidden)),
            Architecture::Gru => Cell::Gru(GruCell::new(&mut init, &mut store, "gru", PAST_FEATURES, spec.hidden)),
            other => {
                return Err(Error::Parameter(format!("`{other}` is not a recurrent architecture")));
            }
        };
        let head_w = init.weight(&mut store, "head.w", spec.hidden, 1);
        let head_b = init.constant(&mut store, "head.b", 1, 0.0);
        Ok(Self {
            spec,
            cell,
            head_w,
            head_b,
            params: store,
        })
    }

    /// Hidden states for a time-major `[T*B, 10]` sequence.
    pub fn hidden_states(&self, tape: &mut Tape, params: &ParamStore, x_seq: Var, batch: usize) -> Result<Vec<Var>> {
        let zeros = Tensor::zeros(&[batch, self.spec.hidden]);
        match &self.cell {
            Cell::Lstm(cell) => {
                let h0 = tape.constant(zeros.clone());
                let c0 = tape.constant(zeros);
                cell.unroll(tape, params, x_seq, batch, h0, c0)
            }
            Cell::Gru(cell) => {
                let h0 = tape.constant(zeros);
                cell.unroll(tape, params, x_seq, batch, h0)
            }
        }
    }
}

/// Reorders sample-major `[B*T, F]` rows to time-major.
pub(crate) fn to_time_major(rows: &[f64], batch: usize, steps: usize, features: usize) -> Tensor {
    let mut out = vec![0.0; rows.len()];
    for b in 0..batch {
        for t in 0..steps {
            let src = (b * steps + t) * features;
            let dst = (t * batch + b) * features;
            out[dst..dst + features].copy_from_slice(&rows[src..src + features]);
        }
    }
    Tensor::from_parts(vec![steps * batch, features], out)
}

/// Applies `d -> 1` head to time-major horizon states and returns `[B, 120]`.
pub(crate) fn time_major_head(tape: &mut Tape, states: &[Var], w: Var, b: Var, batch: usize) -> Result<Var> {
    let rows = tape.concat_rows(states)?;
    let y = tape.matmul(rows, w)?;
    let y = tape.add(y, b)?;
    let y = tape.reshape(y, &[states.len(), batch])?;
    Ok(tape.transpose(y))
}

impl Network for RecurrentForecaster {
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
        let b = batch.len();
        let mut rows = Vec::with_capacity(b * SEQ_LEN * PAST_FEATURES);
        for s in batch {
            write_unified(s, self.spec.policy, &mut rows);
        }
        let x = tape.constant(to_time_major(&rows, b, SEQ_LEN, PAST_FEATURES));
        let hs = self.hidden_states(tape, params, x, b)?;
        let w = tape.param(params, self.head_w);
        let bias = tape.param(params, self.head_b);
        debug_assert_eq!(hs.len() - PAST_HOURS, HORIZON);
        time_major_head(tape, &hs[PAST_HOURS..], w, bias, b)
    }
}
