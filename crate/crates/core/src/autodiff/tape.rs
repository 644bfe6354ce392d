//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive appends one node to the tape holding its output value and
//! whatever it needs for the backward pass. Nodes are appended after their
//! inputs, so walking the tape from the end visits every operation once in
//! reverse topological order.

use super::gemm::{gemm, gemm_view, View};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_COEF: f64 = 0.044_715;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// GELU, tanh approximation.
pub fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Constant,
    MatMul { a: usize, b: usize, b_t: bool },
    Add(usize, usize),
    /// `b` is tiled down the rows of `a`.
    AddTiled(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Gelu(usize),
    SoftmaxRows(usize),
    Attention {
        q: usize,
        k: usize,
        v: usize,
        heads: usize,
        seq_len: usize,
        weights: Vec<f64>,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Mae { pred: usize, target: usize, denom: f64 },
    Sum(usize),
    Slice { a: usize, row0: usize, col0: usize },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    Transpose(usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| self.nodes[i].needs_grad)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Records a trainable parameter; its gradient is routed back to `id`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` without materialising the transpose.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, b_t: bool) -> Result<Var> {
        let (av, bv) = (self.val(a), self.val(b));
        let (m, k) = (av.rows(), av.cols());
        let (bk, n) = if b_t {
            (bv.cols(), bv.rows())
        } else {
            (bv.rows(), bv.cols())
        };
        if k != bk {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}{}", av.shape(), bv.shape(), if b_t { "ᵀ" } else { "" }),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, 1.0, av.data(), false, bv.data(), b_t, 0.0, &mut out);
        let ng = self.needs(&[a.0, b.0]);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::MatMul { a: a.0, b: b.0, b_t },
            ng,
        ))
    }

    /// Elementwise sum. A `b` with the same column count whose row count
    /// divides `a`'s is tiled down the rows (bias or positional table).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.val(a), self.val(b));
        if av.shape() == bv.shape() {
            let out = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
            let value = Tensor::from_parts(av.shape().to_vec(), out);
            let ng = self.needs(&[a.0, b.0]);
            return Ok(self.push(value, Op::Add(a.0, b.0), ng));
        }
        let (c, r) = (av.cols(), bv.rows());
        if bv.cols() != c || av.rows() % r != 0 {
            return Err(Error::shape(
                "add",
                format!("cannot broadcast {:?} onto {:?}", bv.shape(), av.shape()),
            ));
        }
        let tile = r * c;
        let mut out = av.data().to_vec();
        for chunk in out.chunks_mut(tile) {
            for (o, y) in chunk.iter_mut().zip(bv.data()) {
                *o += y;
            }
        }
        let value = Tensor::from_parts(av.shape().to_vec(), out);
        let ng = self.needs(&[a.0, b.0]);
        Ok(self.push(value, Op::AddTiled(a.0, b.0), ng))
    }

    fn binary_same(&mut self, name: &'static str, a: Var, b: Var) -> Result<(Vec<usize>, bool)> {
        let (av, bv) = (self.val(a), self.val(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        Ok((av.shape().to_vec(), self.needs(&[a.0, b.0])))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, ng) = self.binary_same("sub", a, b)?;
        let out = zip_map(self.val(a), self.val(b), |x, y| x - y);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Sub(a.0, b.0), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, ng) = self.binary_same("mul", a, b)?;
        let out = zip_map(self.val(a), self.val(b), |x, y| x * y);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Mul(a.0, b.0), ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, Op::Scale(a.0, factor), |x| x * factor)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a.0), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a.0), f64::tanh)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Gelu(a.0), gelu)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let av = self.val(a);
        let out = av.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), out);
        let ng = self.nodes[a.0].needs_grad;
        self.push(value, op, ng)
    }

    /// Row-wise softmax over the last axis, max-shifted.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = self.val(a);
        let c = av.cols();
        let mut out = av.data().to_vec();
        softmax_in_place(&mut out, c);
        let value = Tensor::from_parts(av.shape().to_vec(), out);
        let ng = self.nodes[a.0].needs_grad;
        self.push(value, Op::SoftmaxRows(a.0), ng)
    }

    /// Scaled dot-product attention for every head of every sequence.
    ///
    /// `q`, `k`, `v` are `[n_seq * seq_len, d]` with head `h` owning columns
    /// `h*d/heads .. (h+1)*d/heads`. Each head computes
    /// `softmax(Q_h K_hᵀ / √d_head) V_h` within its own sequence; head outputs
    /// are written back side by side in the same column layout.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, seq_len: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.val(q), self.val(k), self.val(v));
        let d = qv.cols();
        if kv.shape() != qv.shape()
            || vv.shape() != qv.shape()
            || heads == 0
            || d % heads != 0
            || seq_len == 0
            || qv.rows() % seq_len != 0
        {
            return Err(Error::shape(
                "attention",
                format!(
                    "q {:?}, k {:?}, v {:?}, {heads} heads, sequence length {seq_len}",
                    qv.shape(),
                    kv.shape(),
                    vv.shape()
                ),
            ));
        }
        let n_seq = qv.rows() / seq_len;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let ll = seq_len * seq_len;
        let mut weights = vec![0.0; n_seq * heads * ll];
        let mut out = vec![0.0; qv.len()];
        for s in 0..n_seq {
            for h in 0..heads {
                let base = s * seq_len * d + h * dh;
                let w = &mut weights[(s * heads + h) * ll..(s * heads + h + 1) * ll];
                gemm_view(
                    seq_len,
                    dh,
                    seq_len,
                    scale,
                    qv.data(),
                    View::new(base, d, 1),
                    kv.data(),
                    View::new(base, 1, d),
                    0.0,
                    w,
                    View::new(0, seq_len, 1),
                );
                softmax_in_place(w, seq_len);
                gemm_view(
                    seq_len,
                    seq_len,
                    dh,
                    1.0,
                    w,
                    View::new(0, seq_len, 1),
                    vv.data(),
                    View::new(base, d, 1),
                    0.0,
                    &mut out,
                    View::new(base, d, 1),
                );
            }
        }
        let value = Tensor::from_parts(qv.shape().to_vec(), out);
        let ng = self.needs(&[q.0, k.0, v.0]);
        Ok(self.push(
            value,
            Op::Attention {
                q: q.0,
                k: k.0,
                v: v.0,
                heads,
                seq_len,
                weights,
            },
            ng,
        ))
    }

    /// Softmax weights saved by an [`Tape::attention`] node, laid out as
    /// `[n_seq][heads][seq_len][seq_len]`.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Normalises each row to zero mean and unit variance, then applies the
    /// affine `gain`/`bias` (both of length equal to the row width).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Contract("layer_norm eps must be positive".into()));
        }
        let (xv, gv, bv) = (self.val(x), self.val(gain), self.val(bias));
        let d = xv.cols();
        if gv.len() != d || bv.len() != d {
            return Err(Error::shape(
                "layer_norm",
                format!("row width {d}, gain {:?}, bias {:?}", gv.shape(), bv.shape()),
            ));
        }
        let rows = xv.rows();
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), out);
        let ng = self.needs(&[x.0, gain.0, bias.0]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Mean absolute error; the subgradient at an exact tie is zero.
    pub fn mae(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.mae_scaled(pred, target, None)
    }

    /// Sum of absolute errors divided by `denominator` rather than by the
    /// element count. Lets a large batch be split into pieces whose losses
    /// add up to the batch mean.
    pub fn mae_with_denominator(&mut self, pred: Var, target: Var, denominator: usize) -> Result<Var> {
        self.mae_scaled(pred, target, Some(denominator))
    }

    fn mae_scaled(&mut self, pred: Var, target: Var, denom: Option<usize>) -> Result<Var> {
        let (_, ng) = self.binary_same("mae", pred, target)?;
        let (p, t) = (self.val(pred), self.val(target));
        let n = denom.unwrap_or(p.len()) as f64;
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum();
        Ok(self.push(
            Tensor::scalar(s / n),
            Op::Mae {
                pred: pred.0,
                target: target.0,
                denom: n,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.val(a).data().iter().sum();
        let ng = self.nodes[a.0].needs_grad;
        self.push(Tensor::scalar(s), Op::Sum(a.0), ng)
    }

    /// Rectangular block `[row0, row0+rows) x [col0, col0+cols)` of a matrix.
    pub fn slice(&mut self, a: Var, row0: usize, rows: usize, col0: usize, cols: usize) -> Result<Var> {
        let av = self.val(a);
        let c = av.cols();
        if rows == 0 || cols == 0 || row0 + rows > av.rows() || col0 + cols > c {
            return Err(Error::shape(
                "slice",
                format!("block {row0}+{rows} x {col0}+{cols} outside {:?}", av.shape()),
            ));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            out.extend_from_slice(&av.data()[r * c + col0..r * c + col0 + cols]);
        }
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols], out),
            Op::Slice { a: a.0, row0, col0 },
            ng,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let c = self.val(*first).cols();
        let mut out = Vec::new();
        for p in parts {
            let v = self.val(*p);
            if v.cols() != c {
                return Err(Error::shape("concat_rows", format!("width {} vs {c}", v.cols())));
            }
            out.extend_from_slice(v.data());
        }
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let ng = self.needs(&idx);
        let rows = out.len() / c;
        Ok(self.push(Tensor::from_parts(vec![rows, c], out), Op::ConcatRows(idx), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let r = self.val(*first).rows();
        let mut total = 0;
        for p in parts {
            let v = self.val(*p);
            if v.rows() != r {
                return Err(Error::shape("concat_cols", format!("height {} vs {r}", v.rows())));
            }
            total += v.cols();
        }
        let mut out = vec![0.0; r * total];
        let mut off = 0;
        for p in parts {
            let v = self.val(*p);
            let c = v.cols();
            for i in 0..r {
                out[i * total + off..i * total + off + c].copy_from_slice(v.row(i));
            }
            off += c;
        }
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let ng = self.needs(&idx);
        Ok(self.push(Tensor::from_parts(vec![r, total], out), Op::ConcatCols(idx), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let av = self.val(a);
        let (r, c) = (av.rows(), av.cols());
        let out = transposed(r, c, av.data());
        let ng = self.nodes[a.0].needs_grad;
        self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(a.0), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let av = self.val(a);
        if shape.iter().product::<usize>() != av.len() || shape.contains(&0) {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", av.shape()),
            ));
        }
        let value = Tensor::from_parts(shape.to_vec(), av.data().to_vec());
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::Reshape(a.0), ng))
    }

    /// Propagates d(loss)/d(node) back to every differentiable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.val(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf | Op::Param(_) | Op::Constant) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        let mut leaves = Vec::new();
        let mut params = Vec::new();
        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            match self.nodes[i].op {
                Op::Param(id) => params.push((id, g)),
                Op::Leaf => leaves.push((i, g)),
                _ => {}
            }
        }
        Ok(Gradients { leaves, params })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Leaf | Op::Param(_) | Op::Constant => {}
            Op::MatMul { a, b, b_t } => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k) = (av.rows(), av.cols());
                let nn = node.value.cols();
                if let Some(ga) = self.slot(*a, grads) {
                    // dA = G · op(B)ᵀ
                    gemm(m, nn, k, 1.0, g, false, bv.data(), !*b_t, 1.0, ga);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    if *b_t {
                        // B is n x k: dB = Gᵀ · A
                        gemm(nn, m, k, 1.0, g, true, av.data(), false, 1.0, gb);
                    } else {
                        // dB = Aᵀ · G
                        gemm(k, m, nn, 1.0, av.data(), true, g, false, 1.0, gb);
                    }
                }
            }
            Op::Add(a, b) => {
                for idx in [*a, *b] {
                    if let Some(ga) = self.slot(idx, grads) {
                        axpy(ga, g, 1.0);
                    }
                }
            }
            Op::AddTiled(a, b) => {
                if let Some(ga) = self.slot(*a, grads) {
                    axpy(ga, g, 1.0);
                }
                let tile = self.nodes[*b].value.len();
                if let Some(gb) = self.slot(*b, grads) {
                    for chunk in g.chunks(tile) {
                        axpy(gb, chunk, 1.0);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.slot(*a, grads) {
                    axpy(ga, g, 1.0);
                }
                if let Some(gb) = self.slot(*b, grads) {
                    axpy(gb, g, -1.0);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                if let Some(ga) = self.slot(*a, grads) {
                    for ((o, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = self.slot(*b, grads) {
                    for ((o, gi), ai) in gb.iter_mut().zip(g).zip(av) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(a, f) => {
                if let Some(ga) = self.slot(*a, grads) {
                    axpy(ga, g, *f);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for ((o, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for ((o, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::Gelu(a) => {
                let x = self.nodes[*a].value.data();
                if let Some(ga) = self.slot(*a, grads) {
                    for ((o, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                        *o += gi * gelu_grad(*xi);
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let c = node.value.cols();
                if let Some(ga) = self.slot(*a, grads) {
                    let mut local = g.to_vec();
                    softmax_backward_in_place(&mut local, y, c);
                    axpy(ga, &local, 1.0);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                weights,
            } => self.attention_backward(g, [*q, *k, *v], *heads, *seq_len, weights, grads),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = node.value.cols();
                let gain_v = self.nodes[*gain].value.data();
                if let Some(gg) = self.slot(*gain, grads) {
                    for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                        for ((o, gi), hi) in gg.iter_mut().zip(gr).zip(hr) {
                            *o += gi * hi;
                        }
                    }
                }
                if let Some(gbias) = self.slot(*bias, grads) {
                    for gr in g.chunks(d) {
                        axpy(gbias, gr, 1.0);
                    }
                }
                if let Some(gx) = self.slot(*x, grads) {
                    let mut gh = vec![0.0; d];
                    for (r, ((o, gr), hr)) in gx
                        .chunks_mut(d)
                        .zip(g.chunks(d))
                        .zip(xhat.chunks(d))
                        .enumerate()
                    {
                        for j in 0..d {
                            gh[j] = gr[j] * gain_v[j];
                        }
                        let mean_gh = gh.iter().sum::<f64>() / d as f64;
                        let mean_ghh = gh.iter().zip(hr).map(|(p, q)| p * q).sum::<f64>() / d as f64;
                        let is = inv_std[r];
                        for j in 0..d {
                            o[j] += is * (gh[j] - mean_gh - hr[j] * mean_ghh);
                        }
                    }
                }
            }
            Op::Mae {
                pred,
                target,
                denom,
            } => {
                let p = self.nodes[*pred].value.data();
                let t = self.nodes[*target].value.data();
                let scale = g[0] / denom;
                let sign = |a: f64, b: f64| -> f64 {
                    if a > b {
                        1.0
                    } else if a < b {
                        -1.0
                    } else {
                        0.0
                    }
                };
                if let Some(gp) = self.slot(*pred, grads) {
                    for ((o, a), b) in gp.iter_mut().zip(p).zip(t) {
                        *o += scale * sign(*a, *b);
                    }
                }
                if let Some(gt) = self.slot(*target, grads) {
                    for ((o, a), b) in gt.iter_mut().zip(p).zip(t) {
                        *o -= scale * sign(*a, *b);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::Slice { a, row0, col0 } => {
                let c = self.nodes[*a].value.cols();
                let (rows, cols) = (node.value.rows(), node.value.cols());
                if let Some(ga) = self.slot(*a, grads) {
                    for r in 0..rows {
                        let dst = &mut ga[(row0 + r) * c + col0..(row0 + r) * c + col0 + cols];
                        axpy(dst, &g[r * cols..(r + 1) * cols], 1.0);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.nodes[p].value.len();
                    if let Some(gp) = self.slot(p, grads) {
                        axpy(gp, &g[off..off + len], 1.0);
                    }
                    off += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let c = self.nodes[p].value.cols();
                    if let Some(gp) = self.slot(p, grads) {
                        for (r, dst) in gp.chunks_mut(c).enumerate() {
                            axpy(dst, &g[r * total + off..r * total + off + c], 1.0);
                        }
                    }
                    off += c;
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                if let Some(ga) = self.slot(*a, grads) {
                    let t = transposed(r, c, g);
                    axpy(ga, &t, 1.0);
                }
            }
            Op::Reshape(a) => {
                if let Some(ga) = self.slot(*a, grads) {
                    axpy(ga, g, 1.0);
                }
            }
        }
    }

    fn attention_backward(
        &self,
        g: &[f64],
        qkv: [usize; 3],
        heads: usize,
        seq_len: usize,
        weights: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let [q, k, v] = qkv;
        let (qv, kv, vv) = (&self.nodes[q].value, &self.nodes[k].value, &self.nodes[v].value);
        let d = qv.cols();
        let n_seq = qv.rows() / seq_len;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let ll = seq_len * seq_len;
        // q, k and v may be the same node, so accumulate into scratch first
        let mut dq = vec![0.0; qv.len()];
        let mut dk = vec![0.0; qv.len()];
        let mut dv = vec![0.0; qv.len()];
        let mut ds = vec![0.0; ll];
        let sq = View::new(0, seq_len, 1);
        let sq_t = View::new(0, 1, seq_len);
        for s in 0..n_seq {
            for h in 0..heads {
                let base = s * seq_len * d + h * dh;
                let rows = View::new(base, d, 1);
                let rows_t = View::new(base, 1, d);
                let a = &weights[(s * heads + h) * ll..(s * heads + h + 1) * ll];
                // dA = G_h V_hᵀ
                gemm_view(seq_len, dh, seq_len, 1.0, g, rows, vv.data(), rows_t, 0.0, &mut ds, sq);
                // dV_h = Aᵀ G_h
                gemm_view(seq_len, seq_len, dh, 1.0, a, sq_t, g, rows, 1.0, &mut dv, rows);
                softmax_backward_in_place(&mut ds, a, seq_len);
                // dQ_h = scale · dS K_h ; dK_h = scale · dSᵀ Q_h
                gemm_view(seq_len, seq_len, dh, scale, &ds, sq, kv.data(), rows, 1.0, &mut dq, rows);
                gemm_view(seq_len, seq_len, dh, scale, &ds, sq_t, qv.data(), rows, 1.0, &mut dk, rows);
            }
        }
        for (idx, buf) in [(q, dq), (k, dk), (v, dv)] {
            if let Some(slot) = self.slot(idx, grads) {
                axpy(slot, &buf, 1.0);
            }
        }
    }

    fn slot<'g>(&self, idx: usize, grads: &'g mut [Option<Vec<f64>>]) -> Option<&'g mut [f64]> {
        if !self.nodes[idx].needs_grad {
            return None;
        }
        let len = self.nodes[idx].value.len();
        Some(grads[idx].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }
}

fn softmax_in_place(x: &mut [f64], cols: usize) {
    for row in x.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            s += *x;
        }
        let inv = 1.0 / s;
        for x in row.iter_mut() {
            *x *= inv;
        }
    }
}

/// `grad ← y ⊙ (grad − rowsum(grad ⊙ y))`, the softmax Jacobian product.
fn softmax_backward_in_place(grad: &mut [f64], y: &[f64], cols: usize) {
    for (gr, yr) in grad.chunks_mut(cols).zip(y.chunks(cols)) {
        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
        for (gi, yi) in gr.iter_mut().zip(yr) {
            *gi = yi * (*gi - dot);
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect()
}

fn axpy(dst: &mut [f64], src: &[f64], alpha: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

fn transposed(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = x[i * cols + j];
        }
    }
    t
}

/// Gradients produced by one [`Tape::backward`] call.
#[derive(Debug, Default)]
pub struct Gradients {
    leaves: Vec<(usize, Vec<f64>)>,
    params: Vec<(ParamId, Vec<f64>)>,
}

impl Gradients {
    /// Gradient for a leaf created with [`Tape::leaf`]; `None` when the
    /// leaf is unreachable from the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.leaves
            .iter()
            .find(|(i, _)| *i == v.0)
            .map(|(_, g)| g.as_slice())
    }

    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.params.iter().map(|(id, g)| (*id, g.as_slice()))
    }
}
