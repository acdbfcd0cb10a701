//! Reverse-mode differentiation over 2-D `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse and accumulates gradients into the parameters that
//! were read through [`Tape::param`]. Vectors are `1 × d` rows throughout.
//! The recurrent layer is a single fused node with its own backward pass
//! through time, which keeps tapes short for long utterances.

use std::collections::HashMap;

use ndarray::{s, Array1, Axis};

use crate::params::{Gradients, Mat, ParamId, ParamStore};

/// Clamp applied to probabilities before taking logarithms in the loss.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
struct LstmCache {
    x: Var,
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    reverse: bool,
    /// Activated gates per position, laid out `[i | f | g | o]`.
    gates: Mat,
    cells: Mat,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddBroadcast(Var, Var),
    MulScalar(Var, Var),
    OneMinus(Var),
    Mask(Var, Mat),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Lstm(Box<LstmCache>),
    BceLogits(Var, Vec<f64>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Option<Mat>,
    op: Op,
    needs_grad: bool,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub struct Tape<'a> {
    store: Option<&'a ParamStore>,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl Tape<'static> {
    /// A tape without parameters; useful for evaluating on plain matrices.
    pub fn detached() -> Self {
        Tape {
            store: None,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape {
            store: Some(store),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::MatMulT(a, b) | Op::Add(a, b) | Op::AddBroadcast(a, b) | Op::MulScalar(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::OneMinus(a)
            | Op::Mask(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SoftmaxRows(a)
            | Op::GatherRows(a, _)
            | Op::BceLogits(a, _)
            | Op::Sum(a) => self.needs(*a),
            Op::ConcatCols(vs) | Op::ConcatRows(vs) => vs.iter().any(|v| self.needs(*v)),
            Op::Lstm(c) => [c.x, c.w_ih, c.w_hh, c.bias].iter().any(|v| self.needs(*v)),
        };
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        assert!(self.store.is_some(), "tape has no parameter store");
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.store.expect("parameter store").value(*id),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "not a scalar node");
        m[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `1 × m` row (or a `1 × 1` scalar) to every row of `a`.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(bv.nrows(), 1, "broadcast operand must be a row");
        let value = if bv.ncols() == 1 {
            av + bv[[0, 0]]
        } else {
            assert_eq!(av.ncols(), bv.ncols(), "broadcast width mismatch");
            av + bv
        };
        self.push(value, Op::AddBroadcast(a, b))
    }

    /// Multiplies `a` by the `1 × 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let value = self.value(a) * self.scalar(s);
        self.push(value, Op::MulScalar(a, s))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| 1.0 - x);
        self.push(value, Op::OneMinus(a))
    }

    /// Elementwise product with a constant matrix (dropout masks).
    pub fn mask(&mut self, a: Var, mask: Mat) -> Var {
        let value = self.value(a) * &mask;
        self.push(value, Op::Mask(a, mask))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let total = row.sum();
            row /= total;
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols rows mismatch");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows cols mismatch");
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let value = self.value(a).select(Axis(0), rows);
        self.push(value, Op::GatherRows(a, rows.to_vec()))
    }

    /// Runs one LSTM direction over the rows of `x` (`n × d_in`). Weights
    /// are `w_ih: d_in × 4h`, `w_hh: h × 4h`, `bias: 1 × 4h` with gate blocks
    /// ordered input, forget, cell, output. Output row `t` is the hidden
    /// state at position `t`, whichever direction the recurrence runs.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, bias: Var, reverse: bool) -> Var {
        let (hs, gates, cells) = {
            let (xv, wih, whh, b) = (self.value(x), self.value(w_ih), self.value(w_hh), self.value(bias));
            let n = xv.nrows();
            let h = whh.nrows();
            assert_eq!(whh.ncols(), 4 * h, "w_hh must be h × 4h");
            assert_eq!(wih.dim(), (xv.ncols(), 4 * h), "w_ih must be d_in × 4h");
            assert_eq!(b.dim(), (1, 4 * h), "bias must be 1 × 4h");
            let pre = xv.dot(wih) + b;
            let mut gates = Mat::zeros((n, 4 * h));
            let mut cells = Mat::zeros((n, h));
            let mut hs = Mat::zeros((n, h));
            let mut h_prev = Array1::<f64>::zeros(h);
            let mut c_prev = Array1::<f64>::zeros(h);
            for k in 0..n {
                let t = if reverse { n - 1 - k } else { k };
                let z = &pre.row(t) + &h_prev.dot(whh);
                for j in 0..h {
                    let i = sigmoid(z[j]);
                    let f = sigmoid(z[h + j]);
                    let g = z[2 * h + j].tanh();
                    let o = sigmoid(z[3 * h + j]);
                    let c = f * c_prev[j] + i * g;
                    gates[[t, j]] = i;
                    gates[[t, h + j]] = f;
                    gates[[t, 2 * h + j]] = g;
                    gates[[t, 3 * h + j]] = o;
                    cells[[t, j]] = c;
                    hs[[t, j]] = o * c.tanh();
                }
                h_prev = hs.row(t).to_owned();
                c_prev = cells.row(t).to_owned();
            }
            (hs, gates, cells)
        };
        let cache = LstmCache {
            x,
            w_ih,
            w_hh,
            bias,
            reverse,
            gates,
            cells,
        };
        self.push(hs, Op::Lstm(Box::new(cache)))
    }

    /// Summed binary cross-entropy of `sigmoid(z)` against `targets`, with
    /// probabilities clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce_logits(&mut self, z: Var, targets: &[f64]) -> Var {
        let zv = self.value(z);
        assert_eq!(zv.len(), targets.len(), "one target per logit");
        let loss: f64 = zv
            .iter()
            .zip(targets)
            .map(|(&z, &t)| {
                let p = sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum();
        self.push(Mat::from_elem((1, 1), loss), Op::BceLogits(z, targets.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(Mat::from_elem((1, 1), total), Op::Sum(a))
    }

    /// Gradient of a scalar node with respect to every parameter it reads.
    pub fn backward(&self, loss: Var) -> Gradients {
        self.backward_seeded(&[(loss, Mat::from_elem((1, 1), 1.0))])
    }

    /// Back-propagates the given upstream gradients (one per seed node).
    pub fn backward_seeded(&self, seeds: &[(Var, Mat)]) -> Gradients {
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            assert_eq!(self.value(*v).dim(), g.dim(), "seed shape mismatch");
            accumulate(&mut grads, *v, g.clone());
        }
        let mut out = Gradients::new(self.store.map_or(0, ParamStore::len));
        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, g, &mut grads, &mut out);
        }
        out
    }

    fn backward_node(&self, i: usize, g: Mat, grads: &mut [Option<Mat>], out: &mut Gradients) {
        let mut send = |v: Var, grad: Mat| {
            if self.needs(v) {
                accumulate(grads, v, grad);
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Param(id) => out.accumulate(*id, &g),
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    send(*a, g.dot(&self.value(*b).t()));
                }
                if self.needs(*b) {
                    send(*b, self.value(*a).t().dot(&g));
                }
            }
            Op::MatMulT(a, b) => {
                if self.needs(*a) {
                    send(*a, g.dot(self.value(*b)));
                }
                if self.needs(*b) {
                    send(*b, g.t().dot(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g);
            }
            Op::AddBroadcast(a, b) => {
                let gb = if self.value(*b).ncols() == 1 {
                    Mat::from_elem((1, 1), g.sum())
                } else {
                    g.sum_axis(Axis(0)).insert_axis(Axis(0))
                };
                send(*b, gb);
                send(*a, g);
            }
            Op::MulScalar(a, s) => {
                let gs = (&g * self.value(*a)).sum();
                send(*s, Mat::from_elem((1, 1), gs));
                send(*a, g * self.scalar(*s));
            }
            Op::OneMinus(a) => send(*a, -g),
            Op::Mask(a, m) => send(*a, g * m),
            Op::Sigmoid(a) => {
                let y = self.value(Var(i));
                send(*a, g * &y.mapv(|y| y * (1.0 - y)));
            }
            Op::Tanh(a) => {
                let y = self.value(Var(i));
                send(*a, g * &y.mapv(|y| 1.0 - y * y));
            }
            Op::SoftmaxRows(a) => {
                let y = self.value(Var(i));
                let mut ga = &g * y;
                for (mut row, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                    let dot = row.sum();
                    row.zip_mut_with(&yrow, |r, &p| *r -= p * dot);
                }
                send(*a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for v in parts {
                    let w = self.value(*v).ncols();
                    send(*v, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for v in parts {
                    let h = self.value(*v).nrows();
                    send(*v, g.slice(s![start..start + h, ..]).to_owned());
                    start += h;
                }
            }
            Op::GatherRows(a, rows) => {
                let mut ga = Mat::zeros(self.value(*a).dim());
                for (k, &r) in rows.iter().enumerate() {
                    let mut dst = ga.row_mut(r);
                    dst += &g.row(k);
                }
                send(*a, ga);
            }
            Op::Lstm(cache) => self.lstm_backward(Var(i), cache, &g, &mut send),
            Op::BceLogits(z, targets) => {
                let up = g[[0, 0]];
                let zv = self.value(*z);
                let mut gz = Mat::zeros(zv.dim());
                for ((dst, &zz), &t) in gz.iter_mut().zip(zv.iter()).zip(targets) {
                    *dst = (sigmoid(zz) - t) * up;
                }
                send(*z, gz);
            }
            Op::Sum(a) => send(*a, Mat::from_elem(self.value(*a).dim(), g[[0, 0]])),
        }
    }

    fn lstm_backward(&self, out: Var, c: &LstmCache, g: &Mat, send: &mut impl FnMut(Var, Mat)) {
        let (n, h) = c.cells.dim();
        let whh = self.value(c.w_hh);
        let pos = |k: usize| if c.reverse { n - 1 - k } else { k };
        let mut dz = Mat::zeros((n, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for k in (0..n).rev() {
            let t = pos(k);
            let prev = (k > 0).then(|| pos(k - 1));
            for j in 0..h {
                let i = c.gates[[t, j]];
                let f = c.gates[[t, h + j]];
                let gg = c.gates[[t, 2 * h + j]];
                let o = c.gates[[t, 3 * h + j]];
                let tc = c.cells[[t, j]].tanh();
                let dh = g[[t, j]] + dh_next[j];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                let c_prev = prev.map_or(0.0, |p| c.cells[[p, j]]);
                dz[[t, j]] = dc * gg * i * (1.0 - i);
                dz[[t, h + j]] = dc * c_prev * f * (1.0 - f);
                dz[[t, 2 * h + j]] = dc * i * (1.0 - gg * gg);
                dz[[t, 3 * h + j]] = dh * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next = whh.dot(&dz.row(t));
        }
        if self.needs(c.w_hh) {
            let hs = self.value(out);
            let mut h_prev = Mat::zeros((n, h));
            for k in 1..n {
                h_prev.row_mut(pos(k)).assign(&hs.row(pos(k - 1)));
            }
            send(c.w_hh, h_prev.t().dot(&dz));
        }
        if self.needs(c.w_ih) {
            send(c.w_ih, self.value(c.x).t().dot(&dz));
        }
        if self.needs(c.bias) {
            send(c.bias, dz.sum_axis(Axis(0)).insert_axis(Axis(0)));
        }
        if self.needs(c.x) {
            send(c.x, dz.dot(&self.value(c.w_ih).t()));
        }
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}
