//! Global-locally self-attentive encoders (GLE).
//!
//! A global BiLSTM is shared by every slot. With `use_local`, each slot also
//! owns a BiLSTM and an attention layer, and a learned per-slot gate
//! `beta = sigmoid(b_s)` mixes the two:
//! `H = beta * H_local + (1 - beta) * H_global` and
//! `c = beta * attn_local(H) + (1 - beta) * attn_global(H)`.

use std::collections::BTreeMap;

use ndarray::{Array1, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Mat, ParamId, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    GlobalOnly,
    FullGle,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::GlobalOnly => "global_only",
            Variant::FullGle => "full_gle",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "global_only" | "global" => Ok(Variant::GlobalOnly),
            "full_gle" | "full" => Ok(Variant::FullGle),
            other => Err(Error::Config(format!("unknown encoder variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GleConfig {
    pub input_dim: usize,
    pub hidden_per_direction: usize,
    pub use_local: bool,
    pub dropout_rate: f64,
    pub slot_names: Vec<String>,
}

impl GleConfig {
    pub fn output_dim(&self) -> usize {
        2 * self.hidden_per_direction
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_per_direction == 0 {
            return Err(Error::Config("hidden_per_direction must be positive".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Hidden states and their self-attended summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub h: Mat,
    pub c: Array1<f64>,
}

impl EncodedSequence {
    /// Encoding used in place of absent evidence: one zero state.
    pub fn zeros(width: usize) -> Self {
        EncodedSequence {
            h: Mat::zeros((1, width)),
            c: Array1::zeros(width),
        }
    }

    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }
}

/// Inverted dropout; masks are drawn from the owned generator.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        if self.rate == 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - self.rate);
        let dim = tape.value(x).dim();
        let mask = Mat::from_shape_fn(dim, |_| {
            if self.rng.random::<f64>() < self.rate {
                0.0
            } else {
                keep
            }
        });
        tape.mask(x, mask)
    }
}

fn maybe_drop(dropout: &mut Option<&mut Dropout>, tape: &mut Tape, x: Var) -> Var {
    match dropout {
        Some(d) => d.apply(tape, x),
        None => x,
    }
}

#[derive(Debug, Clone)]
struct LstmParams {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

impl LstmParams {
    fn new(store: &mut ParamStore, prefix: &str, d_in: usize, h: usize, rng: &mut impl Rng) -> Self {
        let w_ih = store.add_uniform(format!("{prefix}.w_ih"), d_in, 4 * h, rng);
        let w_hh = store.add_uniform(format!("{prefix}.w_hh"), h, 4 * h, rng);
        let mut b = Mat::zeros((1, 4 * h));
        b.slice_mut(ndarray::s![.., h..2 * h]).fill(1.0);
        let bias = store.add(format!("{prefix}.bias"), b);
        LstmParams { w_ih, w_hh, bias }
    }

    fn run(&self, tape: &mut Tape, x: Var, reverse: bool) -> Var {
        let (w_ih, w_hh, bias) = (tape.param(self.w_ih), tape.param(self.w_hh), tape.param(self.bias));
        tape.lstm(x, w_ih, w_hh, bias, reverse)
    }
}

#[derive(Debug, Clone)]
struct BiLstm {
    fwd: LstmParams,
    bwd: LstmParams,
}

impl BiLstm {
    fn new(store: &mut ParamStore, prefix: &str, d_in: usize, h: usize, rng: &mut impl Rng) -> Self {
        BiLstm {
            fwd: LstmParams::new(store, &format!("{prefix}.fwd"), d_in, h, rng),
            bwd: LstmParams::new(store, &format!("{prefix}.bwd"), d_in, h, rng),
        }
    }

    fn run(&self, tape: &mut Tape, x: Var) -> Var {
        let f = self.fwd.run(tape, x, false);
        let b = self.bwd.run(tape, x, true);
        tape.concat_cols(&[f, b])
    }
}

/// `a_i = w · H_i + b`, `p = softmax(a)`, `c = Σ p_i H_i`.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub w: ParamId,
    pub b: ParamId,
}

impl SelfAttention {
    fn new(store: &mut ParamStore, prefix: &str, d_h: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d_h as f64).sqrt();
        let w = Mat::from_shape_fn((1, d_h), |_| rng.random_range(-bound..bound));
        SelfAttention {
            w: store.add(format!("{prefix}.w"), w),
            b: store.add_zeros(format!("{prefix}.b"), 1, 1),
        }
    }

    fn run(&self, tape: &mut Tape, h: Var) -> Var {
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        self_attention(tape, h, w, b)
    }
}

/// Tape-level self-attention with explicit weight (`1 × d_h`) and bias
/// (`1 × 1`) nodes. Returns the `1 × d_h` summary.
pub fn self_attention(tape: &mut Tape, h: Var, w: Var, b: Var) -> Var {
    let scores = tape.matmul_t(w, h);
    let scores = tape.add_broadcast(scores, b);
    let p = tape.softmax_rows(scores);
    tape.matmul(p, h)
}

/// Array-level self-attention summary of the rows of `h`.
pub fn self_attention_summary(h: &Mat, w: &Array1<f64>, b: f64) -> Result<Array1<f64>> {
    if h.nrows() == 0 {
        return Err(Error::Contract("self-attention over an empty sequence".into()));
    }
    let mut tape = Tape::detached();
    let hv = tape.constant(h.clone());
    let wv = tape.constant(w.clone().insert_axis(Axis(0)));
    let bv = tape.constant(Mat::from_elem((1, 1), b));
    let c = self_attention(&mut tape, hv, wv, bv);
    Ok(tape.value(c).row(0).to_owned())
}

#[derive(Debug, Clone)]
struct LocalBranch {
    lstm: BiLstm,
    attn: SelfAttention,
    beta: ParamId,
}

#[derive(Debug, Clone)]
pub struct GleEncoder {
    config: GleConfig,
    prefix: String,
    global: BiLstm,
    global_attn: SelfAttention,
    local: BTreeMap<String, LocalBranch>,
}

impl GleEncoder {
    /// Registers the encoder's parameters in `store` under `prefix`.
    pub fn new(store: &mut ParamStore, prefix: &str, config: GleConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (d_in, h, d_h) = (config.input_dim, config.hidden_per_direction, config.output_dim());
        let global = BiLstm::new(store, &format!("{prefix}.global"), d_in, h, rng);
        let global_attn = SelfAttention::new(store, &format!("{prefix}.global.attn"), d_h, rng);
        let mut local = BTreeMap::new();
        if config.use_local {
            for slot in &config.slot_names {
                let p = format!("{prefix}.local.{slot}");
                let branch = LocalBranch {
                    lstm: BiLstm::new(store, &p, d_in, h, rng),
                    attn: SelfAttention::new(store, &format!("{p}.attn"), d_h, rng),
                    beta: store.add_zeros(format!("{p}.beta"), 1, 1),
                };
                local.insert(slot.clone(), branch);
            }
        }
        Ok(GleEncoder {
            config,
            prefix: prefix.to_string(),
            global,
            global_attn,
            local,
        })
    }

    pub fn config(&self) -> &GleConfig {
        &self.config
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    /// Whether encodings differ per slot.
    pub fn is_slot_specific(&self) -> bool {
        self.config.use_local
    }

    /// Records the encoding of `x` (`n × d_in`, `n ≥ 1`) on the tape and
    /// returns `(H, c)` with `c` as a `1 × d_h` row.
    ///
    /// Panics if `use_local` is set and `slot` has no local branch.
    pub fn encode_on(&self, tape: &mut Tape, x: Var, slot: &str, mut dropout: Option<&mut Dropout>) -> (Var, Var) {
        let x = maybe_drop(&mut dropout, tape, x);
        let hg = self.global.run(tape, x);
        let hg = maybe_drop(&mut dropout, tape, hg);
        if !self.config.use_local {
            let c = self.global_attn.run(tape, hg);
            return (hg, c);
        }
        let branch = self
            .local
            .get(slot)
            .unwrap_or_else(|| panic!("encoder {} has no local branch for slot {slot}", self.prefix));
        let hl = branch.lstm.run(tape, x);
        let hl = maybe_drop(&mut dropout, tape, hl);
        let logit = tape.param(branch.beta);
        let beta = tape.sigmoid(logit);
        let rest = tape.one_minus(beta);
        let h = mix(tape, hl, hg, beta, rest);
        let cl = branch.attn.run(tape, h);
        let cg = self.global_attn.run(tape, h);
        let c = mix(tape, cl, cg, beta, rest);
        (h, c)
    }

    /// Deterministic (dropout off) encoding of an embedded sequence.
    pub fn encode(&self, store: &ParamStore, x: &Mat, slot: &str) -> Result<EncodedSequence> {
        if x.nrows() == 0 {
            return Err(Error::Contract(
                "encoder input has no rows; pass the sentinel row".into(),
            ));
        }
        if x.ncols() != self.config.input_dim {
            return Err(Error::Contract(format!(
                "encoder input width {} != {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        if self.config.use_local && !self.local.contains_key(slot) {
            return Err(Error::Contract(format!("no local encoder for slot `{slot}`")));
        }
        let mut tape = Tape::new(store);
        let xv = tape.constant(x.clone());
        let (h, c) = self.encode_on(&mut tape, xv, slot, None);
        Ok(EncodedSequence {
            h: tape.value(h).clone(),
            c: tape.value(c).row(0).to_owned(),
        })
    }

    /// Current value of the mixing gate for `slot` (0 without local branches).
    pub fn beta(&self, store: &ParamStore, slot: &str) -> f64 {
        self.local
            .get(slot)
            .map_or(0.0, |b| crate::tape::sigmoid(store.value(b.beta)[[0, 0]]))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        let lstm_ids = |l: &BiLstm, ids: &mut Vec<ParamId>| {
            for p in [&l.fwd, &l.bwd] {
                ids.extend([p.w_ih, p.w_hh, p.bias]);
            }
        };
        lstm_ids(&self.global, &mut ids);
        ids.extend([self.global_attn.w, self.global_attn.b]);
        for branch in self.local.values() {
            lstm_ids(&branch.lstm, &mut ids);
            ids.extend([branch.attn.w, branch.attn.b, branch.beta]);
        }
        ids
    }

    pub fn num_parameters(&self, store: &ParamStore) -> usize {
        self.param_ids().iter().map(|id| store.value(*id).len()).sum()
    }
}

fn mix(tape: &mut Tape, a: Var, b: Var, weight: Var, rest: Var) -> Var {
    let a = tape.mul_scalar(a, weight);
    let b = tape.mul_scalar(b, rest);
    tape.add(a, b)
}
