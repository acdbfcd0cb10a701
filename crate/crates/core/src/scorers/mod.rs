//! Candidate scoring: referential context, gated fusion of the system and
//! user utterances, system-act evidence and the final combination.
//!
//! The functions here work on plain arrays. [`graph`] holds the same
//! computations recorded on a tape, which is what training uses.

pub mod graph;

use std::collections::BTreeMap;

use ndarray::{Array1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::EncodedSequence;
use crate::error::{Error, Result};
use crate::params::{Mat, ParamId, ParamStore};
use crate::tape::{sigmoid, Tape, Var};
use graph::{Affine, Evidence, ScorerVars};

/// `y = x W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Mat,
    pub b: Mat,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            w: Mat::zeros((inputs, outputs)),
            b: Mat::zeros((1, outputs)),
        }
    }

    /// Scalar-output map from a weight vector and bias.
    pub fn scalar(w: &[f64], b: f64) -> Self {
        Linear {
            w: Mat::from_shape_vec((w.len(), 1), w.to_vec()).expect("column"),
            b: Mat::from_elem((1, 1), b),
        }
    }

    fn on(&self, t: &mut Tape) -> Affine {
        Affine {
            w: t.constant(self.w.clone()),
            b: t.constant(self.b.clone()),
        }
    }
}

fn row(t: &mut Tape, v: &Array1<f64>) -> Var {
    t.constant(v.clone().insert_axis(Axis(0)))
}

fn check_rows(what: &str, h: &Mat) -> Result<()> {
    if h.nrows() == 0 {
        return Err(Error::Contract(format!("{what} has no rows")));
    }
    Ok(())
}

/// Attention of `c` over the rows of `h`.
pub fn attend(h: &Mat, c: &Array1<f64>) -> Result<Array1<f64>> {
    check_rows("attention memory", h)?;
    let mut t = Tape::detached();
    let (hv, cv) = (t.constant(h.clone()), row(&mut t, c));
    let q = graph::attend(&mut t, hv, cv);
    Ok(t.value(q).row(0).to_owned())
}

/// `(y_p^u, y_p^v)` for one candidate summary.
pub fn score_referential(
    h_pu: &Mat,
    h_pv: &Mat,
    c_v: &Array1<f64>,
    user: &Linear,
    value: &Linear,
) -> Result<(f64, f64)> {
    check_rows("antecedent", h_pu)?;
    check_rows("previous value", h_pv)?;
    let mut t = Tape::detached();
    let (a, b, c) = (t.constant(h_pu.clone()), t.constant(h_pv.clone()), row(&mut t, c_v));
    let (u, v) = (user.on(&mut t), value.on(&mut t));
    let (yu, yv) = graph::score_referential(&mut t, a, b, c, &u, &v);
    Ok((t.scalar(yu), t.scalar(yv)))
}

pub fn gate_alpha(c_s: &Array1<f64>, c_u: &Array1<f64>, fc: &Linear, gate: &Linear) -> f64 {
    let mut t = Tape::detached();
    let (s, u) = (row(&mut t, c_s), row(&mut t, c_u));
    let (fc, gate) = (fc.on(&mut t), gate.on(&mut t));
    let a = graph::gate_alpha(&mut t, s, u, &fc, &gate);
    t.scalar(a)
}

pub fn score_fusion(h_s: &Mat, h_u: &Mat, c_v: &Array1<f64>, alpha: f64, out: &Linear) -> Result<f64> {
    check_rows("system utterance", h_s)?;
    check_rows("user utterance", h_u)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("gate {alpha} outside [0, 1]")));
    }
    let mut t = Tape::detached();
    let (s, u, c) = (t.constant(h_s.clone()), t.constant(h_u.clone()), row(&mut t, c_v));
    let a = t.constant(Mat::from_elem((1, 1), alpha));
    let out = out.on(&mut t);
    let y = graph::score_fusion(&mut t, s, u, c, a, &out);
    Ok(t.scalar(y))
}

/// `y^a`; `c_a` stacks one summary per system act.
pub fn score_acts(c_a: &Mat, c_u: &Array1<f64>, c_v: &Array1<f64>) -> Result<f64> {
    check_rows("system acts", c_a)?;
    let mut t = Tape::detached();
    let (a, u, v) = (t.constant(c_a.clone()), row(&mut t, c_u), row(&mut t, c_v));
    let y = graph::score_acts(&mut t, a, u, v);
    Ok(t.scalar(y))
}

/// `σ(w · scores + b)`.
pub fn combine_scores(scores: &[f64], w: &[f64], b: f64) -> Result<f64> {
    if scores.len() != w.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} weights",
            scores.len(),
            w.len()
        )));
    }
    let z: f64 = scores.iter().zip(w).map(|(s, w)| s * w).sum::<f64>() + b;
    Ok(sigmoid(z))
}

/// Plain-array copy of the scorer weights for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerWeights {
    pub referential: Option<(Linear, Linear)>,
    pub fusion: Option<(Linear, Linear)>,
    pub utterance: Linear,
    pub combine: Linear,
}

impl ScorerWeights {
    /// All-zero weights for the full model at width `d_h`.
    pub fn zeros(d_h: usize, fc_width: usize) -> Self {
        ScorerWeights {
            referential: Some((Linear::zeros(d_h, 1), Linear::zeros(d_h, 1))),
            fusion: Some((Linear::zeros(2 * d_h, fc_width), Linear::zeros(fc_width, 1))),
            utterance: Linear::zeros(d_h, 1),
            combine: Linear::zeros(4, 1),
        }
    }

    fn on(&self, t: &mut Tape) -> ScorerVars {
        ScorerVars {
            referential: self.referential.as_ref().map(|(u, v)| (u.on(t), v.on(t))),
            fusion: self.fusion.as_ref().map(|(f, g)| (f.on(t), g.on(t))),
            utterance: self.utterance.on(t),
            combine: self.combine.on(t),
        }
    }
}

/// Encoded evidence for one (slot, value) candidate.
#[derive(Debug, Clone)]
pub struct CandidateContext {
    pub antecedent: EncodedSequence,
    pub previous_value: EncodedSequence,
    pub user: EncodedSequence,
    pub system: EncodedSequence,
    /// One summary per system act; empty means no acts.
    pub acts: Vec<Array1<f64>>,
    pub value: EncodedSequence,
}

/// Evidence scores for one candidate. Scores of disabled branches are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBundle {
    pub y_p_u: f64,
    pub y_p_v: f64,
    pub y_f: f64,
    pub y_a: f64,
    pub alpha: f64,
    pub probability: f64,
}

pub fn score_candidate(ctx: &CandidateContext, weights: &ScorerWeights) -> Result<ScoreBundle> {
    let d_h = ctx.value.c.len();
    let mut t = Tape::detached();
    let seq = |t: &mut Tape, what: &str, e: &EncodedSequence| -> Result<(Var, Var)> {
        check_rows(what, &e.h)?;
        if e.h.ncols() != d_h || e.c.len() != d_h {
            return Err(Error::Contract(format!("{what} width differs from {d_h}")));
        }
        Ok((t.constant(e.h.clone()), row(t, &e.c)))
    };
    let (antecedent_h, _) = seq(&mut t, "antecedent", &ctx.antecedent)?;
    let (previous_h, _) = seq(&mut t, "previous value", &ctx.previous_value)?;
    let (user_h, user_c) = seq(&mut t, "user utterance", &ctx.user)?;
    let (system_h, system_c) = seq(&mut t, "system utterance", &ctx.system)?;
    let (_, values_c) = seq(&mut t, "candidate value", &ctx.value)?;
    let acts = if ctx.acts.is_empty() {
        Mat::zeros((1, d_h))
    } else {
        let views: Vec<_> = ctx.acts.iter().map(|a| a.view().insert_axis(Axis(0))).collect();
        ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Contract(format!("act summaries: {e}")))?
    };
    let acts_c = t.constant(acts);
    let ev = Evidence {
        antecedent_h,
        previous_h,
        user_h,
        user_c,
        system_h,
        system_c,
        acts_c,
        values_c,
    };
    let vars = weights.on(&mut t);
    let s = graph::score_slot(&mut t, &ev, &vars);
    let get = |t: &Tape, v: Option<Var>| v.map_or(0.0, |v| t.scalar(v));
    Ok(ScoreBundle {
        y_p_u: get(&t, s.y_pu),
        y_p_v: get(&t, s.y_pv),
        y_f: t.scalar(s.y_f),
        y_a: t.scalar(s.y_a),
        alpha: get(&t, s.alpha),
        probability: sigmoid(t.scalar(s.logits)),
    })
}

#[derive(Debug, Clone)]
pub struct LinearParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearParams {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        LinearParams {
            w: store.add_uniform(format!("{name}.w"), inputs, outputs, rng),
            b: store.add_zeros(format!("{name}.b"), 1, outputs),
        }
    }

    pub fn on(&self, t: &mut Tape) -> Affine {
        Affine {
            w: t.param(self.w),
            b: t.param(self.b),
        }
    }

    fn weights(&self, store: &ParamStore) -> Linear {
        Linear {
            w: store.value(self.w).clone(),
            b: store.value(self.b).clone(),
        }
    }
}

/// Parameter ids of the scoring layers.
#[derive(Debug, Clone)]
pub struct ScorerParams {
    pub referential: Option<(LinearParams, LinearParams)>,
    pub fusion: Option<(LinearParams, LinearParams)>,
    pub utterance: LinearParams,
    /// Keyed by slot when combination weights are per slot, otherwise a
    /// single entry under the empty key.
    pub combine: BTreeMap<String, LinearParams>,
}

#[derive(Debug, Clone)]
pub struct ScorerLayout<'a> {
    pub d_h: usize,
    pub fc_width: usize,
    pub referential_context: bool,
    pub fusion_scorer: bool,
    /// `Some(slots)` for per-slot combination weights.
    pub per_slot: Option<&'a [String]>,
}

impl ScorerParams {
    pub fn new(store: &mut ParamStore, layout: &ScorerLayout, rng: &mut impl Rng) -> Self {
        let d_h = layout.d_h;
        let referential = layout.referential_context.then(|| {
            (
                LinearParams::new(store, "score.antecedent", d_h, 1, rng),
                LinearParams::new(store, "score.previous_value", d_h, 1, rng),
            )
        });
        let fusion = layout.fusion_scorer.then(|| {
            (
                LinearParams::new(store, "score.fusion_fc", 2 * d_h, layout.fc_width, rng),
                LinearParams::new(store, "score.fusion_gate", layout.fc_width, 1, rng),
            )
        });
        let utterance = LinearParams::new(store, "score.utterance", d_h, 1, rng);
        let n_scores = if layout.referential_context { 4 } else { 2 };
        let combine = match layout.per_slot {
            Some(slots) => slots
                .iter()
                .map(|s| {
                    (
                        s.clone(),
                        LinearParams::new(store, &format!("score.combine.{s}"), n_scores, 1, rng),
                    )
                })
                .collect(),
            None => BTreeMap::from([(
                String::new(),
                LinearParams::new(store, "score.combine", n_scores, 1, rng),
            )]),
        };
        ScorerParams {
            referential,
            fusion,
            utterance,
            combine,
        }
    }

    fn combine_for(&self, slot: &str) -> &LinearParams {
        self.combine
            .get(slot)
            .or_else(|| self.combine.get(""))
            .unwrap_or_else(|| panic!("no combination weights for slot {slot}"))
    }

    pub fn vars(&self, t: &mut Tape, slot: &str) -> ScorerVars {
        ScorerVars {
            referential: self.referential.as_ref().map(|(u, v)| (u.on(t), v.on(t))),
            fusion: self.fusion.as_ref().map(|(f, g)| (f.on(t), g.on(t))),
            utterance: self.utterance.on(t),
            combine: self.combine_for(slot).on(t),
        }
    }

    pub fn weights(&self, store: &ParamStore, slot: &str) -> ScorerWeights {
        ScorerWeights {
            referential: self
                .referential
                .as_ref()
                .map(|(u, v)| (u.weights(store), v.weights(store))),
            fusion: self.fusion.as_ref().map(|(f, g)| (f.weights(store), g.weights(store))),
            utterance: self.utterance.weights(store),
            combine: self.combine_for(slot).weights(store),
        }
    }
}
