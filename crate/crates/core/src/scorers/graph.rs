//! Scoring operations recorded on a [`Tape`]. Candidate summaries are
//! stacked as the rows of an `m × d_h` matrix so a whole slot is scored in
//! one pass; every score comes out as an `m × 1` column.

use crate::tape::{Tape, Var};

/// Weight (`in × out`) and bias (`1 × out`) nodes of an affine map.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub w: Var,
    pub b: Var,
}

pub fn linear(t: &mut Tape, x: Var, a: &Affine) -> Var {
    let xw = t.matmul(x, a.w);
    t.add_broadcast(xw, a.b)
}

/// `Q(H, c) = Σ_i softmax(H c)_i H_i`, one output row per row of `c`.
pub fn attend(t: &mut Tape, h: Var, c: Var) -> Var {
    let scores = t.matmul_t(c, h);
    let p = t.softmax_rows(scores);
    t.matmul(p, h)
}

pub fn score_referential(t: &mut Tape, h_pu: Var, h_pv: Var, c_v: Var, user: &Affine, value: &Affine) -> (Var, Var) {
    let q_u = attend(t, h_pu, c_v);
    let q_v = attend(t, h_pv, c_v);
    (linear(t, q_u, user), linear(t, q_v, value))
}

/// `σ(W_α tanh(W_fc [c_s; c_u] + b_fc) + b_α)` as a `1 × 1` node.
pub fn gate_alpha(t: &mut Tape, c_s: Var, c_u: Var, fc: &Affine, gate: &Affine) -> Var {
    let joined = t.concat_cols(&[c_s, c_u]);
    let f_c = linear(t, joined, fc);
    let f_c = t.tanh(f_c);
    let z = linear(t, f_c, gate);
    t.sigmoid(z)
}

pub fn score_fusion(t: &mut Tape, h_s: Var, h_u: Var, c_v: Var, alpha: Var, out: &Affine) -> Var {
    let l_s = attend(t, h_s, c_v);
    let l_u = attend(t, h_u, c_v);
    let rest = t.one_minus(alpha);
    let l_s = t.mul_scalar(l_s, alpha);
    let l_u = t.mul_scalar(l_u, rest);
    let l_f = t.add(l_s, l_u);
    linear(t, l_f, out)
}

/// Utterance score without the system branch.
pub fn score_utterance(t: &mut Tape, h_u: Var, c_v: Var, out: &Affine) -> Var {
    let l_u = attend(t, h_u, c_v);
    linear(t, l_u, out)
}

/// `Q(C_a, c_u)ᵀ c_v` for each candidate row of `c_v`.
pub fn score_acts(t: &mut Tape, c_a: Var, c_u: Var, c_v: Var) -> Var {
    let l_a = attend(t, c_a, c_u);
    t.matmul_t(c_v, l_a)
}

/// Logit of the weighted sum of the score columns.
pub fn combine(t: &mut Tape, columns: &[Var], combo: &Affine) -> Var {
    let scores = t.concat_cols(columns);
    linear(t, scores, combo)
}

/// Encoded evidence for one slot at one turn. Absent evidence is passed
/// as a zero row.
#[derive(Debug, Clone, Copy)]
pub struct Evidence {
    pub antecedent_h: Var,
    pub previous_h: Var,
    pub user_h: Var,
    pub user_c: Var,
    pub system_h: Var,
    pub system_c: Var,
    /// Stacked act summaries, `k × d_h`.
    pub acts_c: Var,
    /// Stacked candidate value summaries, `m × d_h`.
    pub values_c: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct ScorerVars {
    pub referential: Option<(Affine, Affine)>,
    /// `(fc, gate)` of the fusion gate.
    pub fusion: Option<(Affine, Affine)>,
    pub utterance: Affine,
    pub combine: Affine,
}

#[derive(Debug, Clone, Copy)]
pub struct SlotScores {
    pub y_pu: Option<Var>,
    pub y_pv: Option<Var>,
    pub y_f: Var,
    pub y_a: Var,
    pub alpha: Option<Var>,
    pub logits: Var,
}

pub fn score_slot(t: &mut Tape, ev: &Evidence, w: &ScorerVars) -> SlotScores {
    let mut columns = Vec::with_capacity(4);
    let (mut y_pu, mut y_pv) = (None, None);
    if let Some((user, value)) = &w.referential {
        let (u, v) = score_referential(t, ev.antecedent_h, ev.previous_h, ev.values_c, user, value);
        columns.extend([u, v]);
        (y_pu, y_pv) = (Some(u), Some(v));
    }
    let (y_f, alpha) = match &w.fusion {
        Some((fc, gate)) => {
            let alpha = gate_alpha(t, ev.system_c, ev.user_c, fc, gate);
            let y_f = score_fusion(t, ev.system_h, ev.user_h, ev.values_c, alpha, &w.utterance);
            (y_f, Some(alpha))
        }
        None => (score_utterance(t, ev.user_h, ev.values_c, &w.utterance), None),
    };
    let y_a = score_acts(t, ev.acts_c, ev.user_c, ev.values_c);
    columns.extend([y_f, y_a]);
    let logits = combine(t, &columns, &w.combine);
    SlotScores {
        y_pu,
        y_pv,
        y_f,
        y_a,
        alpha,
        logits,
    }
}
