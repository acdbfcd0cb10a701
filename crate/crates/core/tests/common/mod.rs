//! Straight-line reference implementations of the scoring functions, written
//! with plain loops over `Vec<f64>` and no code shared with the library.

#![allow(dead_code)]

pub mod gradcheck;
pub mod lookup;
pub mod tally;

use ctxdst::encoders::EncodedSequence;
use ctxdst::params::Mat;
use ctxdst::scorers::{
    attend as lib_attend, combine_scores, gate_alpha, score_acts, score_candidate, score_fusion, score_referential,
    CandidateContext, Linear, ScorerWeights,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub const TOL: f64 = 1e-6;

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < TOL
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn softmax(a: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &x in a {
        if x > m {
            m = x;
        }
    }
    let mut e = Vec::new();
    let mut z = 0.0;
    for &x in a {
        let v = (x - m).exp();
        e.push(v);
        z += v;
    }
    for v in e.iter_mut() {
        *v /= z;
    }
    e
}

/// Attention weights of `c` over the rows of `h`.
pub fn weights(h: &Rows, c: &[f64]) -> Vec<f64> {
    let mut a = Vec::new();
    for row in h {
        a.push(dot(row, c));
    }
    softmax(&a)
}

pub fn attend(h: &Rows, c: &[f64]) -> Vec<f64> {
    let p = weights(h, c);
    let mut out = vec![0.0; h[0].len()];
    for (i, row) in h.iter().enumerate() {
        for j in 0..row.len() {
            out[j] += p[i] * row[j];
        }
    }
    out
}

/// `x W + b` with `W` given as `in` rows of `out` columns.
pub fn linear(x: &[f64], w: &Rows, b: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    for (i, xi) in x.iter().enumerate() {
        for k in 0..out.len() {
            out[k] += xi * w[i][k];
        }
    }
    out
}

pub fn referential(h_pu: &Rows, h_pv: &Rows, c_v: &[f64], wu: &Rows, bu: f64, wv: &Rows, bv: f64) -> (f64, f64) {
    let yu = linear(&attend(h_pu, c_v), wu, &[bu])[0];
    let yv = linear(&attend(h_pv, c_v), wv, &[bv])[0];
    (yu, yv)
}

pub fn alpha(c_s: &[f64], c_u: &[f64], w_fc: &Rows, b_fc: &[f64], w_g: &Rows, b_g: f64) -> f64 {
    let mut x = c_s.to_vec();
    x.extend_from_slice(c_u);
    let f = linear(&x, w_fc, b_fc);
    let mut t = Vec::new();
    for v in f {
        t.push(v.tanh());
    }
    sigmoid(linear(&t, w_g, &[b_g])[0])
}

pub fn fusion(h_s: &Rows, h_u: &Rows, c_v: &[f64], a: f64, w: &Rows, b: f64) -> f64 {
    let ls = attend(h_s, c_v);
    let lu = attend(h_u, c_v);
    let mut l = Vec::new();
    for j in 0..ls.len() {
        l.push(a * ls[j] + (1.0 - a) * lu[j]);
    }
    linear(&l, w, &[b])[0]
}

pub fn acts(c_a: &Rows, c_u: &[f64], c_v: &[f64]) -> f64 {
    dot(&attend(c_a, c_u), c_v)
}

pub fn combine(y: &[f64], w: &[f64], b: f64) -> f64 {
    sigmoid(dot(y, w) + b)
}

pub fn rows(m: &Mat) -> Rows {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn mat(r: &Rows) -> Mat {
    Mat::from_shape_fn((r.len(), r[0].len()), |(i, j)| r[i][j])
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/woz")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Rows {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_linear(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Linear {
    Linear {
        w: mat(&random_rows(rng, inputs, outputs)),
        b: mat(&random_rows(rng, 1, outputs)),
    }
}

pub fn random_sequence(rng: &mut ChaCha8Rng, d: usize) -> EncodedSequence {
    let n = rng.random_range(1..=4);
    EncodedSequence {
        h: mat(&random_rows(rng, n, d)),
        c: random_vec(rng, d).into(),
    }
}

pub fn random_context(rng: &mut ChaCha8Rng, d: usize) -> CandidateContext {
    let n_acts = rng.random_range(0..=3);
    CandidateContext {
        antecedent: random_sequence(rng, d),
        previous_value: random_sequence(rng, d),
        user: random_sequence(rng, d),
        system: random_sequence(rng, d),
        acts: (0..n_acts).map(|_| random_vec(rng, d).into()).collect(),
        value: random_sequence(rng, d),
    }
}

pub fn random_weights(rng: &mut ChaCha8Rng, d: usize, fc: usize) -> ScorerWeights {
    ScorerWeights {
        referential: Some((random_linear(rng, d, 1), random_linear(rng, d, 1))),
        fusion: Some((random_linear(rng, 2 * d, fc), random_linear(rng, fc, 1))),
        utterance: random_linear(rng, d, 1),
        combine: random_linear(rng, 4, 1),
    }
}

fn col(l: &Linear) -> (Rows, f64) {
    (rows(&l.w), l.b[[0, 0]])
}

/// Full candidate probability composed from the straight-line pieces:
/// (y_p_u, y_p_v, y_f, y_a, alpha, probability).
pub fn candidate(ctx: &CandidateContext, w: &ScorerWeights) -> [f64; 6] {
    let c_v = ctx.value.c.to_vec();
    let (ru, rv) = w.referential.as_ref().unwrap();
    let (wu, bu) = col(ru);
    let (wv, bv) = col(rv);
    let (yu, yv) = referential(
        &rows(&ctx.antecedent.h),
        &rows(&ctx.previous_value.h),
        &c_v,
        &wu,
        bu,
        &wv,
        bv,
    );
    let (fc, gate) = w.fusion.as_ref().unwrap();
    let (wg, bg) = col(gate);
    let a = alpha(
        &ctx.system.c.to_vec(),
        &ctx.user.c.to_vec(),
        &rows(&fc.w),
        &fc.b.row(0).to_vec(),
        &wg,
        bg,
    );
    let (wo, bo) = col(&w.utterance);
    let yf = fusion(&rows(&ctx.system.h), &rows(&ctx.user.h), &c_v, a, &wo, bo);
    let c_a: Rows = if ctx.acts.is_empty() {
        vec![vec![0.0; c_v.len()]]
    } else {
        ctx.acts.iter().map(|x| x.to_vec()).collect()
    };
    let ya = acts(&c_a, &ctx.user.c.to_vec(), &c_v);
    let cw: Vec<f64> = w.combine.w.column(0).to_vec();
    let p = combine(&[yu, yv, yf, ya], &cw, w.combine.b[[0, 0]]);
    [yu, yv, yf, ya, a, p]
}

/// Library attention against the oracle on `cases` random inputs.
pub fn check_attention(seed: u64, cases: usize) {
    let mut r = rng(seed);
    for _ in 0..cases {
        let (n, d) = (r_range(&mut r, 1, 6), r_range(&mut r, 1, 8));
        let h = random_rows(&mut r, n, d);
        let c = random_vec(&mut r, d);
        let got = lib_attend(&mat(&h), &c.clone().into()).unwrap();
        for (g, e) in got.iter().zip(attend(&h, &c)) {
            assert!(close(*g, e));
        }
    }
}

pub fn r_range(r: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    r.random_range(lo..=hi)
}

pub fn check_components(seed: u64, cases: usize) {
    let mut r = rng(seed);
    for _ in 0..cases {
        let d = r_range(&mut r, 1, 6);
        let m = r_range(&mut r, 1, 4);
        let (h1, h2) = (random_rows(&mut r, 2, d), random_rows(&mut r, m, d));
        let c_v = random_vec(&mut r, d);
        let (u, v) = (random_linear(&mut r, d, 1), random_linear(&mut r, d, 1));
        let (yu, yv) = score_referential(&mat(&h1), &mat(&h2), &c_v.clone().into(), &u, &v).unwrap();
        let (eu, ev) = referential(&h1, &h2, &c_v, &rows(&u.w), u.b[[0, 0]], &rows(&v.w), v.b[[0, 0]]);
        assert!(close(yu, eu) && close(yv, ev));

        let fc_width = r_range(&mut r, 1, 5);
        let (fc, gate) = (
            random_linear(&mut r, 2 * d, fc_width),
            random_linear(&mut r, fc_width, 1),
        );
        let (c_s, c_u) = (random_vec(&mut r, d), random_vec(&mut r, d));
        let a = gate_alpha(&c_s.clone().into(), &c_u.clone().into(), &fc, &gate);
        let ea = alpha(
            &c_s,
            &c_u,
            &rows(&fc.w),
            &fc.b.row(0).to_vec(),
            &rows(&gate.w),
            gate.b[[0, 0]],
        );
        assert!(close(a, ea));

        let out = random_linear(&mut r, d, 1);
        let y = score_fusion(&mat(&h1), &mat(&h2), &c_v.clone().into(), 0.3, &out).unwrap();
        assert!(close(y, fusion(&h1, &h2, &c_v, 0.3, &rows(&out.w), out.b[[0, 0]])));

        let n_acts = r_range(&mut r, 1, 4);
        let c_a = random_rows(&mut r, n_acts, d);
        let ya = score_acts(&mat(&c_a), &c_u.clone().into(), &c_v.clone().into()).unwrap();
        assert!(close(ya, acts(&c_a, &c_u, &c_v)));

        let ys = random_vec(&mut r, 4);
        let w = random_vec(&mut r, 4);
        assert!(close(combine_scores(&ys, &w, 0.25).unwrap(), combine(&ys, &w, 0.25)));
    }
}

pub fn check_composed(seed: u64, cases: usize) {
    let mut r = rng(seed);
    for _ in 0..cases {
        let d = r_range(&mut r, 1, 6);
        let ctx = random_context(&mut r, d);
        let w = random_weights(&mut r, d, d);
        let got = score_candidate(&ctx, &w).unwrap();
        let want = candidate(&ctx, &w);
        let got = [got.y_p_u, got.y_p_v, got.y_f, got.y_a, got.alpha, got.probability];
        for (g, e) in got.iter().zip(want) {
            assert!(close(*g, e), "{got:?} vs {want:?}");
        }
    }
}
