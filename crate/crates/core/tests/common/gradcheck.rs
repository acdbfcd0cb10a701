//! Finite-difference checks of the encoder alone and of every learnable
//! parameter of the full tracker.

use std::collections::{BTreeMap, BTreeSet};

use ctxdst::corpus::{Act, Dialogue, EmbeddingTable, Ontology, Turn};
use ctxdst::encoders::{GleConfig, GleEncoder, Variant};
use ctxdst::model::{dialogue_inputs, ModelConfig, Tracker};
use ctxdst::params::{Gradients, Mat, ParamStore};
use ctxdst::state::gold_indices;
use ctxdst::tape::{Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn encoder_config(use_local: bool) -> GleConfig {
    GleConfig {
        input_dim: 8,
        hidden_per_direction: 4,
        use_local,
        dropout_rate: 0.0,
        slot_names: vec!["food".into(), "area".into()],
    }
}

pub fn build_encoder(use_local: bool, seed: u64) -> (ParamStore, GleEncoder) {
    let mut store = ParamStore::default();
    let enc = GleEncoder::new(
        &mut store,
        "enc",
        encoder_config(use_local),
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
    .unwrap();
    (store, enc)
}

pub fn encoder_input() -> Mat {
    Mat::from_shape_fn((3, 8), |(i, j)| (0.5 * (8 * i + j) as f64).cos())
}

/// `Σ_j r_j c_j` for a fixed direction `r`.
fn encoder_loss(store: &ParamStore, enc: &GleEncoder, r: &[f64]) -> f64 {
    let c = enc.encode(store, &encoder_input(), "food").unwrap().c;
    c.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Central differences (step 1e-5) over every encoder parameter for the loss
/// `c · r`; returns the number of entries checked.
pub fn check_encoder(use_local: bool) -> usize {
    let (mut store, enc) = build_encoder(use_local, 5);
    if use_local {
        // move β away from 1/2 so both branches carry distinct weight
        let beta = store.id("enc.local.food.beta").unwrap();
        store.value_mut(beta)[[0, 0]] = 0.4;
    }
    let r = [0.9, -0.4, 0.3, 1.1, -0.7, 0.2, 0.5, -1.2];
    let grads = {
        let mut t = Tape::new(&store);
        let x = t.constant(encoder_input());
        let (_, c) = enc.encode_on(&mut t, x, "food", None);
        let rv = t.constant(Mat::from_shape_vec((1, 8), r.to_vec()).unwrap());
        let l = t.matmul_t(c, rv);
        t.backward(l)
    };
    let eps = 1e-5;
    let mut checked = 0;
    for id in enc.param_ids() {
        let name = store.get(id).name.clone();
        let analytic = grads
            .get(id)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(store.value(id).dim()));
        let cols = analytic.ncols();
        for k in 0..analytic.len() {
            let at = [k / cols, k % cols];
            let orig = store.value(id)[at];
            store.value_mut(id)[at] = orig + eps;
            let up = encoder_loss(&store, &enc, &r);
            store.value_mut(id)[at] = orig - eps;
            let down = encoder_loss(&store, &enc, &r);
            store.value_mut(id)[at] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[at];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "{name}{at:?}: analytic {a} numeric {numeric}");
            checked += 1;
        }
    }
    assert_eq!(checked, enc.num_parameters(&store));
    checked
}

pub fn ontology() -> Ontology {
    Ontology {
        informable: BTreeMap::from([
            (
                "food".to_string(),
                vec!["indian".to_string(), "chinese".to_string(), "thai".to_string()],
            ),
            ("area".to_string(), vec!["north".to_string(), "south".to_string()]),
        ]),
        requestable: vec!["phone".to_string(), "address".to_string()],
    }
}

fn sv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(s, v)| (s.to_string(), v.to_string())).collect()
}

fn dialogue() -> Dialogue {
    let turn = |i: usize, sys: &str, user: &str, acts: Vec<Act>, label: &[(&str, &str)]| Turn {
        turn_index: i,
        user_transcript: user.into(),
        system_transcript: sys.into(),
        system_acts: acts,
        turn_label: sv(label),
        belief_state: BTreeMap::new(),
    };
    Dialogue {
        dialogue_id: "grad".into(),
        turns: vec![
            turn(
                0,
                "",
                "indian food north",
                vec![],
                &[("food", "indian"), ("area", "north")],
            ),
            turn(
                1,
                "which area ?",
                "chinese please",
                vec![Act::request("area")],
                &[("food", "chinese")],
            ),
            turn(
                2,
                "golden wok is chinese",
                "indian one phone ?",
                vec![Act::inform("food", "chinese"), Act::request("food")],
                &[("food", "indian"), ("request", "phone")],
            ),
        ],
    }
}

fn table() -> EmbeddingTable {
    let vocab: BTreeSet<String> = [
        "indian", "food", "north", "which", "area", "?", "chinese", "please", "golden", "wok", "is", "one", "phone",
        "thai", "south", "address", "request", "inform", "=",
    ]
    .map(String::from)
    .into();
    EmbeddingTable::hashed(3, 2, 7, &vocab)
}

/// Summed candidate loss over every slot of turn `turn`.
fn model_loss(tracker: &Tracker, turn: usize) -> (f64, Gradients) {
    let d = dialogue();
    let table = table();
    let inputs = dialogue_inputs(&d, &table);
    let indices = gold_indices(&d);
    let values = tracker.value_inputs(&table);
    let mut pass = tracker.pass(None);
    let vv = tracker.encode_values(&mut pass, &values);
    let mut losses: Vec<Var> = Vec::new();
    for s in 0..tracker.slots().len() {
        let targets: Vec<f64> = tracker
            .candidates(s)
            .iter()
            .map(|v| {
                let hit = d.turns[turn]
                    .turn_label
                    .iter()
                    .any(|(ls, lv)| *ls == tracker.slots()[s] && lv == v);
                if hit {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let scores = tracker.score_slot(&mut pass, 0, &d, &inputs, turn, &indices[turn], &vv, s, None);
        losses.push(pass.tape.bce_logits(scores.logits, &targets));
    }
    let total = pass.tape.concat_cols(&losses);
    let total = pass.tape.sum(total);
    let value = pass.tape.scalar(total);
    (value, pass.tape.backward(total))
}

/// Five-point central differences with step 1e-3 (truncation error of
/// order h^4). Relative error must stay below 1e-4, except that an
/// absolute difference under 1e-9 always passes: for gradients near zero
/// (the attention bias is exactly zero because softmax is shift-invariant)
/// the relative error only measures floating-point round-off.
pub fn check_model(mut tracker: Tracker, turn: usize) -> usize {
    let (_, grads) = model_loss(&tracker, turn);
    let h = 1e-3;
    let ids: Vec<_> = tracker.store().ids().collect();
    let mut checked = 0;
    for id in ids {
        let n = tracker.store().value(id).len();
        for k in 0..n {
            let orig = tracker.store().value(id).as_slice().unwrap()[k];
            let mut at = |x: f64| {
                tracker.store_mut().value_mut(id).as_slice_mut().unwrap()[k] = x;
                model_loss(&tracker, turn).0
            };
            let numeric =
                (at(orig - 2.0 * h) - 8.0 * at(orig - h) + 8.0 * at(orig + h) - at(orig + 2.0 * h)) / (12.0 * h);
            tracker.store_mut().value_mut(id).as_slice_mut().unwrap()[k] = orig;
            let cols = tracker.store().value(id).ncols();
            let analytic = grads.get(id).map_or(0.0, |g| g[[k / cols, k % cols]]);
            let scale = analytic.abs().max(numeric.abs());
            let diff = (analytic - numeric).abs();
            let ok = diff < 1e-9 || diff / scale < 1e-4;
            assert!(
                ok,
                "{}[{k}]: analytic {analytic:e} numeric {numeric:e}",
                tracker.store().get(id).name
            );
            checked += 1;
        }
    }
    checked
}

pub fn model_config(variant: Variant, rc: bool, fs: bool) -> ModelConfig {
    ModelConfig {
        input_dim: 5,
        hidden_per_direction: 4,
        variant,
        referential_context: rc,
        fusion_scorer: fs,
        per_slot_combination: false,
        dropout_rate: 0.0,
    }
}
