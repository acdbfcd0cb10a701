use std::collections::{BTreeMap, BTreeSet};

use ctxdst::corpus::{Dialogue, Ontology, SlotValue, Turn};
use ctxdst::evaluation::{
    joint_goal_accuracy, metrics_report, turn_inform_accuracy, turn_request_accuracy, TurnPrediction,
};
use ctxdst::state::DialogueState;
use proptest::prelude::*;

pub const SLOTS: [&str; 2] = ["area", "food"];
pub const VALUES: [&str; 3] = ["a", "b", "c"];
pub const REQUESTS: [&str; 2] = ["phone", "address"];

pub fn ontology() -> Ontology {
    Ontology {
        informable: SLOTS
            .iter()
            .map(|s| (s.to_string(), VALUES.iter().map(|v| v.to_string()).collect()))
            .collect(),
        requestable: REQUESTS.iter().map(|r| r.to_string()).collect(),
    }
}

/// One informable pair per slot at most, then requests.
pub fn label() -> impl Strategy<Value = Vec<SlotValue>> {
    (
        prop::collection::vec(prop::option::of(0..3usize), SLOTS.len()),
        prop::collection::vec(any::<bool>(), REQUESTS.len()),
    )
        .prop_map(|(informs, asks)| {
            let mut out: Vec<SlotValue> = informs
                .iter()
                .zip(SLOTS)
                .filter_map(|(v, s)| v.map(|v| (s.to_string(), VALUES[v].to_string())))
                .collect();
            out.extend(
                asks.iter()
                    .zip(REQUESTS)
                    .filter(|(a, _)| **a)
                    .map(|(_, r)| ("request".to_string(), r.to_string())),
            );
            out
        })
}

pub fn fold(labels: &[Vec<SlotValue>]) -> Vec<BTreeMap<String, String>> {
    let mut state = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            for (s, v) in l {
                if s != "request" {
                    state.insert(s.clone(), v.clone());
                }
            }
            state.clone()
        })
        .collect()
}

pub fn gold_dialogue(id: usize, labels: Vec<Vec<SlotValue>>) -> Dialogue {
    let states = fold(&labels);
    Dialogue {
        dialogue_id: id.to_string(),
        turns: labels
            .into_iter()
            .zip(states)
            .enumerate()
            .map(|(i, (turn_label, belief_state))| Turn {
                turn_index: i,
                user_transcript: format!("turn {i}"),
                system_transcript: String::new(),
                system_acts: vec![],
                turn_label,
                belief_state,
            })
            .collect(),
    }
}

pub fn predictions(labels: &[Vec<SlotValue>]) -> Vec<TurnPrediction> {
    labels
        .iter()
        .zip(fold(labels))
        .enumerate()
        .map(|(i, (l, inform))| TurnPrediction {
            turn_index: i,
            turn_label: l.clone(),
            goal_state: DialogueState { inform },
            requests: l
                .iter()
                .filter(|(s, _)| s == "request")
                .map(|(_, v)| v.clone())
                .collect(),
        })
        .collect()
}

pub type Corpus = Vec<(Vec<Vec<SlotValue>>, Vec<Vec<SlotValue>>)>;

/// Up to 10 dialogues of up to 8 turns: (gold labels, predicted labels).
pub fn corpus() -> impl Strategy<Value = Corpus> {
    prop::collection::vec(
        (1..=8usize).prop_flat_map(|n| (prop::collection::vec(label(), n), prop::collection::vec(label(), n))),
        0..=10,
    )
}

pub fn split(c: &Corpus) -> (Vec<Dialogue>, Vec<Vec<TurnPrediction>>) {
    let gold = c
        .iter()
        .enumerate()
        .map(|(i, (g, _))| gold_dialogue(i, g.clone()))
        .collect();
    let preds = c.iter().map(|(_, p)| predictions(p)).collect();
    (gold, preds)
}

/// Straight recount over (gold turn, predicted turn) pairs.
pub fn recount(gold: &[Dialogue], preds: &[Vec<TurnPrediction>], hit: impl Fn(&Turn, &TurnPrediction) -> bool) -> f64 {
    let mut total = 0.0;
    let mut good = 0.0;
    for (d, p) in gold.iter().zip(preds) {
        for (t, q) in d.turns.iter().zip(p) {
            total += 1.0;
            if hit(t, q) {
                good += 1.0;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        good / total
    }
}

pub fn joint_oracle(gold: &[Dialogue], preds: &[Vec<TurnPrediction>]) -> f64 {
    recount(gold, preds, |t, q| t.belief_state == q.goal_state.inform)
}

pub fn request_oracle(gold: &[Dialogue], preds: &[Vec<TurnPrediction>]) -> f64 {
    recount(gold, preds, |t, q| {
        let g: BTreeSet<&str> = t
            .turn_label
            .iter()
            .filter(|p| p.0 == "request")
            .map(|p| p.1.as_str())
            .collect();
        let p: BTreeSet<&str> = q.requests.iter().map(String::as_str).collect();
        g == p
    })
}

pub fn inform_oracle(gold: &[Dialogue], preds: &[Vec<TurnPrediction>]) -> f64 {
    recount(gold, preds, |t, q| {
        let g: BTreeSet<&SlotValue> = t.turn_label.iter().filter(|p| p.0 != "request").collect();
        let p: BTreeSet<&SlotValue> = q.turn_label.iter().filter(|p| p.0 != "request").collect();
        g == p
    })
}

/// Library metrics against straight recounts, plus range checks.
pub fn check_metrics(c: &Corpus) -> Result<(), TestCaseError> {
    let (gold, preds) = split(c);
    let eps = 1e-12;
    prop_assert!((joint_goal_accuracy(&preds, &gold).unwrap() - joint_oracle(&gold, &preds)).abs() < eps);
    prop_assert!((turn_request_accuracy(&preds, &gold).unwrap() - request_oracle(&gold, &preds)).abs() < eps);
    prop_assert!((turn_inform_accuracy(&preds, &gold).unwrap() - inform_oracle(&gold, &preds)).abs() < eps);
    let report = metrics_report(&ontology(), &preds, &gold).unwrap();
    for x in [
        report.joint_goal_accuracy,
        report.turn_request_accuracy,
        report.turn_inform_accuracy,
    ]
    .into_iter()
    .chain(report.per_slot_breakdown.values().copied())
    {
        prop_assert!((0.0..=1.0).contains(&x));
    }
    Ok(())
}

/// Three turns, the middle one predicted with the wrong area.
pub fn hand_folded_joint_goal() -> f64 {
    let sv = |s: &str, v: &str| (s.to_string(), v.to_string());
    let gold = vec![gold_dialogue(
        0,
        vec![vec![sv("food", "a")], vec![sv("area", "b")], vec![sv("food", "c")]],
    )];
    let mut preds = vec![predictions(&[
        vec![sv("food", "a")],
        vec![sv("area", "b")],
        vec![sv("food", "c")],
    ])];
    preds[0][1].goal_state.inform.insert("area".into(), "c".into());
    joint_goal_accuracy(&preds, &gold).unwrap()
}
