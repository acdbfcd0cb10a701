use std::collections::BTreeMap;

use ctxdst::corpus::{load_woz_dataset, tokenize, Dialogue, Ontology, SlotValue, Turn};
use ctxdst::state::{gold_indices, lookup_antecedent, EMPTY_SENTINEL, NONE_SENTINEL};
use proptest::prelude::*;

pub const SLOTS: [&str; 3] = ["area", "food", "price"];
pub const VALUES: [&str; 5] = ["v0", "v1", "v2", "v3", "v4"];

pub fn ontology() -> Ontology {
    Ontology {
        informable: SLOTS
            .iter()
            .map(|s| (s.to_string(), VALUES.iter().map(|v| v.to_string()).collect()))
            .collect(),
        requestable: vec!["phone".into()],
    }
}

pub fn dialogue(labels: Vec<Vec<SlotValue>>) -> Dialogue {
    Dialogue {
        dialogue_id: "p".into(),
        turns: labels
            .into_iter()
            .enumerate()
            .map(|(i, turn_label)| Turn {
                turn_index: i,
                user_transcript: if i % 4 == 3 {
                    String::new()
                } else {
                    format!("user says {i}")
                },
                system_transcript: String::new(),
                system_acts: vec![],
                turn_label,
                belief_state: BTreeMap::new(),
            })
            .collect(),
    }
}

pub fn labels() -> impl Strategy<Value = Vec<Vec<SlotValue>>> {
    let pair = prop_oneof![
        (0..3usize, 0..5usize).prop_map(|(s, v)| (SLOTS[s].to_string(), VALUES[v].to_string())),
        Just(("request".to_string(), "phone".to_string())),
    ];
    prop::collection::vec(prop::collection::vec(pair, 0..4), 1..=20)
}

/// Goal after folding the first `n` labels, written without the library:
/// later pairs overwrite earlier ones.
pub fn state_before(labels: &[Vec<SlotValue>], n: usize) -> BTreeMap<String, String> {
    let mut s = BTreeMap::new();
    for label in &labels[..n] {
        for (slot, value) in label {
            if slot != "request" {
                s.insert(slot.clone(), value.clone());
            }
        }
    }
    s
}

/// Brute-force lookup: the latest earlier turn whose label leaves `slot`
/// with a different value than it had before that turn.
pub fn oracle(labels: &[Vec<SlotValue>], slot: &str, t: usize) -> Option<(usize, Option<String>)> {
    (0..t).rev().find_map(|k| {
        let before = state_before(labels, k);
        let after = state_before(labels, k + 1);
        let touched = labels[k].iter().any(|(s, _)| s == slot);
        (touched && before.get(slot) != after.get(slot)).then(|| (k, before.get(slot).cloned()))
    })
}

/// Compares `lookup_antecedent` with [`oracle`] for every slot and turn.
pub fn check_lookup(labels: &[Vec<SlotValue>]) -> Result<(), TestCaseError> {
    let d = dialogue(labels.to_vec());
    let indices = gold_indices(&d);
    for (t, index) in indices.iter().enumerate() {
        for slot in SLOTS {
            let ctx = lookup_antecedent(index, slot, &d, t);
            match oracle(labels, slot, t) {
                None => {
                    prop_assert_eq!(ctx.linked_turn, None);
                    prop_assert_eq!(ctx.utterance_tokens, vec![EMPTY_SENTINEL.to_string()]);
                    prop_assert_eq!(ctx.previous_value_tokens, vec![NONE_SENTINEL.to_string()]);
                }
                Some((k, prev)) => {
                    prop_assert!(k < t);
                    prop_assert_eq!(ctx.linked_turn, Some(k));
                    let mut expected = tokenize(&d.turns[k].user_transcript);
                    if expected.is_empty() {
                        expected.push(EMPTY_SENTINEL.to_string());
                    }
                    prop_assert_eq!(&ctx.utterance_tokens, &expected);
                    prop_assert_eq!(&ctx.previous_value, &prev);
                    let prev_tokens = prev.map_or(vec![NONE_SENTINEL.to_string()], |v| tokenize(&v));
                    prop_assert_eq!(&ctx.previous_value_tokens, &prev_tokens);
                }
            }
        }
        let req = lookup_antecedent(index, "request", &d, t);
        prop_assert_eq!(req.linked_turn, None);
    }
    Ok(())
}

/// The fixture's first dialogue: turn 5 refers back to the restaurant offered
/// at turn 2, the turn where the food slot last changed.
pub fn check_implicit_reference() {
    let ds = load_woz_dataset(&super::fixture_dir()).unwrap();
    let d = &ds.train[0];
    let indices = gold_indices(d);
    let ctx = lookup_antecedent(&indices[5], "food", d, 5);
    assert_eq!(ctx.linked_turn, Some(2));
    assert_eq!(ctx.previous_value.as_deref(), Some("dontcare"));
    assert!(ctx.utterance_tokens.contains(&"nirala".to_string()));
    assert!(ctx.utterance_tokens.contains(&"indian".to_string()));
    // the current turn never links to itself
    assert!(indices[5].last_change_turn.values().all(|&k| k < 5));
}
