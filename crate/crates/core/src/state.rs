//! Accumulated dialogue state and the per-slot change index used to find the
//! antecedent user utterance for a candidate slot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Dialogue, Ontology, SlotValue, REQUEST_SLOT};
use crate::error::{Error, Result};

/// Stand-in token for "no antecedent utterance".
pub const EMPTY_SENTINEL: &str = "<empty>";
/// Stand-in token for "slot had no value before".
pub const NONE_SENTINEL: &str = "<none>";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueState {
    pub inform: BTreeMap<String, String>,
}

/// Informable part of a turn label with duplicate slots collapsed; the last
/// pair in label order wins.
fn effective_label(label: &[SlotValue]) -> BTreeMap<&str, &str> {
    label
        .iter()
        .filter(|(s, _)| s != REQUEST_SLOT)
        .map(|(s, v)| (s.as_str(), v.as_str()))
        .collect()
}

impl DialogueState {
    pub fn get(&self, slot: &str) -> Option<&str> {
        self.inform.get(slot).map(String::as_str)
    }

    pub(crate) fn apply_unchecked(&self, label: &[SlotValue]) -> Self {
        let mut next = self.clone();
        for (slot, value) in effective_label(label) {
            next.inform.insert(slot.to_string(), value.to_string());
        }
        next
    }
}

/// Returns the state with every informable pair of `turn_label` written
/// over its slot. Request entries are turn-scoped and ignored.
pub fn apply_turn_label(state: &DialogueState, turn_label: &[SlotValue], ontology: &Ontology) -> Result<DialogueState> {
    for (slot, value) in turn_label {
        let known = ontology
            .values(slot)
            .is_some_and(|vals| vals.iter().any(|v| v == value));
        if !known {
            return Err(Error::validation(
                "turn label",
                format!("({slot}, {value}) is not in the ontology"),
            ));
        }
    }
    Ok(state.apply_unchecked(turn_label))
}

/// For every slot that has held a value: the turn where its value last
/// changed and the value it held before that change (`None` if unset).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotChangeIndex {
    pub last_change_turn: BTreeMap<String, usize>,
    pub previous_value: BTreeMap<String, Option<String>>,
}

/// Moves a slot's link to `turn_index` only when the label assigns a value
/// different from `state_before`; re-informing the same value keeps the link.
pub fn update_change_index(
    index: &SlotChangeIndex,
    turn_index: usize,
    state_before: &DialogueState,
    turn_label: &[SlotValue],
) -> SlotChangeIndex {
    let mut next = index.clone();
    for (slot, value) in effective_label(turn_label) {
        let before = state_before.get(slot);
        if before != Some(value) {
            next.last_change_turn.insert(slot.to_string(), turn_index);
            next.previous_value.insert(slot.to_string(), before.map(str::to_string));
        }
    }
    next
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntecedentContext {
    pub utterance_tokens: Vec<String>,
    pub previous_value_tokens: Vec<String>,
    pub linked_turn: Option<usize>,
    pub previous_value: Option<String>,
}

impl AntecedentContext {
    pub fn sentinel() -> Self {
        AntecedentContext {
            utterance_tokens: vec![EMPTY_SENTINEL.to_string()],
            previous_value_tokens: vec![NONE_SENTINEL.to_string()],
            linked_turn: None,
            previous_value: None,
        }
    }

    pub fn has_utterance(&self) -> bool {
        self.utterance_tokens != [EMPTY_SENTINEL]
    }

    pub fn has_previous_value(&self) -> bool {
        self.previous_value.is_some()
    }
}

/// Antecedent user utterance and previous value for `slot` as seen from
/// `current_turn`. Never returns the current turn's own utterance.
pub fn lookup_antecedent(
    index: &SlotChangeIndex,
    slot: &str,
    dialogue: &Dialogue,
    current_turn: usize,
) -> AntecedentContext {
    if slot == REQUEST_SLOT {
        return AntecedentContext::sentinel();
    }
    let Some(&linked) = index.last_change_turn.get(slot) else {
        return AntecedentContext::sentinel();
    };
    if linked >= current_turn || linked >= dialogue.turns.len() {
        return AntecedentContext::sentinel();
    }
    let mut utterance_tokens = tokenize(&dialogue.turns[linked].user_transcript);
    if utterance_tokens.is_empty() {
        utterance_tokens.push(EMPTY_SENTINEL.to_string());
    }
    let previous_value = index.previous_value.get(slot).cloned().flatten();
    let previous_value_tokens = match &previous_value {
        Some(v) if !tokenize(v).is_empty() => tokenize(v),
        _ => vec![NONE_SENTINEL.to_string()],
    };
    AntecedentContext {
        utterance_tokens,
        previous_value_tokens,
        linked_turn: Some(linked),
        previous_value,
    }
}

/// Change index in force at the start of each turn, built from gold labels.
pub fn gold_indices(dialogue: &Dialogue) -> Vec<SlotChangeIndex> {
    let mut out = Vec::with_capacity(dialogue.turns.len());
    let mut index = SlotChangeIndex::default();
    let mut state = DialogueState::default();
    for turn in &dialogue.turns {
        out.push(index.clone());
        index = update_change_index(&index, turn.turn_index, &state, &turn.turn_label);
        state = state.apply_unchecked(&turn.turn_label);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLink {
    pub last_change_turn: Option<usize>,
    pub previous_value: Option<String>,
    pub antecedent_tokens: Vec<String>,
    pub previous_value_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnLookup {
    pub turn_index: usize,
    pub links: BTreeMap<String, SlotLink>,
}

/// Per-turn links and antecedents for every scored slot, from a sequence of
/// per-turn labels (gold or predicted).
pub fn inspect_lookup(dialogue: &Dialogue, slots: &[String], labels: &[Vec<SlotValue>]) -> Vec<TurnLookup> {
    let mut index = SlotChangeIndex::default();
    let mut state = DialogueState::default();
    let mut out = Vec::new();
    for (t, label) in labels.iter().enumerate().take(dialogue.turns.len()) {
        let links = slots
            .iter()
            .map(|slot| {
                let ctx = lookup_antecedent(&index, slot, dialogue, t);
                let link = SlotLink {
                    last_change_turn: ctx.linked_turn,
                    previous_value: ctx.previous_value,
                    antecedent_tokens: ctx.utterance_tokens,
                    previous_value_tokens: ctx.previous_value_tokens,
                };
                (slot.clone(), link)
            })
            .collect();
        out.push(TurnLookup { turn_index: t, links });
        index = update_change_index(&index, t, &state, label);
        state = state.apply_unchecked(label);
    }
    out
}
