//! Dialogue corpora: record types, ontology, tokenization, embeddings and the
//! WoZ 2.0 / MultiWoZ 2.0 (restaurant) loaders.
//!
//! Every loader produces the same canonical [`Dialogue`] records. The
//! canonical JSON form is simply the serde serialization of [`Dialogue`]:
//!
//! ```json
//! {"dialogue_id": "7", "turns": [{"turn_index": 0, "user_transcript": "...",
//!   "system_transcript": "", "system_acts": [{"act_type": "request", "slot": "food"}],
//!   "turn_label": [["food", "indian"]], "belief_state": {"food": "indian"}}]}
//! ```

mod embedding;
mod multiwoz;
mod tokenize;
mod woz;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use embedding::{embed, EmbeddingSource, EmbeddingSpec, EmbeddingTable};
pub use multiwoz::{load_multiwoz_dataset, load_multiwoz_restaurant, MULTIWOZ_RESTAURANT_SLOTS};
pub use tokenize::tokenize;
pub use woz::{load_woz_corpus, load_woz_dataset, to_woz_json, woz_file_name};

/// Pseudo-slot under which per-turn requests appear in turn labels.
pub const REQUEST_SLOT: &str = "request";

/// A (slot, value) pair as it appears in a turn label.
pub type SlotValue = (String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "validate" | "valid" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// One system dialogue act, e.g. `request(food)` or `inform(food=indian)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Act {
    pub act_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl Act {
    pub fn request(slot: impl Into<String>) -> Self {
        Act {
            act_type: "request".into(),
            slot: Some(slot.into()),
            value: None,
        }
    }

    pub fn inform(slot: impl Into<String>, value: impl Into<String>) -> Self {
        Act {
            act_type: "inform".into(),
            slot: Some(slot.into()),
            value: Some(value.into()),
        }
    }

    /// Token sequence fed to the act encoder: `inform food = indian`.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = tokenize(&self.act_type);
        if let Some(slot) = &self.slot {
            out.extend(tokenize(slot));
        }
        if let Some(value) = &self.value {
            out.push("=".to_string());
            out.extend(tokenize(value));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_index: usize,
    pub user_transcript: String,
    pub system_transcript: String,
    pub system_acts: Vec<Act>,
    pub turn_label: Vec<SlotValue>,
    /// Gold accumulated informable goal after this turn. Requests are
    /// turn-scoped and live only in `turn_label`.
    pub belief_state: BTreeMap<String, String>,
}

impl Turn {
    /// Request types asked for in this turn.
    pub fn requests(&self) -> BTreeSet<String> {
        self.turn_label
            .iter()
            .filter(|(s, _)| s == REQUEST_SLOT)
            .map(|(_, v)| v.clone())
            .collect()
    }

    /// Informable (slot, value) pairs of the turn label.
    pub fn inform_label(&self) -> BTreeSet<SlotValue> {
        self.turn_label
            .iter()
            .filter(|(s, _)| s != REQUEST_SLOT)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Checks structural invariants and, when an ontology is given, that
    /// every label and belief entry is known to it.
    pub fn validate(&self, ontology: Option<&Ontology>) -> Result<()> {
        for (i, turn) in self.turns.iter().enumerate() {
            let loc = || format!("dialogue {} turn {}", self.dialogue_id, i);
            if turn.turn_index != i {
                return Err(Error::validation(
                    loc(),
                    format!("turn_index {} is not consecutive from 0", turn.turn_index),
                ));
            }
            if let Some(act) = turn.system_acts.iter().find(|a| a.act_type.is_empty()) {
                return Err(Error::validation(loc(), format!("empty act type in {act:?}")));
            }
            if let Some(ont) = ontology {
                for (slot, value) in &turn.turn_label {
                    ont.check(slot, value).map_err(|m| Error::validation(loc(), m))?;
                }
                for (slot, value) in &turn.belief_state {
                    if slot == REQUEST_SLOT {
                        return Err(Error::validation(loc(), "request entry in belief_state"));
                    }
                    ont.check(slot, value).map_err(|m| Error::validation(loc(), m))?;
                }
            }
        }
        Ok(())
    }

    /// Turn indices whose gold belief state differs from folding the
    /// informable turn labels from turn 0.
    pub fn belief_state_mismatches(&self) -> Vec<usize> {
        let mut state = crate::state::DialogueState::default();
        let mut bad = Vec::new();
        for turn in &self.turns {
            state = state.apply_unchecked(&turn.turn_label);
            if state.inform != turn.belief_state {
                bad.push(turn.turn_index);
            }
        }
        bad
    }
}

/// Informable slots with their candidate values, plus requestable types.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ontology {
    pub informable: BTreeMap<String, Vec<String>>,
    pub requestable: Vec<String>,
}

impl Ontology {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ont: Ontology = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        ont.check_unique()?;
        Ok(ont)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("ontology serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Builds an ontology by scanning gold turn labels and belief states.
    /// Slot and value order follow first appearance.
    pub fn from_dialogues<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>) -> Self {
        let mut informable: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut requestable = Vec::new();
        let push = |list: &mut Vec<String>, v: &str| {
            if !list.iter().any(|x| x == v) {
                list.push(v.to_string());
            }
        };
        for d in dialogues {
            for t in &d.turns {
                let pairs = t
                    .turn_label
                    .iter()
                    .map(|(s, v)| (s.as_str(), v.as_str()))
                    .chain(t.belief_state.iter().map(|(s, v)| (s.as_str(), v.as_str())));
                for (slot, value) in pairs {
                    if slot == REQUEST_SLOT {
                        push(&mut requestable, value);
                    } else {
                        push(informable.entry(slot.to_string()).or_default(), value);
                    }
                }
            }
        }
        Ontology {
            informable,
            requestable,
        }
    }

    pub fn is_informable(&self, slot: &str) -> bool {
        self.informable.contains_key(slot)
    }

    pub fn values(&self, slot: &str) -> Option<&[String]> {
        if slot == REQUEST_SLOT {
            Some(&self.requestable)
        } else {
            self.informable.get(slot).map(Vec::as_slice)
        }
    }

    pub fn total_informable_values(&self) -> usize {
        self.informable.values().map(Vec::len).sum()
    }

    /// Scored slots in model order: informable slots, then `request` when
    /// the ontology has requestable types.
    pub fn scored_slots(&self) -> Vec<String> {
        let mut slots: Vec<String> = self.informable.keys().cloned().collect();
        if !self.requestable.is_empty() {
            slots.push(REQUEST_SLOT.to_string());
        }
        slots
    }

    fn check(&self, slot: &str, value: &str) -> std::result::Result<(), String> {
        match self.values(slot) {
            None => Err(format!("unknown slot `{slot}`")),
            Some(values) if !values.iter().any(|v| v == value) => {
                Err(format!("value `{value}` not in ontology for slot `{slot}`"))
            }
            Some(_) => Ok(()),
        }
    }

    fn check_unique(&self) -> Result<()> {
        for (slot, values) in self
            .informable
            .iter()
            .map(|(s, v)| (s.as_str(), v))
            .chain(std::iter::once((REQUEST_SLOT, &self.requestable)))
        {
            let set: BTreeSet<&String> = values.iter().collect();
            if set.len() != values.len() {
                return Err(Error::validation("ontology", format!("duplicate value in `{slot}`")));
            }
        }
        if self.informable.contains_key(REQUEST_SLOT) {
            return Err(Error::validation("ontology", "`request` cannot be informable"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form; checkpoints store it so a model
    /// is never evaluated against a different candidate set.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("ontology serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Logs a warning for every dialogue whose gold belief states disagree with
/// its folded turn labels. Returns the number of inconsistent turns.
pub fn warn_on_inconsistent_beliefs(dialogues: &[Dialogue]) -> usize {
    let mut total = 0;
    for d in dialogues {
        let bad = d.belief_state_mismatches();
        if !bad.is_empty() {
            log::warn!(
                "dialogue {}: gold belief state differs from folded turn labels at turns {:?}",
                d.dialogue_id,
                bad
            );
            total += bad.len();
        }
    }
    total
}

/// Train/validation/test dialogues sharing one ontology.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ontology: Ontology,
    pub train: Vec<Dialogue>,
    pub validation: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Dialogue] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Dialogue> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    /// Every token an embedding table may be asked for: utterances, acts
    /// and ontology values.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut vocab = BTreeSet::new();
        for d in self.all() {
            for t in &d.turns {
                vocab.extend(tokenize(&t.user_transcript));
                vocab.extend(tokenize(&t.system_transcript));
                for a in &t.system_acts {
                    vocab.extend(a.tokens());
                }
            }
        }
        vocab.extend(ontology_vocabulary(&self.ontology));
        vocab
    }
}

/// Tokens a candidate value is encoded from: `slot = value`, so that values
/// shared by several slots (such as `dontcare`) stay distinguishable.
pub fn value_tokens(slot: &str, value: &str) -> Vec<String> {
    tokenize(&format!("{slot} = {value}"))
}

pub fn ontology_vocabulary(ontology: &Ontology) -> BTreeSet<String> {
    let mut vocab = BTreeSet::new();
    for (slot, values) in &ontology.informable {
        vocab.extend(tokenize(slot));
        for v in values {
            vocab.extend(tokenize(v));
        }
    }
    for r in &ontology.requestable {
        vocab.extend(tokenize(r));
    }
    vocab.extend(["request", "inform", "="].map(String::from));
    vocab
}
