//! MultiWoZ 2.0 adapter restricted to single-domain restaurant dialogues.
//!
//! The distributed `data.json` maps dialogue names to a goal and a log of
//! alternating user/system entries; system entries carry the running
//! per-domain state in `metadata`. Split membership comes from
//! `valListFile.json` / `testListFile.json` next to it; everything else is
//! training data.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::{Act, Dataset, Dialogue, Ontology, Split, Turn};
use crate::error::{Error, Result};

/// Restaurant slots as (metadata section, metadata key, slot name).
pub const MULTIWOZ_RESTAURANT_SLOTS: [(&str, &str, &str); 7] = [
    ("semi", "food", "food"),
    ("semi", "pricerange", "price range"),
    ("semi", "name", "restaurant name"),
    ("semi", "area", "area"),
    ("book", "time", "book time"),
    ("book", "day", "book day"),
    ("book", "people", "book people"),
];

const OTHER_DOMAINS: [&str; 6] = ["attraction", "hospital", "hotel", "police", "taxi", "train"];

fn data_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("data.json")
    } else {
        path.to_path_buf()
    }
}

fn read_name_list(path: &Path) -> Result<BTreeSet<String>> {
    if !path.is_file() {
        return Ok(BTreeSet::new());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(&text) {
        return Ok(items.iter().filter_map(|v| v.as_str().map(String::from)).collect());
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Loads the restaurant-only dialogues of one split.
pub fn load_multiwoz_restaurant(path: &Path, split: Split) -> Result<Vec<Dialogue>> {
    let file = data_file(path);
    let dir = file.parent().unwrap_or(Path::new("."));
    let val = read_name_list(&dir.join("valListFile.json"))?;
    let test = read_name_list(&dir.join("testListFile.json"))?;
    let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| Error::parse(file.display().to_string(), e))?;
    let records = root
        .as_object()
        .ok_or_else(|| Error::parse(file.display().to_string(), "expected an object keyed by dialogue name"))?;
    let mut out = Vec::new();
    for (name, record) in records {
        let in_split = if test.contains(name) {
            Split::Test
        } else if val.contains(name) {
            Split::Validation
        } else {
            Split::Train
        };
        if in_split != split || !is_restaurant_only(record) {
            continue;
        }
        let d = convert_dialogue(name, record)?;
        d.validate(None)?;
        out.push(d);
    }
    super::warn_on_inconsistent_beliefs(&out);
    Ok(out)
}

/// All three restaurant splits, with the ontology scanned from their labels.
pub fn load_multiwoz_dataset(path: &Path) -> Result<Dataset> {
    let train = load_multiwoz_restaurant(path, Split::Train)?;
    let validation = load_multiwoz_restaurant(path, Split::Validation)?;
    let test = load_multiwoz_restaurant(path, Split::Test)?;
    let ontology = Ontology::from_dialogues(train.iter().chain(&validation).chain(&test));
    Ok(Dataset {
        ontology,
        train,
        validation,
        test,
    })
}

fn non_empty_goal(goal: &Map<String, Value>, domain: &str) -> bool {
    goal.get(domain)
        .and_then(Value::as_object)
        .is_some_and(|g| !g.is_empty())
}

fn is_restaurant_only(record: &Value) -> bool {
    let Some(goal) = record.get("goal").and_then(Value::as_object) else {
        return false;
    };
    non_empty_goal(goal, "restaurant") && !OTHER_DOMAINS.iter().any(|d| non_empty_goal(goal, d))
}

pub(crate) fn normalize_value(raw: &str) -> Option<String> {
    let v = raw.trim().to_lowercase();
    match v.as_str() {
        "" | "not mentioned" | "none" => None,
        "dont care" | "don't care" | "do n't care" | "dontcare" | "do nt care" => Some("dontcare".into()),
        _ => Some(v),
    }
}

fn restaurant_state(metadata: &Value) -> BTreeMap<String, String> {
    let mut state = BTreeMap::new();
    let Some(rest) = metadata.get("restaurant") else {
        return state;
    };
    for (section, key, slot) in MULTIWOZ_RESTAURANT_SLOTS {
        if let Some(v) = rest.get(section).and_then(|s| s.get(key)).and_then(Value::as_str) {
            if let Some(v) = normalize_value(v) {
                state.insert(slot.to_string(), v);
            }
        }
    }
    state
}

fn act_slot_name(raw: &str) -> String {
    match raw.to_lowercase().as_str() {
        "food" => "food".into(),
        "price" | "pricerange" => "price range".into(),
        "name" => "restaurant name".into(),
        "area" => "area".into(),
        "time" => "book time".into(),
        "day" => "book day".into(),
        "people" => "book people".into(),
        other => other.to_string(),
    }
}

fn parse_acts(entry: &Value) -> Vec<Act> {
    let Some(acts) = entry.get("dialog_act").and_then(Value::as_object) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (intent, pairs) in acts {
        let (domain, act) = intent.split_once('-').unwrap_or(("general", intent));
        if !matches!(domain.to_lowercase().as_str(), "restaurant" | "booking" | "general") {
            continue;
        }
        let act_type = act.to_lowercase();
        let pairs = pairs.as_array().cloned().unwrap_or_default();
        if pairs.is_empty() {
            out.push(Act {
                act_type: act_type.clone(),
                slot: None,
                value: None,
            });
        }
        for pair in pairs {
            let s = pair.get(0).and_then(Value::as_str).unwrap_or("none");
            let v = pair.get(1).and_then(Value::as_str).unwrap_or("none");
            let slot = (s.to_lowercase() != "none").then(|| act_slot_name(s));
            let value = (v != "?").then(|| normalize_value(v)).flatten();
            out.push(Act {
                act_type: act_type.clone(),
                slot,
                value,
            });
        }
    }
    out
}

fn convert_dialogue(name: &str, record: &Value) -> Result<Dialogue> {
    let loc = |i: usize| format!("multiwoz dialogue {name} log entry {i}");
    let log = record
        .get("log")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(format!("multiwoz dialogue {name}"), "missing `log` array"))?;
    let text = |i: usize| -> Result<String> {
        log[i]
            .get("text")
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| Error::parse(loc(i), "missing `text`"))
    };
    let mut turns = Vec::new();
    let mut previous = BTreeMap::new();
    for (turn_index, user_pos) in (0..log.len()).step_by(2).enumerate() {
        let (system_transcript, system_acts) = if user_pos == 0 {
            (String::new(), Vec::new())
        } else {
            (text(user_pos - 1)?, parse_acts(&log[user_pos - 1]))
        };
        let belief_state = match log.get(user_pos + 1) {
            Some(sys) => restaurant_state(sys.get("metadata").unwrap_or(&Value::Null)),
            None => previous.clone(),
        };
        let turn_label = belief_state
            .iter()
            .filter(|(s, v)| previous.get(*s) != Some(*v))
            .map(|(s, v)| (s.clone(), v.clone()))
            .collect();
        turns.push(Turn {
            turn_index,
            user_transcript: text(user_pos)?,
            system_transcript,
            system_acts,
            turn_label,
            belief_state: belief_state.clone(),
        });
        previous = belief_state;
    }
    Ok(Dialogue {
        dialogue_id: name.to_string(),
        turns,
    })
}
