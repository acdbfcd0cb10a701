//! WoZ 2.0 annotation files (`woz_{train,validate,test}_en.json`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Value};

use super::{warn_on_inconsistent_beliefs, Act, Dataset, Dialogue, Ontology, Split, Turn, REQUEST_SLOT};
use crate::error::{Error, Result};

/// Ontology file looked up next to the annotation files.
pub const ONTOLOGY_FILE: &str = "ontology.json";

pub fn woz_file_name(split: Split) -> &'static str {
    match split {
        Split::Train => "woz_train_en.json",
        Split::Validation => "woz_validate_en.json",
        Split::Test => "woz_test_en.json",
    }
}

#[derive(Deserialize)]
struct RawTurn {
    #[serde(default)]
    system_transcript: String,
    transcript: String,
    #[serde(default)]
    turn_label: Vec<(String, String)>,
    #[serde(default)]
    belief_state: Vec<RawBelief>,
    #[serde(default)]
    system_acts: Vec<RawAct>,
    #[serde(default)]
    turn_idx: Option<usize>,
}

#[derive(Deserialize)]
struct RawBelief {
    slots: Vec<Vec<String>>,
    act: String,
}

/// A bare string is `request(slot)`; a `[slot, value]` pair is `inform`.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawAct {
    Request(String),
    Inform(Vec<String>),
}

fn annotation_path(path: &Path, split: Split) -> PathBuf {
    if path.is_dir() {
        path.join(woz_file_name(split))
    } else {
        path.to_path_buf()
    }
}

fn ontology_next_to(file: &Path) -> Result<Option<Ontology>> {
    let candidate = file.parent().unwrap_or(Path::new(".")).join(ONTOLOGY_FILE);
    if candidate.is_file() {
        Ontology::load(&candidate).map(Some)
    } else {
        Ok(None)
    }
}

/// Loads one WoZ split. `path` is either the annotation file itself or the
/// directory holding the standard file names. When an `ontology.json` sits
/// next to the file, every label is validated against it.
pub fn load_woz_corpus(path: &Path, split: Split) -> Result<Vec<Dialogue>> {
    let file = annotation_path(path, split);
    let ontology = ontology_next_to(&file)?;
    let dialogues = read_woz_file(&file)?;
    for d in &dialogues {
        d.validate(ontology.as_ref())?;
    }
    warn_on_inconsistent_beliefs(&dialogues);
    Ok(dialogues)
}

/// Loads all three splits from a directory. The ontology comes from
/// `ontology.json` when present, otherwise from scanning the gold labels.
pub fn load_woz_dataset(dir: &Path) -> Result<Dataset> {
    let mut splits = Vec::new();
    for split in Split::ALL {
        splits.push(read_woz_file(&dir.join(woz_file_name(split)))?);
    }
    let [train, validation, test]: [Vec<Dialogue>; 3] = splits.try_into().expect("three splits");
    let ontology = match ontology_next_to(&dir.join(woz_file_name(Split::Train)))? {
        Some(o) => o,
        None => Ontology::from_dialogues(train.iter().chain(&validation).chain(&test)),
    };
    for d in train.iter().chain(&validation).chain(&test) {
        d.validate(Some(&ontology))?;
    }
    for split in [&train, &validation, &test] {
        warn_on_inconsistent_beliefs(split);
    }
    Ok(Dataset {
        ontology,
        train,
        validation,
        test,
    })
}

fn read_woz_file(file: &Path) -> Result<Vec<Dialogue>> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
    parse_woz(&text, &file.display().to_string())
}

pub(crate) fn parse_woz(text: &str, origin: &str) -> Result<Vec<Dialogue>> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::parse(origin, e))?;
    let records = root
        .as_array()
        .ok_or_else(|| Error::parse(origin, "expected a JSON array of dialogues"))?;
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| parse_dialogue(rec, &format!("{origin} dialogue #{i}")))
        .collect()
}

fn parse_dialogue(rec: &Value, loc: &str) -> Result<Dialogue> {
    let dialogue_id = match rec.get("dialogue_idx") {
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(s)) => s.clone(),
        _ => return Err(Error::parse(loc, "missing dialogue_idx")),
    };
    let loc = format!("{loc} (dialogue_idx {dialogue_id})");
    let raw_turns = rec
        .get("dialogue")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(&loc, "missing `dialogue` turn array"))?;
    let mut turns = Vec::with_capacity(raw_turns.len());
    for (j, raw) in raw_turns.iter().enumerate() {
        let tloc = format!("{loc} turn {j}");
        let raw: RawTurn = serde_json::from_value(raw.clone()).map_err(|e| Error::parse(&tloc, e))?;
        turns.push(convert_turn(raw, j, &tloc)?);
    }
    Ok(Dialogue { dialogue_id, turns })
}

fn convert_turn(raw: RawTurn, position: usize, loc: &str) -> Result<Turn> {
    let system_acts = raw
        .system_acts
        .into_iter()
        .map(|a| match a {
            RawAct::Request(slot) => Ok(Act::request(slot)),
            RawAct::Inform(pair) => match <[String; 2]>::try_from(pair) {
                Ok([slot, value]) => Ok(Act::inform(slot, value)),
                Err(other) if other.len() == 1 => Ok(Act::request(other[0].clone())),
                Err(other) => Err(Error::parse(loc, format!("malformed system act {other:?}"))),
            },
        })
        .collect::<Result<Vec<_>>>()?;
    let mut belief_state = BTreeMap::new();
    for entry in raw.belief_state.into_iter().filter(|b| b.act == "inform") {
        for pair in entry.slots {
            match <[String; 2]>::try_from(pair) {
                Ok([slot, value]) => {
                    belief_state.insert(slot, value);
                }
                Err(other) => return Err(Error::parse(loc, format!("malformed belief slot {other:?}"))),
            }
        }
    }
    Ok(Turn {
        turn_index: raw.turn_idx.unwrap_or(position),
        user_transcript: raw.transcript,
        system_transcript: raw.system_transcript,
        system_acts,
        turn_label: raw.turn_label,
        belief_state,
    })
}

/// Serializes dialogues back into the WoZ 2.0 layout. Acts other than
/// `request`/`inform` have no WoZ encoding and are written as `[slot, value]`.
pub fn to_woz_json(dialogues: &[Dialogue]) -> Value {
    let records: Vec<Value> = dialogues
        .iter()
        .map(|d| {
            let idx = match d.dialogue_id.parse::<u64>() {
                Ok(n) if n.to_string() == d.dialogue_id => json!(n),
                _ => json!(d.dialogue_id),
            };
            let turns: Vec<Value> = d.turns.iter().map(turn_to_woz).collect();
            json!({ "dialogue_idx": idx, "dialogue": turns })
        })
        .collect();
    Value::Array(records)
}

fn turn_to_woz(t: &Turn) -> Value {
    let mut belief: Vec<Value> = t
        .belief_state
        .iter()
        .map(|(s, v)| json!({ "slots": [[s, v]], "act": "inform" }))
        .collect();
    belief.extend(
        t.turn_label
            .iter()
            .filter(|(s, _)| s == REQUEST_SLOT)
            .map(|(s, v)| json!({ "slots": [[s, v]], "act": "request" })),
    );
    let acts: Vec<Value> = t
        .system_acts
        .iter()
        .map(|a| match (&a.slot, &a.value) {
            (Some(slot), None) if a.act_type == "request" => json!(slot),
            (Some(slot), Some(value)) => json!([slot, value]),
            (Some(slot), None) => json!([slot]),
            (None, _) => json!(a.act_type),
        })
        .collect();
    json!({
        "turn_idx": t.turn_index,
        "system_transcript": t.system_transcript,
        "transcript": t.user_transcript,
        "turn_label": t.turn_label,
        "belief_state": belief,
        "system_acts": acts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"[
      {"dialogue_idx": 3, "dialogue": [
        {"turn_label": [["food", "eritrean"]], "asr": [["x", 1.0]], "system_transcript": "",
         "turn_idx": 0, "belief_state": [{"slots": [["food", "eritrean"]], "act": "inform"}],
         "transcript": "Are there any eritrean restaurants in town?", "system_acts": []},
        {"turn_label": [["food", "chinese"], ["request", "phone"]], "system_transcript": "No eritrean. Anything else?",
         "turn_idx": 1, "belief_state": [{"slots": [["food", "chinese"]], "act": "inform"},
                                          {"slots": [["request", "phone"]], "act": "request"}],
         "transcript": "How about Chinese food?", "system_acts": ["food", ["area", "centre"]]}
      ]}
    ]"#;

    #[test]
    fn parses_distributed_layout() {
        let ds = parse_woz(SAMPLE, "sample").unwrap();
        assert_eq!(ds.len(), 1);
        let d = &ds[0];
        assert_eq!(d.dialogue_id, "3");
        assert_eq!(
            d.turns[1].system_acts,
            vec![Act::request("food"), Act::inform("area", "centre")]
        );
        assert_eq!(d.turns[1].belief_state.len(), 1, "requests stay out of the goal state");
        assert_eq!(d.turns[1].requests().into_iter().collect::<Vec<_>>(), vec!["phone"]);
        assert!(d.belief_state_mismatches().is_empty());
    }

    #[test]
    fn empty_list_is_empty_corpus() {
        assert!(parse_woz("[]", "empty").unwrap().is_empty());
    }

    #[test]
    fn malformed_turn_names_dialogue_and_turn() {
        let bad = r#"[{"dialogue_idx": 9, "dialogue": [{"transcript": "hi"}, {"turn_label": 5, "transcript": "x"}]}]"#;
        let err = parse_woz(bad, "bad.json").unwrap_err().to_string();
        assert!(err.contains("dialogue_idx 9") && err.contains("turn 1"), "{err}");
        assert!(parse_woz("{}", "obj").is_err());
    }

    #[test]
    fn writer_round_trips() {
        let ds = parse_woz(SAMPLE, "sample").unwrap();
        let text = serde_json::to_string(&to_woz_json(&ds)).unwrap();
        assert_eq!(parse_woz(&text, "again").unwrap(), ds);
    }

    #[test]
    fn ontology_file_next_to_split_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(woz_file_name(Split::Train)), SAMPLE).unwrap();
        assert_eq!(load_woz_corpus(dir.path(), Split::Train).unwrap().len(), 1);
        let ont = Ontology {
            informable: [("food".to_string(), vec!["chinese".to_string()])].into(),
            requestable: vec!["phone".into()],
        };
        ont.save(&dir.path().join(ONTOLOGY_FILE)).unwrap();
        let err = load_woz_corpus(dir.path(), Split::Train).unwrap_err();
        assert!(matches!(err, Error::Validation { .. }), "{err}");
    }
}
