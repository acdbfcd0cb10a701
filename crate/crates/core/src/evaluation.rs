//! Whole-dialogue inference and the joint goal, turn request and turn
//! inform metrics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, EmbeddingTable, Ontology, SlotValue, Turn, REQUEST_SLOT};
use crate::error::{Error, Result};
use crate::model::{dialogue_inputs, Tracker, TurnInputs, ValueEncodings};
use crate::state::{update_change_index, DialogueState, SlotChangeIndex};
use crate::tape::sigmoid;

/// Anything that can assign a probability to every candidate of a turn.
pub trait CandidateScorer {
    /// Per-dialogue data prepared once before its turns are scored.
    type Prepared;

    fn ontology(&self) -> &Ontology;

    fn prepare(&self, dialogue: &Dialogue) -> Result<Self::Prepared>;

    /// Probabilities for every slot of `ontology().scored_slots()`, each in
    /// the slot's ontology value order. `index` is built from the labels
    /// predicted for the earlier turns.
    fn score_turn(
        &self,
        prepared: &Self::Prepared,
        dialogue: &Dialogue,
        turn: usize,
        index: &SlotChangeIndex,
    ) -> Result<Vec<Vec<f64>>>;
}

pub struct NeuralScorer<'a> {
    tracker: &'a Tracker,
    table: &'a EmbeddingTable,
    values: ValueEncodings,
}

impl<'a> NeuralScorer<'a> {
    pub fn new(tracker: &'a Tracker, table: &'a EmbeddingTable) -> Result<Self> {
        tracker.check_table(table)?;
        let values = tracker.value_encodings(&tracker.value_inputs(table));
        Ok(NeuralScorer { tracker, table, values })
    }
}

impl CandidateScorer for NeuralScorer<'_> {
    type Prepared = Vec<TurnInputs>;

    fn ontology(&self) -> &Ontology {
        self.tracker.ontology()
    }

    fn prepare(&self, dialogue: &Dialogue) -> Result<Vec<TurnInputs>> {
        Ok(dialogue_inputs(dialogue, self.table))
    }

    fn score_turn(
        &self,
        inputs: &Vec<TurnInputs>,
        dialogue: &Dialogue,
        turn: usize,
        index: &SlotChangeIndex,
    ) -> Result<Vec<Vec<f64>>> {
        let mut pass = self.tracker.pass(None);
        let values = self.tracker.value_vars(&mut pass, &self.values);
        Ok((0..self.tracker.slots().len())
            .map(|s| {
                let scores = self
                    .tracker
                    .score_slot(&mut pass, 0, dialogue, inputs, turn, index, &values, s, None);
                pass.tape.value(scores.logits).iter().map(|&z| sigmoid(z)).collect()
            })
            .collect())
    }
}

/// Scores 1 for exactly the gold turn label and 0 otherwise.
pub struct GoldOracle {
    ontology: Ontology,
}

impl GoldOracle {
    pub fn new(ontology: Ontology) -> Self {
        GoldOracle { ontology }
    }
}

impl CandidateScorer for GoldOracle {
    type Prepared = ();

    fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    fn prepare(&self, _: &Dialogue) -> Result<()> {
        Ok(())
    }

    fn score_turn(&self, _: &(), dialogue: &Dialogue, turn: usize, _: &SlotChangeIndex) -> Result<Vec<Vec<f64>>> {
        let label = &dialogue.turns[turn].turn_label;
        Ok(self
            .ontology
            .scored_slots()
            .iter()
            .map(|slot| {
                let values = self.ontology.values(slot).unwrap_or(&[]);
                values
                    .iter()
                    .map(|v| {
                        let hit = label.iter().any(|(s, lv)| s == slot && lv == v);
                        if hit {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnPrediction {
    pub turn_index: usize,
    /// Informable pairs then request pairs.
    pub turn_label: Vec<SlotValue>,
    pub goal_state: DialogueState,
    pub requests: Vec<String>,
}

impl TurnPrediction {
    pub fn inform_label(&self) -> BTreeSet<SlotValue> {
        self.turn_label
            .iter()
            .filter(|(s, _)| s != REQUEST_SLOT)
            .cloned()
            .collect()
    }
}

/// Turns per-slot probabilities into a turn label: the best value above
/// `threshold` for informable slots, every value above it for requests.
pub fn decide(ontology: &Ontology, probabilities: &[Vec<f64>], threshold: f64) -> Vec<SlotValue> {
    let mut label = Vec::new();
    for (slot, probs) in ontology.scored_slots().iter().zip(probabilities) {
        let values = ontology.values(slot).unwrap_or(&[]);
        let above = probs.iter().zip(values).filter(|(p, _)| **p > threshold);
        if slot == REQUEST_SLOT {
            label.extend(above.map(|(_, v)| (slot.clone(), v.clone())));
        } else {
            let best = above.fold(None::<(f64, &String)>, |best, (&p, v)| match best {
                Some((bp, _)) if bp >= p => best,
                _ => Some((p, v)),
            });
            if let Some((_, v)) = best {
                label.push((slot.clone(), v.clone()));
            }
        }
    }
    label
}

/// Runs the tracker over a dialogue, feeding its own predicted labels into
/// the change index and the accumulated goal.
pub fn track_dialogue<S: CandidateScorer>(
    scorer: &S,
    dialogue: &Dialogue,
    threshold: f64,
) -> Result<Vec<TurnPrediction>> {
    dialogue
        .validate(Some(scorer.ontology()))
        .map_err(|e| Error::Config(format!("dialogue does not fit the model ontology: {e}")))?;
    let n_slots = scorer.ontology().scored_slots().len();
    let prepared = scorer.prepare(dialogue)?;
    let mut state = DialogueState::default();
    let mut index = SlotChangeIndex::default();
    let mut out = Vec::with_capacity(dialogue.turns.len());
    for turn in 0..dialogue.turns.len() {
        let probs = scorer.score_turn(&prepared, dialogue, turn, &index)?;
        if probs.len() != n_slots {
            return Err(Error::Contract(format!(
                "scorer returned {} slots, expected {n_slots}",
                probs.len()
            )));
        }
        let label = decide(scorer.ontology(), &probs, threshold);
        index = update_change_index(&index, turn, &state, &label);
        state = state.apply_unchecked(&label);
        let requests = label
            .iter()
            .filter(|(s, _)| s == REQUEST_SLOT)
            .map(|(_, v)| v.clone())
            .collect();
        out.push(TurnPrediction {
            turn_index: turn,
            turn_label: label,
            goal_state: state.clone(),
            requests,
        });
    }
    Ok(out)
}

pub fn track_corpus<S: CandidateScorer>(
    scorer: &S,
    dialogues: &[Dialogue],
    threshold: f64,
) -> Result<Vec<Vec<TurnPrediction>>> {
    dialogues.iter().map(|d| track_dialogue(scorer, d, threshold)).collect()
}

fn check_alignment(predictions: &[Vec<TurnPrediction>], gold: &[Dialogue]) -> Result<()> {
    if predictions.len() != gold.len() {
        return Err(Error::Contract(format!(
            "{} predicted dialogues for {} gold dialogues",
            predictions.len(),
            gold.len()
        )));
    }
    for (p, g) in predictions.iter().zip(gold) {
        if p.len() != g.turns.len() {
            return Err(Error::Contract(format!(
                "dialogue {}: {} predicted turns for {} gold turns",
                g.dialogue_id,
                p.len(),
                g.turns.len()
            )));
        }
    }
    Ok(())
}

fn aligned<'a>(
    predictions: &'a [Vec<TurnPrediction>],
    gold: &'a [Dialogue],
) -> Result<impl Iterator<Item = (&'a TurnPrediction, &'a Turn)>> {
    check_alignment(predictions, gold)?;
    Ok(predictions.iter().zip(gold).flat_map(|(p, g)| p.iter().zip(&g.turns)))
}

fn fraction<'a>(
    predictions: &'a [Vec<TurnPrediction>],
    gold: &'a [Dialogue],
    correct: impl Fn(&TurnPrediction, &Turn) -> bool,
) -> Result<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for (p, g) in aligned(predictions, gold)? {
        total += 1;
        hits += usize::from(correct(p, g));
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

fn gold_goal(turn: &Turn) -> BTreeMap<&str, &str> {
    turn.belief_state
        .iter()
        .filter(|(s, _)| *s != REQUEST_SLOT)
        .map(|(s, v)| (s.as_str(), v.as_str()))
        .collect()
}

fn goal_matches(p: &TurnPrediction, g: &Turn) -> bool {
    let predicted: BTreeMap<&str, &str> = p
        .goal_state
        .inform
        .iter()
        .map(|(s, v)| (s.as_str(), v.as_str()))
        .collect();
    predicted == gold_goal(g)
}

/// Fraction of turns whose accumulated goal equals the gold belief state.
/// An empty corpus scores 0.
pub fn joint_goal_accuracy(predictions: &[Vec<TurnPrediction>], gold: &[Dialogue]) -> Result<f64> {
    fraction(predictions, gold, goal_matches)
}

/// Fraction of turns whose request set equals the gold request set.
pub fn turn_request_accuracy(predictions: &[Vec<TurnPrediction>], gold: &[Dialogue]) -> Result<f64> {
    fraction(predictions, gold, |p, g| {
        p.requests.iter().cloned().collect::<BTreeSet<_>>() == g.requests()
    })
}

/// Fraction of turns whose informable turn label equals the gold one.
pub fn turn_inform_accuracy(predictions: &[Vec<TurnPrediction>], gold: &[Dialogue]) -> Result<f64> {
    fraction(predictions, gold, |p, g| p.inform_label() == g.inform_label())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub joint_goal_accuracy: f64,
    pub turn_request_accuracy: f64,
    pub turn_inform_accuracy: f64,
    /// Per informable slot: fraction of turns whose tracked value matches.
    pub per_slot_breakdown: BTreeMap<String, f64>,
    pub n_turns: usize,
}

pub fn metrics_report(
    ontology: &Ontology,
    predictions: &[Vec<TurnPrediction>],
    gold: &[Dialogue],
) -> Result<MetricsReport> {
    let n_turns = aligned(predictions, gold)?.count();
    let mut per_slot_breakdown = BTreeMap::new();
    for slot in ontology.informable.keys() {
        let acc = fraction(predictions, gold, |p, g| {
            p.goal_state.get(slot) == g.belief_state.get(slot).map(String::as_str)
        })?;
        per_slot_breakdown.insert(slot.clone(), acc);
    }
    Ok(MetricsReport {
        joint_goal_accuracy: joint_goal_accuracy(predictions, gold)?,
        turn_request_accuracy: turn_request_accuracy(predictions, gold)?,
        turn_inform_accuracy: turn_inform_accuracy(predictions, gold)?,
        per_slot_breakdown,
        n_turns,
    })
}

/// Tracks every dialogue with `scorer` and reports the metrics.
pub fn evaluate<S: CandidateScorer>(
    scorer: &S,
    dialogues: &[Dialogue],
    threshold: f64,
) -> Result<(Vec<Vec<TurnPrediction>>, MetricsReport)> {
    let predictions = track_corpus(scorer, dialogues, threshold)?;
    let report = metrics_report(scorer.ontology(), &predictions, dialogues)?;
    Ok((predictions, report))
}

/// Gold dialogues with their labels and belief states replaced by the
/// predictions, for error analysis in the canonical dialogue format.
pub fn prediction_dump(dialogues: &[Dialogue], predictions: &[Vec<TurnPrediction>]) -> Result<Vec<Dialogue>> {
    check_alignment(predictions, dialogues)?;
    Ok(dialogues
        .iter()
        .zip(predictions)
        .map(|(d, preds)| Dialogue {
            dialogue_id: d.dialogue_id.clone(),
            turns: d
                .turns
                .iter()
                .zip(preds)
                .map(|(t, p)| Turn {
                    turn_label: p.turn_label.clone(),
                    belief_state: p.goal_state.inform.clone(),
                    ..t.clone()
                })
                .collect(),
        })
        .collect())
}
