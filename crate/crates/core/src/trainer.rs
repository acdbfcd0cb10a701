//! Training: per-candidate binary cross-entropy, Adam with global-norm
//! clipping, per-epoch validation and early stopping, and checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, EmbeddingSpec, EmbeddingTable, Ontology, REQUEST_SLOT};
use crate::encoders::{Dropout, Variant};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, MetricsReport, NeuralScorer};
use crate::model::{dialogue_inputs, ModelConfig, Tracker, TurnInputs};
use crate::params::{Gradients, Mat, ParamStore};
use crate::state::{gold_indices, SlotChangeIndex};
use crate::tape::{Var, PROB_EPS};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    JointGoal,
    TurnRequest,
    TurnInform,
}

impl SelectionMetric {
    pub fn of(self, m: &MetricsSummary) -> f64 {
        match self {
            SelectionMetric::JointGoal => m.joint_goal,
            SelectionMetric::TurnRequest => m.turn_request,
            SelectionMetric::TurnInform => m.turn_inform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub patience: usize,
    pub selection_metric: SelectionMetric,
    pub variant: Variant,
    pub referential_context: bool,
    pub fusion_scorer: bool,
    pub hidden_per_direction: usize,
    /// Separate combination weights per slot instead of one shared set.
    pub per_slot_combination: bool,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    /// Score only this many random negatives per slot and turn in training.
    pub negative_samples: Option<usize>,
    /// Decision threshold used for validation during training.
    pub threshold: f64,
    pub embedding: EmbeddingSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 50,
            max_epochs: 100,
            dropout_rate: 0.2,
            seed: 0,
            patience: 20,
            selection_metric: SelectionMetric::JointGoal,
            variant: Variant::GlobalOnly,
            referential_context: true,
            fusion_scorer: true,
            hidden_per_direction: 200,
            per_slot_combination: false,
            clip_norm: 5.0,
            negative_samples: None,
            threshold: 0.5,
            embedding: EmbeddingSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.hidden_per_direction == 0 {
            return bad("hidden_per_direction must be positive".into());
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive".into());
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1)", self.threshold));
        }
        if self.embedding.width() == 0 {
            return bad("embedding width must be positive".into());
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_dim: self.embedding.width(),
            hidden_per_direction: self.hidden_per_direction,
            variant: self.variant,
            referential_context: self.referential_context,
            fusion_scorer: self.fusion_scorer,
            per_slot_combination: self.per_slot_combination,
            dropout_rate: self.dropout_rate,
        }
    }
}

/// Mean binary cross-entropy with probabilities clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn candidate_loss(probabilities: &[f64], gold: &[f64]) -> Result<f64> {
    if probabilities.len() != gold.len() {
        return Err(Error::Contract(format!(
            "{} probabilities for {} labels",
            probabilities.len(),
            gold.len()
        )));
    }
    if probabilities.is_empty() {
        return Err(Error::Contract("loss over no candidates".into()));
    }
    let total: f64 = probabilities
        .iter()
        .zip(gold)
        .map(|(&p, &g)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probabilities.len() as f64)
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: Vec<i32>,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        let zeros: Vec<Mat> = store.iter().map(|(_, p)| Mat::zeros(p.value.dim())).collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: vec![0; zeros.len()],
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Updates every parameter that received a gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        for (id, g) in grads.iter() {
            let i = id.index();
            self.steps[i] += 1;
            let t = self.steps[i];
            let (b1, b2) = (self.beta1, self.beta2);
            self.m[i].zip_mut_with(g, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
            self.v[i].zip_mut_with(g, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            let c1 = 1.0 - b1.powi(t);
            let c2 = 1.0 - b2.powi(t);
            let lr = self.learning_rate;
            let eps = self.eps;
            let value = store.value_mut(id);
            ndarray::Zip::from(value)
                .and(&self.m[i])
                .and(&self.v[i])
                .for_each(|w, &m, &v| *w -= lr * (m / c1) / ((v / c2).sqrt() + eps));
        }
    }
}

/// Scales `grads` down to `max_norm` if needed; returns the original norm.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub joint_goal: f64,
    pub turn_request: f64,
    pub turn_inform: f64,
}

impl From<&MetricsReport> for MetricsSummary {
    fn from(r: &MetricsReport) -> Self {
        MetricsSummary {
            joint_goal: r.joint_goal_accuracy,
            turn_request: r.turn_request_accuracy,
            turn_inform: r.turn_inform_accuracy,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub validation: MetricsSummary,
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Neural,
    /// Stub that predicts the gold labels; carries no parameters.
    GoldOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "ctxdst-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub kind: CheckpointKind,
    pub config: TrainConfig,
    pub ontology: Ontology,
    pub ontology_fingerprint: String,
    pub epoch: usize,
    pub validation: Option<MetricsSummary>,
    pub parameters: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn from_tracker(
        config: &TrainConfig,
        tracker: &Tracker,
        epoch: usize,
        validation: Option<MetricsSummary>,
    ) -> Self {
        let parameters = tracker
            .store()
            .iter()
            .map(|(_, p)| {
                let (r, c) = p.value.dim();
                let data = p.value.iter().copied().collect();
                (p.name.clone(), Tensor { shape: [r, c], data })
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: CheckpointKind::Neural,
            config: config.clone(),
            ontology: tracker.ontology().clone(),
            ontology_fingerprint: tracker.ontology().fingerprint(),
            epoch,
            validation,
            parameters,
        }
    }

    pub fn gold_oracle(ontology: Ontology) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: CheckpointKind::GoldOracle,
            config: TrainConfig::default(),
            ontology_fingerprint: ontology.fingerprint(),
            ontology,
            epoch: 0,
            validation: None,
            parameters: BTreeMap::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", ckpt.format)));
        }
        if ckpt.ontology.fingerprint() != ckpt.ontology_fingerprint {
            return Err(Error::Checkpoint(
                "ontology fingerprint does not match its ontology".into(),
            ));
        }
        Ok(ckpt)
    }

    /// Rebuilds the model, checking every tensor's name and shape.
    pub fn tracker(&self) -> Result<Tracker> {
        if self.kind != CheckpointKind::Neural {
            return Err(Error::Checkpoint("checkpoint holds no neural model".into()));
        }
        self.config.validate()?;
        let mut tracker = Tracker::new(self.config.model_config(), self.ontology.clone(), self.config.seed)?;
        let store = tracker.store_mut();
        let ids: Vec<_> = store.ids().collect();
        for id in &ids {
            let name = store.get(*id).name.clone();
            let t = self
                .parameters
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let expected = store.value(*id).dim();
            if (t.shape[0], t.shape[1]) != expected || t.data.len() != expected.0 * expected.1 {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, model expects {expected:?}",
                    t.shape
                )));
            }
            *store.value_mut(*id) = Mat::from_shape_vec(expected, t.data.clone()).expect("shape checked");
        }
        if self.parameters.len() != ids.len() {
            let known: BTreeSet<_> = ids.iter().map(|id| store.get(*id).name.clone()).collect();
            let extra: Vec<_> = self.parameters.keys().filter(|k| !known.contains(*k)).collect();
            return Err(Error::Checkpoint(format!("unexpected parameters {extra:?}")));
        }
        Ok(tracker)
    }
}

/// Trainable parameters stored in a checkpoint.
pub fn count_parameters(checkpoint: &Checkpoint) -> usize {
    checkpoint.parameters.values().map(|t| t.data.len()).sum()
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Model of the best validation epoch.
    pub tracker: Tracker,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Gold targets of one turn: one 0/1 vector per scored slot.
fn turn_targets(tracker: &Tracker, label: &[(String, String)]) -> Vec<Vec<f64>> {
    let mut informed: BTreeMap<&str, &str> = BTreeMap::new();
    let mut requests = BTreeSet::new();
    for (s, v) in label {
        if s == REQUEST_SLOT {
            requests.insert(v.as_str());
        } else {
            informed.insert(s, v);
        }
    }
    tracker
        .slots()
        .iter()
        .enumerate()
        .map(|(i, slot)| {
            tracker
                .candidates(i)
                .iter()
                .map(|v| {
                    let hit = if slot == REQUEST_SLOT {
                        requests.contains(v.as_str())
                    } else {
                        informed.get(slot.as_str()) == Some(&v.as_str())
                    };
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

struct Prepared<'a> {
    dialogue: &'a Dialogue,
    inputs: Vec<TurnInputs>,
    indices: Vec<SlotChangeIndex>,
    targets: Vec<Vec<Vec<f64>>>,
}

fn prepare<'a>(tracker: &Tracker, dialogues: &'a [Dialogue], table: &EmbeddingTable) -> Vec<Prepared<'a>> {
    dialogues
        .iter()
        .map(|d| Prepared {
            dialogue: d,
            inputs: dialogue_inputs(d, table),
            indices: gold_indices(d),
            targets: d.turns.iter().map(|t| turn_targets(tracker, &t.turn_label)).collect(),
        })
        .collect()
}

fn sample_subset(targets: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let (pos, mut neg): (Vec<usize>, Vec<usize>) = (0..targets.len()).partition(|&i| targets[i] > 0.5);
    if neg.len() <= k {
        return None;
    }
    neg.shuffle(rng);
    let mut rows: Vec<usize> = pos.into_iter().chain(neg.into_iter().take(k)).collect();
    rows.sort_unstable();
    Some(rows)
}

/// Mean candidate loss of one batch and its gradients.
fn batch_gradients(
    tracker: &Tracker,
    data: &[Prepared],
    batch: &[(usize, usize)],
    values: &crate::model::ValueInputs,
    dropout: Option<Dropout>,
    negative_samples: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> (f64, Gradients) {
    let mut pass = tracker.pass(dropout);
    let vv = tracker.encode_values(&mut pass, values);
    let mut losses: Vec<Var> = Vec::new();
    let mut n = 0usize;
    for &(d, t) in batch {
        let p = &data[d];
        for s in 0..tracker.slots().len() {
            let full = &p.targets[t][s];
            let subset = negative_samples.and_then(|k| sample_subset(full, k, rng));
            let targets: Vec<f64> = match &subset {
                Some(rows) => rows.iter().map(|&r| full[r]).collect(),
                None => full.clone(),
            };
            if targets.is_empty() {
                continue;
            }
            let scores = tracker.score_slot(
                &mut pass,
                d,
                p.dialogue,
                &p.inputs,
                t,
                &p.indices[t],
                &vv,
                s,
                subset.as_deref(),
            );
            losses.push(pass.tape.bce_logits(scores.logits, &targets));
            n += targets.len();
        }
    }
    let scale = 1.0 / n.max(1) as f64;
    let loss = losses.iter().map(|l| pass.tape.scalar(*l)).sum::<f64>() * scale;
    let seeds: Vec<(Var, Mat)> = losses.iter().map(|l| (*l, Mat::from_elem((1, 1), scale))).collect();
    (loss, pass.tape.backward_seeded(&seeds))
}

/// Validation metrics of the current model.
pub fn validate(
    tracker: &Tracker,
    table: &EmbeddingTable,
    dialogues: &[Dialogue],
    threshold: f64,
) -> Result<MetricsReport> {
    let scorer = NeuralScorer::new(tracker, table)?;
    Ok(evaluate(&scorer, dialogues, threshold)?.1)
}

/// Trains from scratch and returns the best validation epoch's model.
/// `on_epoch` sees each epoch's record as soon as it is complete.
pub fn fit(
    cfg: &TrainConfig,
    ontology: &Ontology,
    train: &[Dialogue],
    validation: &[Dialogue],
    table: &EmbeddingTable,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome> {
    cfg.validate()?;
    if table.width() != cfg.embedding.width() {
        return Err(Error::Config(format!(
            "embedding table width {} differs from configured width {}",
            table.width(),
            cfg.embedding.width()
        )));
    }
    for d in train.iter().chain(validation) {
        d.validate(Some(ontology))?;
    }
    let mut tracker = Tracker::new(cfg.model_config(), ontology.clone(), cfg.seed)?;
    let data = prepare(&tracker, train, table);
    let values = tracker.value_inputs(table);
    let mut order: Vec<(usize, usize)> = data
        .iter()
        .enumerate()
        .flat_map(|(d, p)| (0..p.inputs.len()).map(move |t| (d, t)))
        .collect();
    if order.is_empty() {
        return Err(Error::Config("training corpus has no turns".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a1e);
    let mut adam = Adam::new(tracker.store(), cfg.learning_rate);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamStore, MetricsSummary)> = None;
    let mut since_best = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let dropout = (cfg.dropout_rate > 0.0).then(|| Dropout::new(cfg.dropout_rate, rng.random()));
            let (loss, mut grads) =
                batch_gradients(&tracker, &data, batch, &values, dropout, cfg.negative_samples, &mut rng);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    message: format!("loss is {loss}"),
                });
            }
            let norm = clip_gradients(&mut grads, cfg.clip_norm);
            if !norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    message: format!("gradient norm is {norm}"),
                });
            }
            adam.step(tracker.store_mut(), &grads);
            loss_sum += loss;
            batches += 1;
        }
        let report = validate(&tracker, table, validation, cfg.threshold)?;
        let summary = MetricsSummary::from(&report);
        let score = cfg.selection_metric.of(&summary);
        let improved = best.as_ref().is_none_or(|(s, ..)| score > *s);
        if improved {
            best = Some((score, epoch, tracker.store().clone(), summary));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: loss_sum / batches as f64,
            validation: summary,
            improved,
        };
        log::info!(
            "epoch {epoch}: loss {:.5}, validation joint goal {:.4}",
            record.loss,
            summary.joint_goal
        );
        on_epoch(&record);
        history.push(record);
        if score >= 1.0 || since_best >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, store, summary) = best.ok_or_else(|| Error::Config("max_epochs is 0".into()))?;
    *tracker.store_mut() = store;
    let checkpoint = Checkpoint::from_tracker(cfg, &tracker, best_epoch, Some(summary));
    Ok(FitOutcome {
        tracker,
        checkpoint,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Turn;
    use crate::evaluation::CandidateScorer;
    use std::collections::HashMap;

    #[test]
    fn loss_examples() {
        assert!((candidate_loss(&[0.5], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(candidate_loss(&[1.0 - 1e-7], &[1.0]).unwrap() < 1e-6);
        let l = candidate_loss(&[0.9, 0.1], &[1.0, 0.0]).unwrap();
        assert!((l - 0.1054).abs() < 1e-4);
        assert!((l + 0.9f64.ln()).abs() < 1e-12);
        assert!(candidate_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap().is_finite());
        assert!(matches!(candidate_loss(&[0.5], &[1.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("w", Mat::from_elem((1, 2), 1.0));
        let mut grads = Gradients::new(1);
        grads.accumulate(id, &ndarray::array![[0.3, -4.0]]);
        let mut adam = Adam::new(&store, 1e-3);
        adam.step(&mut store, &grads);
        let w = store.value(id);
        assert!((w[[0, 0]] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((w[[0, 1]] - (1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut store = ParamStore::new();
        let id = store.add("w", Mat::zeros((1, 2)));
        let mut grads = Gradients::new(store.len());
        grads.accumulate(id, &ndarray::array![[30.0, 40.0]]);
        assert_eq!(clip_gradients(&mut grads, 5.0), 50.0);
        assert!((grads.global_norm() - 5.0).abs() < 1e-12);
    }

    fn tiny() -> (Ontology, Vec<Dialogue>, EmbeddingTable, TrainConfig) {
        let ontology = Ontology {
            informable: BTreeMap::from([("food".to_string(), vec!["indian".to_string(), "thai".to_string()])]),
            requestable: vec!["phone".to_string()],
        };
        let turn = |i: usize, text: &str, label: &[(&str, &str)], food: Option<&str>| Turn {
            turn_index: i,
            user_transcript: text.into(),
            system_transcript: if i == 0 { String::new() } else { "what else ?".into() },
            system_acts: vec![],
            turn_label: label.iter().map(|(s, v)| (s.to_string(), v.to_string())).collect(),
            belief_state: food.map(|f| ("food".to_string(), f.to_string())).into_iter().collect(),
        };
        let dialogues = vec![
            Dialogue {
                dialogue_id: "a".into(),
                turns: vec![
                    turn(0, "indian food", &[("food", "indian")], Some("indian")),
                    turn(1, "phone number", &[("request", "phone")], Some("indian")),
                ],
            },
            Dialogue {
                dialogue_id: "b".into(),
                turns: vec![turn(0, "thai food please", &[("food", "thai")], Some("thai"))],
            },
        ];
        let vocab = crate::corpus::Dataset {
            ontology: ontology.clone(),
            train: dialogues.clone(),
            validation: vec![],
            test: vec![],
        }
        .vocabulary();
        let table = EmbeddingTable::hashed(6, 2, 1, &vocab);
        let cfg = TrainConfig {
            hidden_per_direction: 4,
            batch_size: 2,
            max_epochs: 3,
            embedding: EmbeddingSpec {
                word_dim: 6,
                char_dim: 2,
                ..EmbeddingSpec::default()
            },
            ..TrainConfig::default()
        };
        (ontology, dialogues, table, cfg)
    }

    #[test]
    fn same_seed_same_first_epoch_loss() {
        let (ont, dialogues, table, cfg) = tiny();
        let a = fit(&cfg, &ont, &dialogues, &dialogues, &table, |_| {}).unwrap();
        let b = fit(&cfg, &ont, &dialogues, &dialogues, &table, |_| {}).unwrap();
        assert_eq!(a.history[0].loss.to_bits(), b.history[0].loss.to_bits());
    }

    #[test]
    fn patience_one_stops_after_first_flat_epoch() {
        let (ont, dialogues, table, mut cfg) = tiny();
        cfg.patience = 1;
        cfg.max_epochs = 50;
        cfg.learning_rate = 1e-6;
        let out = fit(&cfg, &ont, &dialogues, &dialogues, &table, |_| {}).unwrap();
        let first_flat = out.history.iter().position(|r| !r.improved);
        match first_flat {
            Some(i) => assert_eq!(out.history.len(), i + 1),
            None => assert_eq!(out.history.last().unwrap().validation.joint_goal, 1.0),
        }
    }

    #[test]
    fn non_finite_loss_is_reported_as_divergence() {
        let (ont, dialogues, _, cfg) = tiny();
        let mut lookup = HashMap::new();
        lookup.insert("indian".to_string(), vec![f64::NAN; 8]);
        let table = EmbeddingTable::from_map(6, 2, lookup);
        match fit(&cfg, &ont, &dialogues, &dialogues, &table, |_| {}) {
            Err(Error::Divergence { epoch: 0, .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let (ont, dialogues, table, cfg) = tiny();
        let out = fit(&cfg, &ont, &dialogues, &dialogues, &table, |_| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        out.checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, out.checkpoint);
        let restored = loaded.tracker().unwrap();
        let before = NeuralScorer::new(&out.tracker, &table).unwrap();
        let after = NeuralScorer::new(&restored, &table).unwrap();
        let d = &dialogues[0];
        let (pa, pb) = (before.prepare(d).unwrap(), after.prepare(d).unwrap());
        let idx = SlotChangeIndex::default();
        let sa = before.score_turn(&pa, d, 1, &idx).unwrap();
        let sb = after.score_turn(&pb, d, 1, &idx).unwrap();
        let bits = |s: &Vec<Vec<f64>>| s.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&sa), bits(&sb));
        assert_eq!(count_parameters(&loaded), restored.num_parameters());
    }

    #[test]
    fn checkpoint_shape_mismatch_is_rejected() {
        let (ont, dialogues, table, cfg) = tiny();
        let out = fit(&cfg, &ont, &dialogues, &dialogues, &table, |_| {}).unwrap();
        let mut ckpt = out.checkpoint.clone();
        ckpt.parameters.get_mut("score.combine.w").unwrap().shape = [2, 2];
        assert!(matches!(ckpt.tracker(), Err(Error::Checkpoint(_))));
        let mut ckpt = out.checkpoint;
        ckpt.parameters.remove("score.combine.b");
        assert!(ckpt.tracker().is_err());
    }

    #[test]
    fn empty_model_has_no_parameters() {
        let ckpt = Checkpoint::gold_oracle(Ontology::default());
        assert_eq!(count_parameters(&ckpt), 0);
    }
}
