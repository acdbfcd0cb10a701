//! The full tracker: encoders for each kind of evidence plus the scorers,
//! applied to every candidate value of every slot at a turn.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{embed, tokenize, value_tokens, Dialogue, EmbeddingTable, Ontology, Turn};
use crate::encoders::{Dropout, EncodedSequence, GleConfig, GleEncoder, Variant};
use crate::error::{Error, Result};
use crate::params::{Mat, ParamStore};
use crate::scorers::graph::{self, Evidence, SlotScores};
use crate::scorers::{ScoreBundle, ScorerLayout, ScorerParams};
use crate::state::{lookup_antecedent, SlotChangeIndex};
use crate::tape::{sigmoid, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_per_direction: usize,
    pub variant: Variant,
    pub referential_context: bool,
    pub fusion_scorer: bool,
    pub per_slot_combination: bool,
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn hidden_dim(&self) -> usize {
        2 * self.hidden_per_direction
    }

    /// With neither the referential nor the fusion branch, one encoder is
    /// shared by every kind of input.
    pub fn shares_encoder(&self) -> bool {
        !self.referential_context && !self.fusion_scorer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Antecedent,
    User,
    System,
    Act,
    Value,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Antecedent => "antecedent",
            Role::User => "user",
            Role::System => "system",
            Role::Act => "act",
            Role::Value => "value",
        }
    }
}

/// Embedded inputs of one turn; `None` marks absent evidence.
#[derive(Debug, Clone)]
pub struct TurnInputs {
    pub user: Option<Mat>,
    pub system: Option<Mat>,
    pub acts: Vec<Mat>,
}

fn embed_text(text: &str, table: &EmbeddingTable) -> Option<Mat> {
    let tokens = tokenize(text);
    (!tokens.is_empty()).then(|| embed(&tokens, table))
}

impl TurnInputs {
    pub fn new(turn: &Turn, table: &EmbeddingTable) -> Self {
        TurnInputs {
            user: embed_text(&turn.user_transcript, table),
            system: embed_text(&turn.system_transcript, table),
            acts: turn
                .system_acts
                .iter()
                .map(|a| a.tokens())
                .filter(|t| !t.is_empty())
                .map(|t| embed(&t, table))
                .collect(),
        }
    }
}

pub fn dialogue_inputs(dialogue: &Dialogue, table: &EmbeddingTable) -> Vec<TurnInputs> {
    dialogue.turns.iter().map(|t| TurnInputs::new(t, table)).collect()
}

/// Embedded candidate values, in slot order then ontology order.
#[derive(Debug, Clone)]
pub struct ValueInputs {
    pub per_slot: Vec<Vec<Mat>>,
}

/// Value encodings computed once and reused across turns at inference.
#[derive(Debug, Clone)]
pub struct ValueEncodings {
    pub per_slot: Vec<Vec<EncodedSequence>>,
}

/// Value encodings on a tape: per-value `(H, c)` and the stacked summaries.
#[derive(Debug, Clone)]
pub struct ValueVars {
    pub per_slot: Vec<Vec<(Var, Var)>>,
    pub stacked: Vec<Var>,
}

/// Identifies one encoded input within a pass: dialogue, turn and item
/// (act number, or value number for candidate values).
type InputKey = (usize, usize, usize);

/// One forward pass: a tape, optional dropout and caches of encodings.
pub struct Pass<'a> {
    pub tape: Tape<'a>,
    dropout: Option<Dropout>,
    cache: HashMap<(Role, InputKey, usize), (Var, Var)>,
    acts: HashMap<(usize, usize, usize), Var>,
    zero: Option<Var>,
}

const ANY_SLOT: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct Tracker {
    config: ModelConfig,
    ontology: Ontology,
    slots: Vec<String>,
    store: ParamStore,
    encoders: BTreeMap<Role, GleEncoder>,
    scorer: ScorerParams,
}

impl Tracker {
    pub fn new(config: ModelConfig, ontology: Ontology, seed: u64) -> Result<Self> {
        let slots = ontology.scored_slots();
        if slots.is_empty() {
            return Err(Error::Config("ontology has no slots to track".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let gle = GleConfig {
            input_dim: config.input_dim,
            hidden_per_direction: config.hidden_per_direction,
            use_local: config.variant == Variant::FullGle,
            dropout_rate: config.dropout_rate,
            slot_names: slots.clone(),
        };
        let mut roles = vec![Role::User, Role::Act, Role::Value];
        if config.referential_context {
            roles.insert(0, Role::Antecedent);
        }
        if config.fusion_scorer {
            roles.push(Role::System);
        }
        let mut encoders = BTreeMap::new();
        if config.shares_encoder() {
            let shared = GleEncoder::new(&mut store, "enc.shared", gle, &mut rng)?;
            for role in roles {
                encoders.insert(role, shared.clone());
            }
        } else {
            for role in roles {
                let enc = GleEncoder::new(&mut store, &format!("enc.{}", role.name()), gle.clone(), &mut rng)?;
                encoders.insert(role, enc);
            }
        }
        let layout = ScorerLayout {
            d_h: config.hidden_dim(),
            fc_width: config.hidden_dim(),
            referential_context: config.referential_context,
            fusion_scorer: config.fusion_scorer,
            per_slot: config.per_slot_combination.then_some(slots.as_slice()),
        };
        let scorer = ScorerParams::new(&mut store, &layout, &mut rng);
        Ok(Tracker {
            config,
            ontology,
            slots,
            store,
            encoders,
            scorer,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    /// Scored slots: informable slots, then `request` if any.
    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn candidates(&self, slot: usize) -> &[String] {
        self.ontology.values(&self.slots[slot]).unwrap_or(&[])
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn encoder(&self, role: Role) -> Option<&GleEncoder> {
        self.encoders.get(&role)
    }

    pub fn scorer(&self) -> &ScorerParams {
        &self.scorer
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeroed(mut self) -> Self {
        self.store.zero_all();
        self
    }

    pub fn check_table(&self, table: &EmbeddingTable) -> Result<()> {
        if table.width() != self.config.input_dim {
            return Err(Error::Config(format!(
                "embedding width {} does not match model input width {}",
                table.width(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    pub fn value_inputs(&self, table: &EmbeddingTable) -> ValueInputs {
        let per_slot = (0..self.slots.len())
            .map(|s| {
                self.candidates(s)
                    .iter()
                    .map(|v| embed(&value_tokens(&self.slots[s], v), table))
                    .collect()
            })
            .collect();
        ValueInputs { per_slot }
    }

    pub fn pass(&self, dropout: Option<Dropout>) -> Pass<'_> {
        Pass {
            tape: Tape::new(&self.store),
            dropout,
            cache: HashMap::new(),
            acts: HashMap::new(),
            zero: None,
        }
    }

    fn zero(&self, pass: &mut Pass) -> Var {
        let d_h = self.config.hidden_dim();
        *pass
            .zero
            .get_or_insert_with(|| pass.tape.constant(Mat::zeros((1, d_h))))
    }

    fn slot_key(&self, role: Role, slot: usize) -> usize {
        if self.encoders[&role].is_slot_specific() {
            slot
        } else {
            ANY_SLOT
        }
    }

    fn encode(&self, pass: &mut Pass, role: Role, key: InputKey, slot: usize, input: &Mat) -> (Var, Var) {
        let enc = &self.encoders[&role];
        let cache_key = (role, key, self.slot_key(role, slot));
        if let Some(hit) = pass.cache.get(&cache_key) {
            return *hit;
        }
        let x = pass.tape.constant(input.clone());
        let out = enc.encode_on(&mut pass.tape, x, &self.slots[slot], pass.dropout.as_mut());
        pass.cache.insert(cache_key, out);
        out
    }

    fn encode_or_zero(
        &self,
        pass: &mut Pass,
        role: Role,
        key: InputKey,
        slot: usize,
        input: Option<&Mat>,
    ) -> (Var, Var) {
        match input {
            Some(x) => self.encode(pass, role, key, slot, x),
            None => {
                let z = self.zero(pass);
                (z, z)
            }
        }
    }

    pub fn encode_values(&self, pass: &mut Pass, values: &ValueInputs) -> ValueVars {
        let mut per_slot = Vec::with_capacity(self.slots.len());
        let mut stacked = Vec::with_capacity(self.slots.len());
        for (s, inputs) in values.per_slot.iter().enumerate() {
            let vars: Vec<(Var, Var)> = inputs
                .iter()
                .enumerate()
                .map(|(i, x)| self.encode(pass, Role::Value, (usize::MAX, s, i), s, x))
                .collect();
            let cs: Vec<Var> = vars.iter().map(|(_, c)| *c).collect();
            stacked.push(pass.tape.concat_rows(&cs));
            per_slot.push(vars);
        }
        ValueVars { per_slot, stacked }
    }

    /// Encodes every candidate value once, with dropout off.
    pub fn value_encodings(&self, values: &ValueInputs) -> ValueEncodings {
        let mut pass = self.pass(None);
        let vars = self.encode_values(&mut pass, values);
        let per_slot = vars
            .per_slot
            .iter()
            .map(|vs| {
                vs.iter()
                    .map(|(h, c)| EncodedSequence {
                        h: pass.tape.value(*h).clone(),
                        c: pass.tape.value(*c).row(0).to_owned(),
                    })
                    .collect()
            })
            .collect();
        ValueEncodings { per_slot }
    }

    /// Places precomputed value encodings on the pass's tape as constants.
    pub fn value_vars(&self, pass: &mut Pass, enc: &ValueEncodings) -> ValueVars {
        let mut per_slot = Vec::new();
        let mut stacked = Vec::new();
        for seqs in &enc.per_slot {
            let vars: Vec<(Var, Var)> = seqs
                .iter()
                .map(|e| {
                    let h = pass.tape.constant(e.h.clone());
                    let c = pass.tape.constant(e.c.clone().insert_axis(ndarray::Axis(0)));
                    (h, c)
                })
                .collect();
            let cs: Vec<Var> = vars.iter().map(|(_, c)| *c).collect();
            stacked.push(pass.tape.concat_rows(&cs));
            per_slot.push(vars);
        }
        ValueVars { per_slot, stacked }
    }

    /// Scores the candidates of slot `slot` at `turn`. `dkey` distinguishes
    /// dialogues sharing one pass; `subset` restricts the candidate rows.
    #[allow(clippy::too_many_arguments)]
    pub fn score_slot(
        &self,
        pass: &mut Pass,
        dkey: usize,
        dialogue: &Dialogue,
        inputs: &[TurnInputs],
        turn: usize,
        index: &SlotChangeIndex,
        values: &ValueVars,
        slot: usize,
        subset: Option<&[usize]>,
    ) -> SlotScores {
        let slot_name = &self.slots[slot];
        let current = &inputs[turn];
        let (user_h, user_c) = self.encode_or_zero(pass, Role::User, (dkey, turn, 0), slot, current.user.as_ref());
        let (system_h, system_c) = if self.config.fusion_scorer {
            self.encode_or_zero(pass, Role::System, (dkey, turn, 0), slot, current.system.as_ref())
        } else {
            let z = self.zero(pass);
            (z, z)
        };
        let acts_c = self.encode_acts(pass, dkey, turn, slot, &current.acts);
        let (antecedent_h, previous_h) = if self.config.referential_context {
            let ctx = lookup_antecedent(index, slot_name, dialogue, turn);
            let linked = ctx.linked_turn.and_then(|t| inputs[t].user.as_ref().map(|x| (t, x)));
            let antecedent_h = match linked {
                Some((t, x)) => self.encode(pass, Role::Antecedent, (dkey, t, 0), slot, x).0,
                None => self.zero(pass),
            };
            let previous = ctx
                .previous_value
                .as_ref()
                .and_then(|v| self.candidates(slot).iter().position(|c| c == v));
            let previous_h = match previous {
                Some(i) => values.per_slot[slot][i].0,
                None => self.zero(pass),
            };
            (antecedent_h, previous_h)
        } else {
            let z = self.zero(pass);
            (z, z)
        };
        let values_c = match subset {
            Some(rows) => pass.tape.gather_rows(values.stacked[slot], rows),
            None => values.stacked[slot],
        };
        let ev = Evidence {
            antecedent_h,
            previous_h,
            user_h,
            user_c,
            system_h,
            system_c,
            acts_c,
            values_c,
        };
        let vars = self.scorer.vars(&mut pass.tape, slot_name);
        graph::score_slot(&mut pass.tape, &ev, &vars)
    }

    fn encode_acts(&self, pass: &mut Pass, dkey: usize, turn: usize, slot: usize, acts: &[Mat]) -> Var {
        if acts.is_empty() {
            return self.zero(pass);
        }
        let key = (dkey, turn, self.slot_key(Role::Act, slot));
        if let Some(c) = pass.acts.get(&key) {
            return *c;
        }
        let cs: Vec<Var> = acts
            .iter()
            .enumerate()
            .map(|(i, x)| self.encode(pass, Role::Act, (dkey, turn, i), slot, x).1)
            .collect();
        let stacked = pass.tape.concat_rows(&cs);
        pass.acts.insert(key, stacked);
        stacked
    }
}

/// Per-candidate view of slot scores.
pub fn bundles(tape: &Tape, scores: &SlotScores) -> Vec<ScoreBundle> {
    let column = |v: Option<Var>| v.map(|v| tape.value(v).column(0).to_vec());
    let y_pu = column(scores.y_pu);
    let y_pv = column(scores.y_pv);
    let y_f = tape.value(scores.y_f).column(0).to_vec();
    let y_a = tape.value(scores.y_a).column(0).to_vec();
    let alpha = scores.alpha.map_or(0.0, |a| tape.scalar(a));
    let logits = tape.value(scores.logits).column(0).to_vec();
    (0..logits.len())
        .map(|i| ScoreBundle {
            y_p_u: y_pu.as_ref().map_or(0.0, |v| v[i]),
            y_p_v: y_pv.as_ref().map_or(0.0, |v| v[i]),
            y_f: y_f[i],
            y_a: y_a[i],
            alpha,
            probability: sigmoid(logits[i]),
        })
        .collect()
}
