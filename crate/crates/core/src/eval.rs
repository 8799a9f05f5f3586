//! Joint goal accuracy and co-reference slot accuracy.
//!
//! Values are compared after [`normalize`]. Slots whose value is empty or
//! `none` count as absent on both sides.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complicate::LabeledDialogue;
use crate::normalize::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("more than one prediction for {dialogue_id} turn {turn_index}")]
    DuplicatePrediction { dialogue_id: String, turn_index: usize },
    #[error("more than one gold turn for {dialogue_id} turn {turn_index}")]
    DuplicateGold { dialogue_id: String, turn_index: usize },
    #[error("annotation for {dialogue_id} turn {turn_index} has no gold turn")]
    MissingGoldTurn { dialogue_id: String, turn_index: usize },
    #[error("annotated slot {slot} is not in the gold state of {dialogue_id} turn {turn_index}")]
    MissingGoldSlot { dialogue_id: String, turn_index: usize, slot: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub predicted_belief: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefAnnotation {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub slot: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldTurn {
    pub dialogue_id: String,
    pub turn_index: usize,
    pub belief: IndexMap<String, String>,
}

pub fn gold_turns(dialogues: &[LabeledDialogue]) -> Vec<GoldTurn> {
    dialogues
        .iter()
        .flat_map(|d| {
            d.turns.iter().enumerate().map(|(i, t)| GoldTurn {
                dialogue_id: d.id.clone(),
                turn_index: i,
                belief: t.belief_state.clone(),
            })
        })
        .collect()
}

/// Every turn in which a co-reference target is labeled.
pub fn annotations_from_labeled(dialogues: &[LabeledDialogue]) -> Vec<CorefAnnotation> {
    dialogues
        .iter()
        .flat_map(|d| {
            d.turns.iter().enumerate().flat_map(move |(i, t)| {
                t.coref_slots.iter().map(move |s| CorefAnnotation {
                    dialogue_id: d.id.clone(),
                    turn_index: i,
                    slot: s.clone(),
                })
            })
        })
        .collect()
}

fn canonical(map: &IndexMap<String, String>) -> BTreeMap<String, String> {
    map.iter()
        .map(|(k, v)| (k.trim().to_lowercase(), normalize(v)))
        .filter(|(_, v)| !v.is_empty() && v != "none")
        .collect()
}

type Key = (String, usize);

fn index_predictions(preds: &[PredictionRecord]) -> Result<HashMap<Key, BTreeMap<String, String>>, EvalError> {
    let mut out = HashMap::new();
    for p in preds {
        let key = (p.dialogue_id.clone(), p.turn_index);
        if out.insert(key, canonical(&p.predicted_belief)).is_some() {
            return Err(EvalError::DuplicatePrediction {
                dialogue_id: p.dialogue_id.clone(),
                turn_index: p.turn_index,
            });
        }
    }
    Ok(out)
}

fn index_gold(gold: &[GoldTurn]) -> Result<HashMap<Key, BTreeMap<String, String>>, EvalError> {
    let mut out = HashMap::new();
    for g in gold {
        if out.insert((g.dialogue_id.clone(), g.turn_index), canonical(&g.belief)).is_some() {
            return Err(EvalError::DuplicateGold {
                dialogue_id: g.dialogue_id.clone(),
                turn_index: g.turn_index,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub correct: usize,
    pub total: usize,
    /// `None` when `total` is zero.
    pub value: Option<f64>,
}

impl Ratio {
    fn new(correct: usize, total: usize) -> Self {
        Self { correct, total, value: (total > 0).then(|| correct as f64 / total as f64) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JgaResult {
    pub accuracy: Ratio,
    /// Gold turns without any prediction; each counts as wrong.
    pub missing: usize,
}

/// Fraction of gold turns whose predicted belief matches exactly.
pub fn joint_goal_accuracy(preds: &[PredictionRecord], gold: &[GoldTurn]) -> Result<JgaResult, EvalError> {
    let p = index_predictions(preds)?;
    index_gold(gold)?;
    let mut correct = 0;
    let mut missing = 0;
    for g in gold {
        match p.get(&(g.dialogue_id.clone(), g.turn_index)) {
            Some(pred) if *pred == canonical(&g.belief) => correct += 1,
            Some(_) => {}
            None => missing += 1,
        }
    }
    Ok(JgaResult { accuracy: Ratio::new(correct, gold.len()), missing })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorefResult {
    /// Over every annotated (turn, slot) pair.
    pub per_pair: Ratio,
    /// Only the first annotated turn of each (dialogue, slot).
    pub first_mention: Ratio,
}

/// Fraction of annotated (turn, slot) pairs whose predicted value equals
/// the gold value. An absent prediction is wrong.
pub fn coref_slot_accuracy(
    preds: &[PredictionRecord],
    gold: &[GoldTurn],
    annotations: &[CorefAnnotation],
) -> Result<CorefResult, EvalError> {
    let p = index_predictions(preds)?;
    let g = index_gold(gold)?;
    let mut hits: Vec<(&CorefAnnotation, bool)> = Vec::with_capacity(annotations.len());
    for a in annotations {
        let key = (a.dialogue_id.clone(), a.turn_index);
        let gold_belief = g.get(&key).ok_or_else(|| EvalError::MissingGoldTurn {
            dialogue_id: a.dialogue_id.clone(),
            turn_index: a.turn_index,
        })?;
        let slot = a.slot.trim().to_lowercase();
        let gold_value = gold_belief.get(&slot).ok_or_else(|| EvalError::MissingGoldSlot {
            dialogue_id: a.dialogue_id.clone(),
            turn_index: a.turn_index,
            slot: a.slot.clone(),
        })?;
        let ok = p.get(&key).and_then(|b| b.get(&slot)) == Some(gold_value);
        hits.push((a, ok));
    }
    let per_pair = Ratio::new(hits.iter().filter(|(_, ok)| *ok).count(), hits.len());

    let mut first: BTreeMap<(String, String), (usize, bool)> = BTreeMap::new();
    for (a, ok) in &hits {
        let entry = first
            .entry((a.dialogue_id.clone(), a.slot.trim().to_lowercase()))
            .or_insert((a.turn_index, *ok));
        if a.turn_index < entry.0 {
            *entry = (a.turn_index, *ok);
        }
    }
    let first_mention = Ratio::new(first.values().filter(|(_, ok)| *ok).count(), first.len());
    Ok(CorefResult { per_pair, first_mention })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub jga: Option<f64>,
    pub coref_acc: Option<f64>,
    pub coref_acc_first_mention: Option<f64>,
    pub counts: BTreeMap<String, usize>,
}

pub fn evaluate(
    preds: &[PredictionRecord],
    gold: &[GoldTurn],
    annotations: &[CorefAnnotation],
) -> Result<EvalReport, EvalError> {
    let j = joint_goal_accuracy(preds, gold)?;
    let c = coref_slot_accuracy(preds, gold, annotations)?;
    let counts = BTreeMap::from([
        ("turns".to_owned(), j.accuracy.total),
        ("turns_correct".to_owned(), j.accuracy.correct),
        ("missing_predictions".to_owned(), j.missing),
        ("coref_pairs".to_owned(), c.per_pair.total),
        ("coref_correct".to_owned(), c.per_pair.correct),
        ("coref_first_mentions".to_owned(), c.first_mention.total),
        ("coref_first_mentions_correct".to_owned(), c.first_mention.correct),
    ]);
    Ok(EvalReport {
        jga: j.accuracy.value,
        coref_acc: c.per_pair.value,
        coref_acc_first_mention: c.first_mention.value,
        counts,
    })
}
