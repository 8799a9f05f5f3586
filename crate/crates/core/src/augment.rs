//! Training samples for a generate-values-then-slots tracker, and slot
//! value permutation.
//!
//! Each labeled exchange yields one value-generation sample whose target is
//! the exchange's values joined by `" | "`, plus one domain-slot sample per
//! value. Permutation emits every ordering of a value target as its own
//! sample so the model does not learn an arbitrary output order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complicate::{LabeledDialogue, Variant};
use crate::lexicon::Lexicon;
use crate::schema::Schema;

pub const SEPARATOR: &str = " | ";
pub const DEFAULT_NONE_MARKER: &str = "none";
pub const DEFAULT_PERMUTATION_CAP: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    ValueGeneration,
    DomainSlotGeneration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub id: String,
    pub dialogue_id: String,
    pub variant: Variant,
    pub turn_index: usize,
    pub kind: SampleKind,
    pub history: Vec<(String, String)>,
    pub system: String,
    pub user: String,
    /// The value whose slot is asked for; domain-slot samples only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub target_values: Vec<String>,
    pub target_text: String,
}

fn join_target(values: &[String], none_marker: &str) -> String {
    if values.is_empty() {
        none_marker.to_owned()
    } else {
        values.join(SEPARATOR)
    }
}

/// Samples for every exchange of `ld`.
///
/// Values are ordered by where they are first stated in the exchange;
/// values the text does not state follow in schema order.
pub fn to_samples(
    ld: &LabeledDialogue,
    schema: &Schema,
    lexicon: &Lexicon,
    none_marker: &str,
) -> Vec<TrainingSample> {
    let mut out = Vec::new();
    let mut history: Vec<(String, String)> = Vec::new();
    for (t, turn) in ld.turns.iter().enumerate() {
        let text = format!("{} {}", turn.system, turn.user);
        let ordered: Vec<(&String, &String)> = turn
            .turn_state
            .iter()
            .enumerate()
            .sorted_by_key(|(i, (slot, value))| {
                (
                    lexicon.position(&text, slot, value).unwrap_or(usize::MAX),
                    schema.slot_rank(slot).unwrap_or(usize::MAX),
                    *i,
                )
            })
            .map(|(_, kv)| kv)
            .collect();
        let values: Vec<String> = ordered.iter().map(|(_, v)| (*v).clone()).collect();
        let base = format!("{}/t{t}", ld.id);
        out.push(TrainingSample {
            id: format!("{base}/v"),
            dialogue_id: ld.id.clone(),
            variant: ld.variant,
            turn_index: t,
            kind: SampleKind::ValueGeneration,
            history: history.clone(),
            system: turn.system.clone(),
            user: turn.user.clone(),
            value: None,
            target_text: join_target(&values, none_marker),
            target_values: values,
        });
        for (j, (slot, value)) in ordered.iter().enumerate() {
            out.push(TrainingSample {
                id: format!("{base}/s{j}"),
                dialogue_id: ld.id.clone(),
                variant: ld.variant,
                turn_index: t,
                kind: SampleKind::DomainSlotGeneration,
                history: history.clone(),
                system: turn.system.clone(),
                user: turn.user.clone(),
                value: Some((*value).clone()),
                target_values: vec![(*slot).clone()],
                target_text: (*slot).clone(),
            });
        }
        history.push((turn.system.clone(), turn.user.clone()));
    }
    out
}

fn factorial_at_most(k: usize, cap: usize) -> bool {
    let mut f: usize = 1;
    for i in 2..=k {
        f = match f.checked_mul(i) {
            Some(x) if x <= cap => x,
            _ => return false,
        };
    }
    true
}

/// Distinct orderings of `values`, original order first.
///
/// All orderings when there are at most `cap`; otherwise `cap` distinct
/// orderings drawn uniformly at random.
pub fn permutations<R: Rng + ?Sized>(values: &[String], cap: usize, rng: &mut R) -> Vec<Vec<String>> {
    let cap = cap.max(1);
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut out = Vec::new();
    if factorial_at_most(values.len(), cap) {
        for p in values.iter().cloned().permutations(values.len()) {
            if seen.insert(p.clone()) {
                out.push(p);
            }
        }
        return out;
    }
    seen.insert(values.to_vec());
    out.push(values.to_vec());
    let mut attempts = 0;
    while out.len() < cap && attempts < cap * 50 {
        attempts += 1;
        let mut p = values.to_vec();
        p.shuffle(rng);
        if seen.insert(p.clone()) {
            out.push(p);
        }
    }
    out
}

/// One sample per ordering of the sample's target values. Domain-slot
/// samples and empty targets pass through unchanged.
pub fn permute_values<R: Rng + ?Sized>(
    sample: &TrainingSample,
    cap: usize,
    none_marker: &str,
    rng: &mut R,
) -> Vec<TrainingSample> {
    if sample.kind != SampleKind::ValueGeneration || sample.target_values.len() < 2 {
        return vec![sample.clone()];
    }
    permutations(&sample.target_values, cap, rng)
        .into_iter()
        .enumerate()
        .map(|(i, values)| TrainingSample {
            id: format!("{}/p{i}", sample.id),
            target_text: join_target(&values, none_marker),
            target_values: values,
            ..sample.clone()
        })
        .collect()
}

/// Seed for a sample's permutation stream, independent of processing order.
fn sample_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Permutes every sample with a per-sample RNG stream derived from `seed`.
pub fn permute_all(samples: &[TrainingSample], cap: usize, none_marker: &str, seed: u64) -> Vec<TrainingSample> {
    samples
        .iter()
        .flat_map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, &s.id));
            permute_values(s, cap, none_marker, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub split: String,
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
    pub config_digest: String,
    /// SHA-256 of each written file.
    pub files: BTreeMap<String, String>,
}

fn jsonl<T: Serialize>(items: &[&T]) -> io::Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes `{split}-values.jsonl`, `{split}-domainslots.jsonl` and
/// `manifest.json` into `dir`. Output depends only on the inputs.
pub fn export_training(
    samples: &[TrainingSample],
    dir: &Path,
    split: &str,
    config_digest: &str,
) -> io::Result<ExportManifest> {
    if samples.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no training samples to export"));
    }
    fs::create_dir_all(dir)?;
    let mut counts = BTreeMap::new();
    let mut files = BTreeMap::new();
    for (kind, suffix) in [
        (SampleKind::ValueGeneration, "values"),
        (SampleKind::DomainSlotGeneration, "domainslots"),
    ] {
        let subset: Vec<&TrainingSample> = samples.iter().filter(|s| s.kind == kind).collect();
        let name = format!("{split}-{suffix}.jsonl");
        let bytes = jsonl(&subset)?;
        files.insert(name.clone(), hex::encode(Sha256::digest(&bytes)));
        fs::write(dir.join(&name), bytes)?;
        counts.insert(suffix.to_owned(), subset.len());
    }
    let manifest = ExportManifest {
        split: split.to_owned(),
        total: counts.values().sum(),
        counts,
        config_digest: config_digest.to_owned(),
        files,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}
