//! Grounding seed states into complete dialogue states.
//!
//! Domains are visited in dependency order so that a referenced value is
//! always known before the slot that copies it. For every domain with an
//! entity table, the literal constraints plus any already-resolved
//! references become database filters and one matching entity is drawn at
//! random. Slots no table covers (booking details, taxi times and places)
//! are sampled directly.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{is_dontcare, parse_time, DONTCARE};
use crate::planner::{CorefLink, SeedState, ValueSpec};
use crate::schema::{split_slot, Database, Entity, Schema, SlotKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("reference cycle among domains {0:?}")]
    Cycle(Vec<String>),
    #[error("no entity satisfies the constraints for `{domain}` after {attempts} attempts")]
    Unsatisfiable { domain: String, attempts: u32 },
    #[error("slot `{0}` is not in the schema")]
    UnknownSlot(String),
    #[error("could not ground `{0}`")]
    Ungroundable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub id: String,
    pub seed_id: String,
    pub combo: String,
    pub entries: IndexMap<String, String>,
    pub coref: Vec<CorefLink>,
    /// Entity drawn for each table-backed domain, keyed by domain.
    pub entities: IndexMap<String, Entity>,
    pub rng_seed: u64,
}

impl DialogueState {
    pub fn domains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for k in self.entries.keys() {
            if let Some((d, _)) = split_slot(k) {
                if !out.iter().any(|x| x == d) {
                    out.push(d.to_owned());
                }
            }
        }
        out
    }
}

/// Domain order in which every reference source precedes its target.
///
/// Ties go to the domain that appears first in the seed.
pub fn dependency_order(seed: &SeedState) -> Result<Vec<String>, SynthError> {
    let mut domains = seed.domains();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for link in seed.coref() {
        let (Some((t, _)), Some((s, _))) = (split_slot(&link.target), split_slot(&link.source)) else {
            continue;
        };
        if !domains.iter().any(|d| d == s) {
            domains.push(s.to_owned());
        }
        let ti = domains.iter().position(|d| d == t).expect("target domain listed");
        let si = domains.iter().position(|d| d == s).expect("source domain listed");
        if ti != si {
            edges.insert((si, ti));
        }
    }
    let n = domains.len();
    let mut indegree = vec![0usize; n];
    for &(_, t) in &edges {
        indegree[t] += 1;
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let Some(next) = (0..n).find(|&i| !done[i] && indegree[i] == 0) else {
            let stuck = (0..n).filter(|&i| !done[i]).map(|i| domains[i].clone()).collect();
            return Err(SynthError::Cycle(stuck));
        };
        done[next] = true;
        order.push(domains[next].clone());
        for &(s, t) in &edges {
            if s == next {
                indegree[t] -= 1;
            }
        }
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Extra attempts after an empty database query.
    pub retry_cap: u32,
    /// Chance that a categorical literal becomes `dontcare`.
    pub dontcare_prob: f64,
    /// Time grid in minutes since midnight: start, end (inclusive), step.
    pub time_grid: (u32, u32, u32),
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { retry_cap: 10, dontcare_prob: 0.05, time_grid: (8 * 60, 22 * 60, 15) }
    }
}

impl SynthConfig {
    fn grid(&self) -> Vec<String> {
        let (start, end, step) = self.time_grid;
        (start..=end)
            .step_by(step.max(1) as usize)
            .map(|m| format!("{:02}:{:02}", m / 60, m % 60))
            .collect()
    }
}

/// Stateless sampler over a shared schema and database.
pub struct StateSampler<'a> {
    pub schema: &'a Schema,
    pub db: &'a Database,
    pub config: SynthConfig,
}

enum Attempt {
    Done(Box<DialogueState>),
    Empty(String),
}

impl<'a> StateSampler<'a> {
    pub fn new(schema: &'a Schema, db: &'a Database, config: SynthConfig) -> Self {
        Self { schema, db, config }
    }

    /// Grounds one state, resampling after empty queries up to the retry cap.
    pub fn fill<R: Rng + ?Sized>(&self, seed: &SeedState, rng: &mut R) -> Result<DialogueState, SynthError> {
        let order = dependency_order(seed)?;
        for key in seed.entries.keys() {
            if self.schema.slot(key).is_none() {
                return Err(SynthError::UnknownSlot(key.clone()));
            }
        }
        let attempts = self.config.retry_cap + 1;
        let mut last = String::new();
        for _ in 0..attempts {
            match self.attempt(seed, &order, rng)? {
                Attempt::Done(state) => return Ok(*state),
                Attempt::Empty(domain) => last = domain,
            }
        }
        Err(SynthError::Unsatisfiable { domain: last, attempts })
    }

    fn attempt<R: Rng + ?Sized>(
        &self,
        seed: &SeedState,
        order: &[String],
        rng: &mut R,
    ) -> Result<Attempt, SynthError> {
        let coref = seed.coref();
        let linked: BTreeSet<&str> = coref
            .iter()
            .flat_map(|l| [l.target.as_str(), l.source.as_str()])
            .collect();

        let mut values: IndexMap<String, Option<String>> = IndexMap::new();
        for (key, spec) in &seed.entries {
            let v = match spec {
                ValueSpec::Literal(v) => {
                    let slot = self.schema.slot(key).expect("checked");
                    let inject = slot.has_pool()
                        && !linked.contains(key.as_str())
                        && self.config.dontcare_prob > 0.0
                        && rng.random::<f64>() < self.config.dontcare_prob;
                    Some(if inject { DONTCARE.to_owned() } else { v.clone() })
                }
                _ => None,
            };
            values.insert(key.clone(), v);
        }

        let mut entities: IndexMap<String, Entity> = IndexMap::new();
        for domain in order {
            let keys: Vec<String> = seed
                .entries
                .keys()
                .filter(|k| split_slot(k).is_some_and(|(d, _)| d == domain))
                .cloned()
                .collect();

            for key in &keys {
                if let ValueSpec::Reference(source) = &seed.entries[key] {
                    let v = values
                        .get(source)
                        .cloned()
                        .flatten()
                        .ok_or_else(|| SynthError::Ungroundable(key.clone()))?;
                    values.insert(key.clone(), Some(v));
                }
            }

            let spec = self.schema.domain(domain).expect("domain of a known slot");
            if let Some(table) = self.db.table(domain) {
                let mut filters: Vec<(String, String)> = Vec::new();
                for key in &keys {
                    let (_, slot) = split_slot(key).expect("canonical key");
                    let backed = spec.slot(slot).is_some_and(|s| s.db_field.is_some());
                    if let (true, Some(v)) = (backed, &values[key]) {
                        if !is_dontcare(v) {
                            filters.push((slot.to_owned(), v.clone()));
                        }
                    }
                }
                let needs_entity = !table.is_empty()
                    && keys.iter().any(|k| {
                        let (_, slot) = split_slot(k).expect("canonical key");
                        spec.slot(slot).is_some_and(|s| s.db_field.is_some())
                    });
                if needs_entity {
                    let hits = self
                        .db
                        .query(self.schema, domain, filters.iter().map(|(k, v)| (k, v)))
                        .map_err(|_| SynthError::Ungroundable(domain.clone()))?;
                    let Some(entity) = hits.choose(rng) else {
                        return Ok(Attempt::Empty(domain.clone()));
                    };
                    for key in &keys {
                        let (_, slot) = split_slot(key).expect("canonical key");
                        if values[key].is_none() {
                            if let Some(field) = spec.slot(slot).and_then(|s| s.db_field.as_ref()) {
                                values.insert(key.clone(), entity.get(field).cloned());
                            }
                        }
                    }
                    entities.insert(domain.clone(), (*entity).clone());
                }
            }

            self.sample_free_slots(domain, &keys, &mut values, &entities, rng);
        }

        let mut entries = IndexMap::new();
        for (key, v) in values {
            let v = v.ok_or_else(|| SynthError::Ungroundable(key.clone()))?;
            let slot = self.schema.slot(&key).expect("checked");
            if !slot.admits(&v) {
                return Ok(Attempt::Empty(split_slot(&key).map(|(d, _)| d).unwrap_or("?").to_owned()));
            }
            entries.insert(key, v);
        }
        for domain in order {
            let time = |k: String| entries.get(&k).and_then(|v: &String| parse_time(v));
            if let (Some(l), Some(a)) = (time(format!("{domain}-leaveat")), time(format!("{domain}-arriveby"))) {
                if l >= a {
                    return Ok(Attempt::Empty(domain.clone()));
                }
            }
        }
        Ok(Attempt::Done(Box::new(DialogueState {
            id: seed.id.clone(),
            seed_id: seed.id.clone(),
            combo: seed.combo.id(),
            entries,
            coref,
            entities,
            rng_seed: 0,
        })))
    }

    fn sample_free_slots<R: Rng + ?Sized>(
        &self,
        domain: &str,
        keys: &[String],
        values: &mut IndexMap<String, Option<String>>,
        entities: &IndexMap<String, Entity>,
        rng: &mut R,
    ) {
        let grid = self.config.grid();
        let blank = |values: &IndexMap<String, Option<String>>, k: &str| {
            values.get(k).is_some_and(Option::is_none)
        };

        let leave = format!("{domain}-leaveat");
        let arrive = format!("{domain}-arriveby");
        if blank(values, &leave) && blank(values, &arrive) && grid.len() >= 2 {
            let mut picks = grid.choose_multiple(rng, 2).cloned().collect::<Vec<_>>();
            picks.sort();
            values.insert(leave.clone(), Some(picks[0].clone()));
            values.insert(arrive.clone(), Some(picks[1].clone()));
        }

        for key in keys {
            if !blank(values, key) {
                continue;
            }
            let slot = self.schema.slot(key).expect("checked");
            let (_, name) = split_slot(key).expect("canonical key");
            let value = match slot.kind {
                SlotKind::Time if *key == leave || *key == arrive => {
                    let other = if *key == leave { &arrive } else { &leave };
                    match values.get(other).cloned().flatten().as_deref().and_then(parse_time) {
                        Some((h, m)) => {
                            let anchor = (h * 60 + m) as i64;
                            let sign = if *key == leave { -1 } else { 1 };
                            let options: Vec<String> = (1..=8)
                                .map(|k| anchor + sign * 15 * k)
                                .filter(|t| (0..24 * 60).contains(t))
                                .map(|t| format!("{:02}:{:02}", t / 60, t % 60))
                                .collect();
                            options.choose(rng).cloned()
                        }
                        None => grid.choose(rng).cloned(),
                    }
                }
                SlotKind::Time => grid.choose(rng).cloned(),
                SlotKind::Categorical | SlotKind::Boolean => {
                    slot.pool.as_deref().unwrap_or_default().choose(rng).cloned()
                }
                SlotKind::Open if matches!(name, "departure" | "destination") => {
                    let other = if name == "departure" { "destination" } else { "departure" };
                    let taken = values.get(&format!("{domain}-{other}")).cloned().flatten();
                    self.place_name(entities, taken.as_deref(), rng)
                }
                SlotKind::Open => None,
            };
            values.insert(key.clone(), value);
        }
    }

    /// A place for taxi endpoints: an entity already in the dialogue when
    /// possible, otherwise any named entity in the database.
    fn place_name<R: Rng + ?Sized>(
        &self,
        entities: &IndexMap<String, Entity>,
        exclude: Option<&str>,
        rng: &mut R,
    ) -> Option<String> {
        let local: Vec<&String> = entities
            .values()
            .filter_map(|e| e.get("name"))
            .filter(|n| Some(n.as_str()) != exclude)
            .collect();
        if let Some(n) = local.choose(rng) {
            return Some((*n).clone());
        }
        let global: Vec<&String> = self
            .db
            .tables
            .values()
            .flatten()
            .filter_map(|e| e.get("name"))
            .filter(|n| Some(n.as_str()) != exclude)
            .collect();
        global.choose(rng).map(|n| (*n).clone())
    }

    /// Up to `n` distinct states for one seed, each from its own RNG stream.
    ///
    /// Draws at most `3 * n` candidates; an unsatisfiable seed yields none.
    pub fn expand<R: Rng + ?Sized>(&self, seed: &SeedState, n: usize, rng: &mut R) -> Vec<DialogueState> {
        let mut out: Vec<DialogueState> = Vec::new();
        for _ in 0..n.saturating_mul(3) {
            if out.len() >= n {
                break;
            }
            let stream = rng.next_u64();
            let mut sub = ChaCha8Rng::seed_from_u64(stream);
            match self.fill(seed, &mut sub) {
                Ok(mut state) => {
                    if out.iter().any(|s| s.entries == state.entries) {
                        continue;
                    }
                    state.id = format!("{}/n{}", seed.id, out.len());
                    state.rng_seed = stream;
                    out.push(state);
                }
                Err(e) => {
                    log::debug!("seed {} not grounded: {e}", seed.id);
                    if !matches!(e, SynthError::Unsatisfiable { .. }) {
                        break;
                    }
                }
            }
        }
        out
    }
}

/// Convenience wrapper around [`StateSampler::fill`] with default settings.
pub fn fill_state<R: Rng + ?Sized>(
    seed: &SeedState,
    schema: &Schema,
    db: &Database,
    rng: &mut R,
) -> Result<DialogueState, SynthError> {
    StateSampler::new(schema, db, SynthConfig::default()).fill(seed, rng)
}

/// Convenience wrapper around [`StateSampler::expand`] with default settings.
pub fn expand_seed<R: Rng + ?Sized>(
    seed: &SeedState,
    schema: &Schema,
    db: &Database,
    n: usize,
    rng: &mut R,
) -> Vec<DialogueState> {
    StateSampler::new(schema, db, SynthConfig::default()).expand(seed, n, rng)
}
