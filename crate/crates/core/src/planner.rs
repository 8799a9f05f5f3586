//! Domain planning: which domains can share a dialogue, and how their
//! slots refer to one another.
//!
//! The flow is enumerate → judge → generate seeds → filter. A seed state
//! maps `domain-slot` keys to a literal value, a blank to be filled later, or
//! a reference to a slot of another domain (a co-reference link). The
//! [`RuleSet`] removes links that make no logical sense before any state is
//! synthesized from the seed.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::json::{extract_array, extract_object, scalar_text};
use crate::llm::{ChatRequest, LlmClient, LlmError, Message, Stage};
use crate::normalize::is_clock_time;
use crate::prompts;
use crate::schema::{split_slot, Schema, SlotKind};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("need at least two domains, got {0}")]
    TooFewDomains(usize),
    #[error("combination {0} was judged unreasonable")]
    NotReasonable(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Two or three domains that may appear together in one dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainCombo(Vec<String>);

impl DomainCombo {
    /// Sorts and deduplicates; `None` unless two or three distinct domains remain.
    pub fn new<I, S>(domains: I) -> Option<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = domains.into_iter().map(Into::into).collect();
        (2..=3).contains(&set.len()).then(|| Self(set.into_iter().collect()))
    }

    pub fn domains(&self) -> &[String] {
        &self.0
    }

    pub fn contains(&self, domain: &str) -> bool {
        self.0.iter().any(|d| d == domain)
    }

    pub fn id(&self) -> String {
        self.0.join("+")
    }
}

impl fmt::Display for DomainCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(", "))
    }
}

/// Every 2- and 3-subset of `domains`: pairs first, then triples, each in
/// lexicographic order.
pub fn enumerate_combos(domains: &[String]) -> Result<Vec<DomainCombo>, PlannerError> {
    let sorted: Vec<&String> = domains.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if sorted.len() < 2 {
        return Err(PlannerError::TooFewDomains(sorted.len()));
    }
    Ok((2..=3)
        .flat_map(|k| sorted.iter().copied().combinations(k))
        .filter_map(DomainCombo::new)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub combo: DomainCombo,
    pub is_reasonable: bool,
    pub explanation: String,
    /// The raw model answer; later prompts continue this conversation.
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JudgeOutcome {
    Parsed(Judgment),
    Unparseable { combo: DomainCombo, raw: String },
}

impl JudgeOutcome {
    pub fn combo(&self) -> &DomainCombo {
        match self {
            JudgeOutcome::Parsed(j) => &j.combo,
            JudgeOutcome::Unparseable { combo, .. } => combo,
        }
    }

    pub fn reasonable(&self) -> Option<&Judgment> {
        match self {
            JudgeOutcome::Parsed(j) if j.is_reasonable => Some(j),
            _ => None,
        }
    }
}

fn judgment_request(schema: &Schema, combo: &DomainCombo) -> Result<ChatRequest, LlmError> {
    ChatRequest::new(
        Stage::Judge,
        vec![Message::user(prompts::judgment(schema, combo.domains()))],
    )
}

/// Parses `{"is_reasonable": 0|1, "explanation": "..."}` out of model text.
pub fn parse_judgment(combo: &DomainCombo, raw: &str) -> JudgeOutcome {
    let unparseable = || JudgeOutcome::Unparseable { combo: combo.clone(), raw: raw.to_owned() };
    let Some(obj) = extract_object(raw) else {
        return unparseable();
    };
    let flag = match obj.get("is_reasonable") {
        Some(serde_json::Value::Bool(b)) => Some(*b),
        Some(serde_json::Value::Number(n)) => n.as_f64().map(|x| x >= 0.5),
        Some(serde_json::Value::String(s)) => match s.trim() {
            "1" | "true" | "yes" => Some(true),
            "0" | "false" | "no" => Some(false),
            _ => None,
        },
        _ => None,
    };
    let explanation = obj
        .get("explanation")
        .and_then(|v| v.as_str())
        .map(str::trim)
        .unwrap_or_default();
    match flag {
        Some(is_reasonable) if !explanation.is_empty() => JudgeOutcome::Parsed(Judgment {
            combo: combo.clone(),
            is_reasonable,
            explanation: explanation.to_owned(),
            raw: raw.to_owned(),
        }),
        _ => unparseable(),
    }
}

/// Asks the model whether `combo` makes a plausible dialogue.
pub fn judge_combo(
    llm: &LlmClient,
    schema: &Schema,
    combo: &DomainCombo,
) -> Result<JudgeOutcome, LlmError> {
    let raw = llm.text(&judgment_request(schema, combo)?)?;
    let outcome = parse_judgment(combo, &raw);
    if let JudgeOutcome::Unparseable { .. } = outcome {
        log::warn!("judgment for {} could not be parsed; skipping", combo.id());
    }
    Ok(outcome)
}

/// A seed entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSpec {
    Literal(String),
    Blank,
    /// Same value as the named `domain-slot` of another domain.
    Reference(String),
}

/// `target` takes its value from `source`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CorefLink {
    pub target: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedState {
    pub id: String,
    pub combo: DomainCombo,
    pub entries: IndexMap<String, ValueSpec>,
}

impl SeedState {
    pub fn coref(&self) -> Vec<CorefLink> {
        self.entries
            .iter()
            .filter_map(|(k, v)| match v {
                ValueSpec::Reference(src) => Some(CorefLink { target: k.clone(), source: src.clone() }),
                _ => None,
            })
            .collect()
    }

    /// Domains in order of first appearance among the keys.
    pub fn domains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for key in self.entries.keys() {
            if let Some((d, _)) = split_slot(key) {
                if !out.iter().any(|x| x == d) {
                    out.push(d.to_owned());
                }
            }
        }
        out
    }
}

/// Classifies one raw seed value.
///
/// Empty strings are blanks; `domain-slot` strings whose domain belongs to
/// the combination are references (canonicalized when the schema knows the
/// slot); anything else is a literal.
pub fn classify_value(schema: &Schema, combo: &DomainCombo, raw: &str) -> ValueSpec {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return ValueSpec::Blank;
    }
    let lower = trimmed.to_lowercase();
    if let Some((d, _)) = split_slot(&lower) {
        if combo.contains(d) {
            return ValueSpec::Reference(schema.resolve(&lower).unwrap_or(lower));
        }
    }
    ValueSpec::Literal(trimmed.to_owned())
}

/// Turns each dictionary in the model's list into a seed. Keys are
/// canonicalized when the schema recognizes them and kept verbatim
/// otherwise, so that the filter can reject them.
pub fn parse_seed_states(
    schema: &Schema,
    combo: &DomainCombo,
    raw: &str,
    id_prefix: &str,
) -> Option<Vec<SeedState>> {
    let list = extract_array(raw)?;
    let seeds = list
        .iter()
        .filter_map(|item| item.as_object())
        .enumerate()
        .map(|(i, obj)| {
            let entries = obj
                .iter()
                .map(|(k, v)| {
                    let key = schema.resolve(k).unwrap_or_else(|| k.trim().to_lowercase());
                    let value = match scalar_text(v) {
                        Some(text) => classify_value(schema, combo, &text),
                        None => ValueSpec::Literal(v.to_string()),
                    };
                    (key, value)
                })
                .collect();
            SeedState { id: format!("{id_prefix}/s{i}"), combo: combo.clone(), entries }
        })
        .collect();
    Some(seeds)
}

pub fn seed_request(schema: &Schema, judgment: &Judgment) -> Result<ChatRequest, LlmError> {
    ChatRequest::new(
        Stage::Seed,
        vec![
            Message::user(prompts::judgment(schema, judgment.combo.domains())),
            Message::assistant(judgment.raw.clone()),
            Message::user(prompts::SEED_STATES),
        ],
    )
}

/// Requests seed states for a reasonable combination. A response without a
/// parseable list yields no seeds.
pub fn generate_seed_states(
    llm: &LlmClient,
    schema: &Schema,
    judgment: &Judgment,
) -> Result<Vec<SeedState>, PlannerError> {
    if !judgment.is_reasonable {
        return Err(PlannerError::NotReasonable(judgment.combo.id()));
    }
    let raw = llm.text(&seed_request(schema, judgment)?)?;
    match parse_seed_states(schema, &judgment.combo, &raw, &judgment.combo.id()) {
        Some(seeds) => Ok(seeds),
        None => {
            log::warn!("no seed list found for {}", judgment.combo.id());
            Ok(Vec::new())
        }
    }
}

/// Identifiers of the link-rejection rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
}

impl RuleId {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::R1 => "R1",
            RuleId::R2 => "R2",
            RuleId::R3 => "R3",
            RuleId::R4 => "R4",
            RuleId::R5 => "R5",
            RuleId::R6 => "R6",
            RuleId::R7 => "R7",
        }
    }
}

/// A pure predicate over one link; `true` means the link must go.
pub struct Rule {
    pub id: RuleId,
    pub description: &'static str,
    pub violates: fn(&Schema, &CorefLink) -> bool,
}

impl fmt::Debug for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id.as_str(), self.description)
    }
}

fn slot_part(key: &str) -> &str {
    split_slot(key).map(|(_, s)| s).unwrap_or(key)
}

fn domain_part(key: &str) -> &str {
    split_slot(key).map(|(d, _)| d).unwrap_or(key)
}

const TIMES: [&str; 3] = ["arriveby", "leaveat", "book time"];
const DAYS: [&str; 2] = ["day", "book day"];

fn r1(_: &Schema, l: &CorefLink) -> bool {
    matches!(slot_part(&l.target), "departure" | "destination") && slot_part(&l.source) == "area"
}

fn r2(_: &Schema, l: &CorefLink) -> bool {
    let (t, s) = (slot_part(&l.target), slot_part(&l.source));
    (TIMES.contains(&t) && DAYS.contains(&s)) || (DAYS.contains(&t) && TIMES.contains(&s))
}

fn r3(_: &Schema, l: &CorefLink) -> bool {
    slot_part(&l.target) == "area" && slot_part(&l.source) != "area"
}

fn r4(_: &Schema, l: &CorefLink) -> bool {
    matches!(l.target.as_str(), "train-destination" | "train-departure")
        && domain_part(&l.source) != "train"
}

fn r5(_: &Schema, l: &CorefLink) -> bool {
    domain_part(&l.target) == domain_part(&l.source)
}

fn r6(schema: &Schema, l: &CorefLink) -> bool {
    schema.slot(&l.target).is_none() || schema.slot(&l.source).is_none()
}

fn r7(_: &Schema, l: &CorefLink) -> bool {
    let pair = |a: &str, b: &str| a == "taxi-leaveat" && slot_part(b) == "book time";
    pair(&l.target, &l.source) || pair(&l.source, &l.target)
}

/// Ordered rejection rules.
#[derive(Debug)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl Default for RuleSet {
    /// R1 departure/destination never come from an area; R2 times and days
    /// never refer to each other; R3 an area only comes from an area; R4 train
    /// endpoints never come from another domain; R5 endpoints lie in
    /// different domains; R6 both endpoints are schema slots; R7 a taxi never
    /// leaves at a reservation time.
    fn default() -> Self {
        let rule = |id, description, violates| Rule { id, description, violates };
        Self {
            rules: vec![
                rule(RuleId::R1, "departure/destination cannot be inferred from an area", r1),
                rule(RuleId::R2, "times and days cannot be inferred from each other", r2),
                rule(RuleId::R3, "area can only be inferred from area", r3),
                rule(RuleId::R4, "train departure/destination cannot be inferred from other domains", r4),
                rule(RuleId::R5, "linked slots must be in different domains", r5),
                rule(RuleId::R6, "linked slots must exist in the schema", r6),
                rule(RuleId::R7, "taxi leave-at cannot be tied to a booking time", r7),
            ],
        }
    }
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        let mut seen = BTreeSet::new();
        for r in &rules {
            assert!(seen.insert(r.id), "duplicate rule id {}", r.id.as_str());
        }
        Self { rules }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// First rule the link violates, if any.
    pub fn check(&self, schema: &Schema, link: &CorefLink) -> Option<RuleId> {
        self.rules.iter().find(|r| (r.violates)(schema, link)).map(|r| r.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedLink {
    pub target: String,
    pub source: String,
    pub rule: RuleId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub seed: SeedState,
    pub removed: Vec<RemovedLink>,
    /// Why the whole seed was discarded, if it was.
    pub rejected: Option<String>,
    /// The seed had links and the rules removed all of them.
    pub lost_all_links: bool,
}

fn structural_problem(schema: &Schema, seed: &SeedState) -> Option<String> {
    if seed.entries.is_empty() {
        return Some("empty seed".into());
    }
    for (key, value) in &seed.entries {
        let Some(spec) = schema.slot(key) else {
            return Some(format!("unknown slot `{key}`"));
        };
        if !seed.combo.contains(domain_part(key)) {
            return Some(format!("slot `{key}` is outside the combination {}", seed.combo));
        }
        if let ValueSpec::Literal(v) = value {
            if schema.resolve(v).is_some() {
                return Some(format!("`{key}` refers to `{v}` outside the combination"));
            }
            let ok = match spec.kind {
                SlotKind::Time => is_clock_time(v) || crate::normalize::is_dontcare(v),
                _ => spec.admits(v),
            };
            if !ok {
                return Some(format!("`{key}` has inadmissible value `{v}`"));
            }
        }
    }
    None
}

/// Removes rule-violating links and rejects structurally broken seeds.
///
/// A removed link's entry becomes blank. Sources of surviving links that the
/// seed does not list are added as blanks so the synthesized state carries
/// both ends of every link.
pub fn filter_seed_state(seed: &SeedState, schema: &Schema, rules: &RuleSet) -> FilterOutcome {
    if let Some(reason) = structural_problem(schema, seed) {
        return FilterOutcome {
            seed: seed.clone(),
            removed: Vec::new(),
            rejected: Some(reason),
            lost_all_links: false,
        };
    }
    let had_links = seed.entries.values().any(|v| matches!(v, ValueSpec::Reference(_)));
    let mut cleaned = seed.clone();
    let mut removed = Vec::new();
    for (key, value) in cleaned.entries.iter_mut() {
        if let ValueSpec::Reference(source) = value {
            let link = CorefLink { target: key.clone(), source: source.clone() };
            if let Some(rule) = rules.check(schema, &link) {
                removed.push(RemovedLink { target: link.target, source: link.source, rule });
                *value = ValueSpec::Blank;
            }
        }
    }
    for link in cleaned.coref() {
        if !cleaned.entries.contains_key(&link.source) {
            cleaned.entries.insert(link.source.clone(), ValueSpec::Blank);
        }
    }
    let lost_all_links = had_links && cleaned.coref().is_empty();
    FilterOutcome { seed: cleaned, removed, rejected: None, lost_all_links }
}
