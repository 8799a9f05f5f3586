//! User goals, dialogue flows and generated dialogues, plus the hard
//! checks that decide which dialogues are kept.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::llm::json::{extract_array, scalar_text};
use crate::llm::{ChatRequest, LlmClient, LlmError, Message, Stage};
use crate::normalize::{match_form, normalize};
use crate::prompts;
use crate::schema::{split_slot, Schema};
use crate::synth::DialogueState;

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("goal for {state_id} names {names:?} even after regeneration")]
    NameLeak { state_id: String, names: Vec<String> },
    #[error("empty goal for {0}")]
    EmptyGoal(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Agent,
    User,
}

impl Role {
    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "agent" | "system" | "assistant" => Some(Role::Agent),
            "user" => Some(Role::User),
            _ => None,
        }
    }

    fn at(index: usize) -> Self {
        if index.is_multiple_of(2) {
            Role::Agent
        } else {
            Role::User
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Agent => "agent",
            Role::User => "user",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGoal {
    pub state_id: String,
    pub text: String,
}

/// Recommendable entity names from the state that occur in `goal`.
pub fn leaked_names(goal: &str, state: &IndexMap<String, String>) -> Vec<String> {
    let text = format!(" {} ", match_form(goal));
    let mut out: Vec<String> = Vec::new();
    for (key, value) in state {
        let is_name = split_slot(key).is_some_and(|(d, s)| {
            s == "name" && matches!(d, "restaurant" | "hotel" | "attraction")
        });
        let form = match_form(&normalize(value));
        if is_name && !form.is_empty() && text.contains(&format!(" {form} ")) && !out.contains(value) {
            out.push(value.clone());
        }
    }
    out
}

pub fn goal_request(state: &DialogueState) -> Result<ChatRequest, LlmError> {
    ChatRequest::new(Stage::Goal, vec![Message::user(prompts::user_goal(&state.entries))])
}

/// Generates a goal; a goal naming an entity is regenerated once and then
/// rejected.
pub fn generate_user_goal(llm: &LlmClient, state: &DialogueState) -> Result<UserGoal, DialogueError> {
    let first = goal_request(state)?;
    let text = llm.text(&first)?.trim().to_owned();
    let leaks = leaked_names(&text, &state.entries);
    let text = if leaks.is_empty() {
        text
    } else {
        log::info!("goal for {} names {:?}; regenerating", state.id, leaks);
        let mut messages = first.messages.clone();
        messages.push(Message::assistant(text));
        messages.push(Message::user(prompts::goal_name_leak(&leaks)));
        let retry = ChatRequest::new(Stage::Goal, messages)?;
        let again = llm.text(&retry)?.trim().to_owned();
        let leaks = leaked_names(&again, &state.entries);
        if !leaks.is_empty() {
            return Err(DialogueError::NameLeak { state_id: state.id.clone(), names: leaks });
        }
        again
    };
    if text.is_empty() {
        return Err(DialogueError::EmptyGoal(state.id.clone()));
    }
    Ok(UserGoal { state_id: state.id.clone(), text })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTurn {
    pub role: Role,
    pub description: String,
    pub turn_state: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: String,
    pub state_id: String,
    pub turns: Vec<FlowTurn>,
}

fn parse_turn_state(schema: &Schema, v: Option<&Value>) -> Option<IndexMap<String, String>> {
    let Some(v) = v else {
        return Some(IndexMap::new());
    };
    match v {
        Value::Null => Some(IndexMap::new()),
        Value::Object(map) => map
            .iter()
            .map(|(k, v)| {
                let key = schema.resolve(k).unwrap_or_else(|| k.trim().to_lowercase());
                scalar_text(v).map(|s| (key, s.trim().to_owned()))
            })
            .collect(),
        _ => None,
    }
}

/// Parses a flow list. Missing roles are inferred from position.
pub fn parse_flow(schema: &Schema, raw: &str) -> Option<Vec<FlowTurn>> {
    let list = extract_array(raw)?;
    if list.is_empty() {
        return None;
    }
    list.iter()
        .enumerate()
        .map(|(i, item)| {
            let obj = item.as_object()?;
            let role = match obj.get("role").and_then(Value::as_str) {
                Some(r) => Role::parse(r)?,
                None => Role::at(i),
            };
            let description = obj.get("description").and_then(Value::as_str).unwrap_or_default();
            let state = obj
                .get("turn state")
                .or_else(|| obj.get("turn_state"))
                .or_else(|| obj.get("state"));
            Some(FlowTurn {
                role,
                description: description.trim().to_owned(),
                turn_state: parse_turn_state(schema, state)?,
            })
        })
        .collect()
}

pub fn flow_request(state: &DialogueState, goal: &UserGoal) -> Result<ChatRequest, LlmError> {
    ChatRequest::new(
        Stage::Flow,
        vec![Message::user(prompts::dialogue_flow(&state.entries, &goal.text, &state.entities))],
    )
}

/// Sends `request`, parsing with `parse`; one repair round on failure.
fn ask_with_repair<T>(
    llm: &LlmClient,
    request: ChatRequest,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Option<T>, LlmError> {
    let raw = llm.text(&request)?;
    if let Some(v) = parse(&raw) {
        return Ok(Some(v));
    }
    let mut messages = request.messages.clone();
    messages.push(Message::assistant(raw));
    messages.push(Message::user(prompts::REPAIR_JSON_LIST));
    let retry = ChatRequest {
        messages,
        ..request
    };
    Ok(parse(&llm.text(&retry)?))
}

/// Plans a flow; `None` when the answer cannot be parsed after one repair.
pub fn plan_flow(
    llm: &LlmClient,
    schema: &Schema,
    state: &DialogueState,
    goal: &UserGoal,
) -> Result<Option<Flow>, LlmError> {
    let turns = ask_with_repair(llm, flow_request(state, goal)?, |raw| parse_flow(schema, raw))?;
    Ok(turns.map(|turns| Flow { id: format!("{}/f", state.id), state_id: state.id.clone(), turns }))
}

/// Largest number of first-mentioned slots a single user turn may carry.
pub const MAX_NEW_CONSTRAINTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowViolation {
    Empty,
    FirstNotAgent,
    LastNotUser,
    NotAlternating { turn: usize },
    Missing { slot: String },
    Extra { slot: String },
    ValueMismatch { turn: usize, slot: String, expected: String, found: String },
    TooManyNewConstraints { turn: usize, count: usize },
}

impl FlowViolation {
    pub fn kind(&self) -> &'static str {
        match self {
            FlowViolation::Empty => "empty",
            FlowViolation::FirstNotAgent => "first_not_agent",
            FlowViolation::LastNotUser => "last_not_user",
            FlowViolation::NotAlternating { .. } => "not_alternating",
            FlowViolation::Missing { .. } => "missing",
            FlowViolation::Extra { .. } => "extra",
            FlowViolation::ValueMismatch { .. } => "value_mismatch",
            FlowViolation::TooManyNewConstraints { .. } => "too_many_new_constraints",
        }
    }
}

/// All ways in which `turns` fails to plan a dialogue for `state`.
pub fn validate_flow(turns: &[FlowTurn], state: &IndexMap<String, String>) -> Vec<FlowViolation> {
    let mut out = Vec::new();
    let (Some(first), Some(last)) = (turns.first(), turns.last()) else {
        return vec![FlowViolation::Empty];
    };
    if first.role != Role::Agent {
        out.push(FlowViolation::FirstNotAgent);
    }
    if last.role != Role::User {
        out.push(FlowViolation::LastNotUser);
    }
    for (i, pair) in turns.windows(2).enumerate() {
        if pair[0].role == pair[1].role {
            out.push(FlowViolation::NotAlternating { turn: i + 1 });
        }
    }

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut extra: Vec<&str> = Vec::new();
    for (i, turn) in turns.iter().enumerate() {
        let mut new = 0;
        for (slot, value) in &turn.turn_state {
            match state.get(slot) {
                Some(expected) if normalize(expected) != normalize(value) => {
                    out.push(FlowViolation::ValueMismatch {
                        turn: i,
                        slot: slot.clone(),
                        expected: expected.clone(),
                        found: value.clone(),
                    });
                }
                None if !extra.contains(&slot.as_str()) => extra.push(slot),
                _ => {}
            }
            if seen.insert(slot) {
                new += 1;
            }
        }
        if turn.role == Role::User && new > MAX_NEW_CONSTRAINTS {
            out.push(FlowViolation::TooManyNewConstraints { turn: i, count: new });
        }
    }
    for slot in state.keys() {
        if !seen.contains(slot.as_str()) {
            out.push(FlowViolation::Missing { slot: slot.clone() });
        }
    }
    out.extend(extra.into_iter().map(|s| FlowViolation::Extra { slot: s.to_owned() }));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub role: Role,
    pub description: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub flow_id: String,
    pub state_id: String,
    pub turns: Vec<DialogueTurn>,
}

/// Parses a generated dialogue. Missing roles are inferred from position;
/// every element needs a string `content`.
pub fn parse_dialogue(raw: &str) -> Option<Vec<DialogueTurn>> {
    let list = extract_array(raw)?;
    if list.is_empty() {
        return None;
    }
    list.iter()
        .enumerate()
        .map(|(i, item)| {
            let obj = item.as_object()?;
            let role = match obj.get("role").and_then(Value::as_str) {
                Some(r) => Role::parse(r)?,
                None => Role::at(i),
            };
            let content = obj
                .get("content")
                .or_else(|| obj.get("utterance"))
                .and_then(Value::as_str)?;
            Some(DialogueTurn {
                role,
                description: obj
                    .get("description")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .trim()
                    .to_owned(),
                content: content.trim().to_owned(),
            })
        })
        .collect()
}

pub fn dialogue_request(flow: &Flow, state: &DialogueState) -> Result<ChatRequest, LlmError> {
    ChatRequest::new(
        Stage::Dialogue,
        vec![Message::user(prompts::dialogue_generation(
            &state.entities,
            &prompts::flow_payload(&flow.turns),
        ))],
    )
}

/// Generates utterances for a flow; `None` when the answer cannot be parsed
/// after one repair.
pub fn generate_dialogue(
    llm: &LlmClient,
    flow: &Flow,
    state: &DialogueState,
) -> Result<Option<Dialogue>, LlmError> {
    let turns = ask_with_repair(llm, dialogue_request(flow, state)?, parse_dialogue)?;
    Ok(turns.map(|turns| Dialogue {
        id: format!("{}/d", flow.state_id),
        flow_id: flow.id.clone(),
        state_id: flow.state_id.clone(),
        turns,
    }))
}

/// First token of 8 letters and digits, with at least one digit.
pub fn find_reference_number(text: &str) -> Option<&str> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .find(|t| t.len() == 8 && t.bytes().any(|b| b.is_ascii_digit()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DialogueViolation {
    TurnCount { expected: usize, found: usize },
    RoleMismatch { turn: usize },
    ValueMissing { turn: usize, slot: String, value: String },
}

impl DialogueViolation {
    pub fn kind(&self) -> &'static str {
        match self {
            DialogueViolation::TurnCount { .. } => "turn_count",
            DialogueViolation::RoleMismatch { .. } => "role_mismatch",
            DialogueViolation::ValueMissing { .. } => "value_missing",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueCheck {
    pub retained: bool,
    pub reasons: Vec<DialogueViolation>,
}

/// Keeps a dialogue iff it matches the flow turn for turn and every turn
/// states its annotated values explicitly.
pub fn validate_dialogue(turns: &[DialogueTurn], flow: &[FlowTurn], lexicon: &Lexicon) -> DialogueCheck {
    let mut reasons = Vec::new();
    if turns.len() != flow.len() {
        reasons.push(DialogueViolation::TurnCount { expected: flow.len(), found: turns.len() });
    } else {
        for (i, (t, f)) in turns.iter().zip(flow).enumerate() {
            if t.role != f.role {
                reasons.push(DialogueViolation::RoleMismatch { turn: i });
            }
            for (slot, value) in &f.turn_state {
                if !lexicon.value_appears(&t.content, slot, value) {
                    reasons.push(DialogueViolation::ValueMissing {
                        turn: i,
                        slot: slot.clone(),
                        value: value.clone(),
                    });
                }
            }
        }
    }
    DialogueCheck { retained: reasons.is_empty(), reasons }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub generated: usize,
    pub retained: usize,
    pub deleted: usize,
    /// `retained / generated`, or `None` for an empty batch.
    pub rate: Option<f64>,
    /// Deleted dialogues per first failure kind.
    pub reasons: BTreeMap<String, usize>,
}

impl RetentionReport {
    pub fn add(&mut self, check: &DialogueCheck) {
        self.generated += 1;
        if check.retained {
            self.retained += 1;
        } else {
            self.deleted += 1;
            if let Some(first) = check.reasons.first() {
                *self.reasons.entry(first.kind().to_owned()).or_default() += 1;
            }
        }
        self.rate = Some(self.retained as f64 / self.generated as f64);
    }

    pub fn from_checks<'a>(checks: impl IntoIterator<Item = &'a DialogueCheck>) -> Self {
        let mut r = Self::default();
        for c in checks {
            r.add(c);
        }
        r
    }

    /// Rate as a percentage rounded to one decimal.
    pub fn percent(&self) -> Option<String> {
        self.rate.map(|r| format!("{:.1}", r * 100.0))
    }
}
