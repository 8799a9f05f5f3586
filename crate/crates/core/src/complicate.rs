//! Turning retained dialogues into labeled exchanges and producing the
//! difficult variant, where co-referring values are expressed implicitly.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{Dialogue, Flow, Role};
use crate::lexicon::Lexicon;
use crate::llm::json::extract_object;
use crate::llm::{ChatRequest, LlmClient, LlmError, Message, Stage};
use crate::planner::CorefLink;
use crate::prompts;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssembleError {
    #[error("dialogue has {dialogue} turns but its flow has {flow}")]
    LengthMismatch { dialogue: usize, flow: usize },
    #[error("odd number of turns ({0}); agent and user turns cannot be paired")]
    OddTurnCount(usize),
    #[error("turn {0} does not follow the agent/user pattern")]
    RoleOrder(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Easy,
    Difficult,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Easy => "easy",
            Variant::Difficult => "difficult",
        })
    }
}

/// One agent utterance followed by the user's reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTurn {
    pub system: String,
    pub user: String,
    pub turn_state: IndexMap<String, String>,
    pub belief_state: IndexMap<String, String>,
    pub coref_slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDialogue {
    pub id: String,
    pub state_id: String,
    pub flow_id: String,
    pub variant: Variant,
    pub coref: Vec<CorefLink>,
    pub turns: Vec<LabeledTurn>,
}

impl LabeledDialogue {
    pub fn final_belief(&self) -> IndexMap<String, String> {
        self.turns.last().map(|t| t.belief_state.clone()).unwrap_or_default()
    }

    /// Whether two dialogues carry the same labels turn by turn.
    pub fn same_annotations(&self, other: &LabeledDialogue) -> bool {
        self.turns.len() == other.turns.len()
            && self.turns.iter().zip(&other.turns).all(|(a, b)| {
                a.turn_state == b.turn_state
                    && a.belief_state == b.belief_state
                    && a.coref_slots == b.coref_slots
            })
    }
}

/// Pairs agent turn `2i` with user turn `2i + 1`; each exchange is labeled
/// with the union of both flow turn states.
pub fn assemble_labeled_dialogue(
    dialogue: &Dialogue,
    flow: &Flow,
    coref: &[CorefLink],
) -> Result<LabeledDialogue, AssembleError> {
    let n = dialogue.turns.len();
    if n != flow.turns.len() {
        return Err(AssembleError::LengthMismatch { dialogue: n, flow: flow.turns.len() });
    }
    if n % 2 == 1 {
        return Err(AssembleError::OddTurnCount(n));
    }
    let mut belief: IndexMap<String, String> = IndexMap::new();
    let mut turns = Vec::with_capacity(n / 2);
    for i in (0..n).step_by(2) {
        let (a, u) = (&dialogue.turns[i], &dialogue.turns[i + 1]);
        if a.role != Role::Agent {
            return Err(AssembleError::RoleOrder(i));
        }
        if u.role != Role::User {
            return Err(AssembleError::RoleOrder(i + 1));
        }
        let mut turn_state = flow.turns[i].turn_state.clone();
        for (k, v) in &flow.turns[i + 1].turn_state {
            turn_state.insert(k.clone(), v.clone());
        }
        for (k, v) in &turn_state {
            belief.insert(k.clone(), v.clone());
        }
        let coref_slots = turn_state
            .keys()
            .filter(|k| coref.iter().any(|l| &l.target == *k))
            .cloned()
            .collect();
        turns.push(LabeledTurn {
            system: a.content.clone(),
            user: u.content.clone(),
            turn_state,
            belief_state: belief.clone(),
            coref_slots,
        });
    }
    Ok(LabeledDialogue {
        id: format!("{}/{}", dialogue.state_id, Variant::Easy),
        state_id: dialogue.state_id.clone(),
        flow_id: flow.id.clone(),
        variant: Variant::Easy,
        coref: coref.to_vec(),
        turns,
    })
}

/// Links whose target is labeled in turn `index` and whose source was
/// already stated in an earlier turn.
pub fn active_links<'a>(ld: &LabeledDialogue, coref: &'a [CorefLink], index: usize) -> Vec<&'a CorefLink> {
    let Some(turn) = ld.turns.get(index) else {
        return Vec::new();
    };
    let earlier = index.checked_sub(1).map(|p| &ld.turns[p].belief_state);
    coref
        .iter()
        .filter(|l| turn.turn_state.contains_key(&l.target))
        .filter(|l| earlier.is_some_and(|b| b.contains_key(&l.source)))
        .collect()
}

/// Indices of turns that can refer back to an earlier value.
pub fn find_coref_turns(ld: &LabeledDialogue, coref: &[CorefLink]) -> Vec<usize> {
    (0..ld.turns.len())
        .filter(|&i| !active_links(ld, coref, i).is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Complication {
    Modified { description: String, system: String, user: String },
    Kept { reason: String },
}

pub fn complication_request(
    history: &[(String, String)],
    turn: &LabeledTurn,
    links: &[&CorefLink],
) -> Result<ChatRequest, LlmError> {
    let map: IndexMap<String, String> =
        links.iter().map(|l| (l.target.clone(), l.source.clone())).collect();
    ChatRequest::new(
        Stage::Complicate,
        vec![Message::user(prompts::complication(
            history,
            &turn.system,
            &turn.user,
            &turn.turn_state,
            &map,
        ))],
    )
}

/// Asks for an implicit rewrite of one exchange. Unusable answers keep the
/// original text.
pub fn complicate_turn(
    llm: &LlmClient,
    history: &[(String, String)],
    turn: &LabeledTurn,
    links: &[&CorefLink],
) -> Result<Complication, LlmError> {
    let raw = llm.text(&complication_request(history, turn, links)?)?;
    let Some(obj) = extract_object(&raw) else {
        log::warn!("complication answer is not a JSON object; keeping the original turn");
        return Ok(Complication::Kept { reason: "unparseable".into() });
    };
    let field = |k: &str| obj.get(k).and_then(|v| v.as_str()).map(|s| s.trim().to_owned());
    match (field("system"), field("user")) {
        (Some(system), Some(user)) if !user.is_empty() => Ok(Complication::Modified {
            description: field("description").unwrap_or_default(),
            system,
            user,
        }),
        _ => {
            log::warn!("complication answer lacks system/user text; keeping the original turn");
            Ok(Complication::Kept { reason: "missing_field".into() })
        }
    }
}

/// A rewrite is acceptable iff every value stated in the original exchange
/// is still stated, except the values of co-reference targets.
pub fn validate_complication(
    original: &LabeledTurn,
    system: &str,
    user: &str,
    coref_targets: &[&str],
    lexicon: &Lexicon,
) -> bool {
    let before = format!("{} {}", original.system, original.user);
    let after = format!("{system} {user}");
    original
        .turn_state
        .iter()
        .filter(|(slot, _)| !coref_targets.contains(&slot.as_str()))
        .filter(|(slot, value)| lexicon.value_appears(&before, slot, value))
        .all(|(slot, value)| lexicon.value_appears(&after, slot, value))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplicationReport {
    pub flagged: usize,
    pub modified: usize,
    pub copied: usize,
    pub kept: usize,
    pub restored: usize,
}

/// Rewrites flagged turns in order; history always shows final text.
pub fn complicate_dialogue(
    llm: &LlmClient,
    easy: &LabeledDialogue,
    lexicon: &Lexicon,
) -> Result<(LabeledDialogue, ComplicationReport), LlmError> {
    let mut hard = easy.clone();
    hard.variant = Variant::Difficult;
    hard.id = format!("{}/{}", easy.state_id, Variant::Difficult);
    let mut report = ComplicationReport::default();
    for i in find_coref_turns(easy, &easy.coref) {
        report.flagged += 1;
        let links = active_links(easy, &easy.coref, i);
        let history: Vec<(String, String)> =
            hard.turns[..i].iter().map(|t| (t.system.clone(), t.user.clone())).collect();
        let original = &easy.turns[i];
        match complicate_turn(llm, &history, original, &links)? {
            Complication::Kept { .. } => report.kept += 1,
            Complication::Modified { system, user, .. } => {
                let targets: Vec<&str> = links.iter().map(|l| l.target.as_str()).collect();
                if !validate_complication(original, &system, &user, &targets, lexicon) {
                    log::info!("{} turn {i}: rewrite dropped an explicit value; restoring", easy.id);
                    report.restored += 1;
                } else if system == original.system && user == original.user {
                    report.copied += 1;
                } else {
                    report.modified += 1;
                    hard.turns[i].system = system;
                    hard.turns[i].user = user;
                }
            }
        }
    }
    Ok((hard, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{DialogueTurn, FlowTurn};

    fn link(t: &str, s: &str) -> CorefLink {
        CorefLink { target: t.into(), source: s.into() }
    }

    fn fixture() -> (Dialogue, Flow) {
        let spec: [(Role, &str, &[(&str, &str)]); 8] = [
            (Role::Agent, "Good day! How may I assist you today?", &[]),
            (
                Role::User,
                "A high-end British place in the city centre for one at 12:30 please.",
                &[
                    ("restaurant-food", "british"),
                    ("restaurant-pricerange", "expensive"),
                    ("restaurant-area", "centre"),
                    ("restaurant-book people", "1"),
                    ("restaurant-book time", "12:30"),
                ],
            ),
            (Role::Agent, "Midsummer House Restaurant fits. Which day?", &[]),
            (
                Role::User,
                "Wednesday, and book Midsummer House Restaurant.",
                &[("restaurant-book day", "wednesday"), ("restaurant-name", "midsummer house restaurant")],
            ),
            (Role::Agent, "Booked, reference K2J9QX7B.", &[]),
            (
                Role::User,
                "I need a taxi to Midsummer House Restaurant to arrive by 12:30 pm.",
                &[("taxi-destination", "midsummer house restaurant"), ("taxi-arriveby", "12:30")],
            ),
            (Role::Agent, "Where will you leave from?", &[]),
            (
                Role::User,
                "From peterborough train station. Thanks!",
                &[("taxi-departure", "peterborough train station")],
            ),
        ];
        let flow = Flow {
            id: "s/f".into(),
            state_id: "s".into(),
            turns: spec
                .iter()
                .map(|(r, _, st)| FlowTurn {
                    role: *r,
                    description: String::new(),
                    turn_state: st.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
                })
                .collect(),
        };
        let dialogue = Dialogue {
            id: "s/d".into(),
            flow_id: "s/f".into(),
            state_id: "s".into(),
            turns: spec
                .iter()
                .map(|(r, c, _)| DialogueTurn { role: *r, description: String::new(), content: c.to_string() })
                .collect(),
        };
        (dialogue, flow)
    }

    #[test]
    fn pairs_and_folds() {
        let (d, f) = fixture();
        let coref = vec![link("taxi-arriveby", "restaurant-book time"), link("taxi-destination", "restaurant-name")];
        let ld = assemble_labeled_dialogue(&d, &f, &coref).unwrap();
        assert_eq!(ld.turns.len(), 4);
        assert_eq!(ld.turns[0].turn_state.len(), 5);
        assert_eq!(ld.final_belief().len(), 10);
        assert_eq!(ld.turns[2].coref_slots, ["taxi-destination", "taxi-arriveby"]);
        assert_eq!(find_coref_turns(&ld, &coref), [2]);
        assert!(find_coref_turns(&ld, &[]).is_empty());
    }

    #[test]
    fn same_turn_source_is_not_a_reference() {
        let (d, f) = fixture();
        let coref = vec![link("restaurant-name", "restaurant-book day")];
        let ld = assemble_labeled_dialogue(&d, &f, &coref).unwrap();
        assert!(find_coref_turns(&ld, &coref).is_empty());
    }

    #[test]
    fn odd_dialogue_is_rejected() {
        let (mut d, mut f) = fixture();
        d.turns.pop();
        f.turns.pop();
        assert_eq!(assemble_labeled_dialogue(&d, &f, &[]), Err(AssembleError::OddTurnCount(7)));
    }

    #[test]
    fn complication_validation() {
        let (d, f) = fixture();
        let ld = assemble_labeled_dialogue(&d, &f, &[]).unwrap();
        let turn = &ld.turns[2];
        let lx = Lexicon::default();
        let targets = ["taxi-arriveby", "taxi-destination"];
        assert!(validate_complication(
            turn,
            &turn.system,
            "I need a taxi to the restaurant in time for my reservation.",
            &targets,
            &lx
        ));
        assert!(validate_complication(turn, "", "", &["taxi-arriveby", "taxi-destination"], &lx));
        assert!(!validate_complication(turn, "", "I need a taxi in time for my reservation.", &["taxi-arriveby"], &lx));
    }
}
