//! Prompt templates for every LLM stage.
//!
//! Structured inputs are embedded as JSON under `## Header:` sections so
//! that responses can be replayed and the offline simulator can read them
//! back with [`section`].

use indexmap::IndexMap;
use serde_json::json;

use crate::schema::{Entity, Schema, SlotKind, SlotSpec};

fn display_name(slot: &SlotSpec) -> &str {
    slot.aliases.first().map(String::as_str).unwrap_or(&slot.name)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Domain/slot listing and categorical pools, as shown to the judge.
pub fn schema_overview(schema: &Schema) -> String {
    let mut out = format!(
        "There are {} domains that the AI agent supported, and their slots are listed in the following:\n",
        number_word(schema.domains.len())
    );
    for (i, d) in schema.domains.iter().enumerate() {
        let slots: Vec<&str> = d.slots.iter().map(display_name).collect();
        out.push_str(&format!("{}. {}: {{{}}}\n", i + 1, capitalize(&d.name), slots.join(", ")));
    }

    // Group categorical pools by label; `book day` folds into `day` when the
    // pools agree, and labels shared with free-text slots get a domain prefix.
    let mut groups: IndexMap<String, Vec<String>> = IndexMap::new();
    let mut times: Vec<String> = Vec::new();
    let pooled: Vec<(&str, &SlotSpec)> = schema
        .domains
        .iter()
        .flat_map(|d| d.slots.iter().map(move |s| (d.name.as_str(), s)))
        .collect();
    for (domain, slot) in &pooled {
        match slot.kind {
            SlotKind::Time => {
                let n = display_name(slot).to_owned();
                if !times.contains(&n) {
                    times.push(n);
                }
            }
            SlotKind::Categorical | SlotKind::Boolean => {
                let mut label = display_name(slot).to_owned();
                if let Some(stripped) = label.strip_prefix("book ") {
                    if pooled.iter().any(|(_, o)| display_name(o) == stripped && o.pool == slot.pool) {
                        label = stripped.to_owned();
                    }
                }
                let shadowed = pooled
                    .iter()
                    .any(|(_, o)| display_name(o) == display_name(slot) && !o.has_pool());
                let label = if shadowed {
                    format!("{}-{}", capitalize(domain), label)
                } else {
                    capitalize(&label)
                };
                groups
                    .entry(label)
                    .or_insert_with(|| slot.pool.clone().unwrap_or_default());
            }
            SlotKind::Open => {}
        }
    }
    out.push_str("Categorical slots and their possible values:\n");
    let mut n = 0;
    for (label, pool) in &groups {
        n += 1;
        out.push_str(&format!("{n}. {label}: {}\n", pool.join(", ")));
    }
    if !times.is_empty() {
        n += 1;
        let label = capitalize(&times.join(" & "));
        out.push_str(&format!("{n}. {label}: time in forms of \"xx:xx\" such as \"13:00\"\n"));
    }
    out
}

fn number_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}

pub fn judgment(schema: &Schema, domains: &[String]) -> String {
    format!(
        "{}\nI will give you some of these domains. Your task is to determine whether these domains can be fused together in a dialogue reasonably. The order of these domains does not matter, and you can determine the order of these domains yourself. Please output it in a json format like {{\"is_reasonable\": <1 for reasonable and 0 the opposite>, \"explanation\": <give some explanation about your judgement>}}.\n\n# domains: {}",
        schema_overview(schema),
        domains.join(", ")
    )
}

pub const SEED_STATES: &str = "So, based on your judgement, please help me generate several dialogue states with different inferrable information. Each dialogue state is in forms of a dictionary where the key is the domain-slot and the value is the corresponding value. The dialogue state summarizes a user's goal in his/her dialogue with an AI agent. You should determine the number of states yourself based on your judgement and output your answer with a list of dialogue states.

You can determine the values of the categorical slots yourself. Values of other non-categorical slots should be left blank (an empty string), and I will fill them. Note that values should be logical among different domains. What's more, some the values may be the value of another domain. Please express this information by \"domain1-slot\": \"domain2-slot\". But note that you cannot refer to domains that are not mentioned in the current domains. And there are some restrictions in my system:

1) slots {'departure', 'destination'} cannot be inferred from slot 'area'.
2) slots {'arrive by', 'leave at', 'book time'} cannot be inferred from slots {'day', 'book day'} and vice versa.
3) area can only be inferred from area.
4) train-destination and train-departure cannot be inferred from other domain.
5) inferable slots must be different domains.
6) Please carefully refer to the schema I have given in the former turn. Only legal slots in a certain domain can be inferred.
7) Infer from a blank slot is allowed since I will fill in all the blank slots later.";

pub fn user_goal(state: &IndexMap<String, String>) -> String {
    format!(
        "Given the following dialogue state with various domain-slot pairings that include specific details:

{}.

Construct the user's overall goal for the ensuing conversation based solely on the information provided in the dialogue state. The user goal should be as specific as possible while adhering to the following guidelines:

- Do not include any specific names of restaurants, hotels and attractions that are present in the dialogue state. These details are meant to be suggested by the agent during the conversation.
- Do not infer or add any information beyond what is present in the dialogue state. Use only the details provided in the slots.
- The order in which the domain-slot pairings are presented is not indicative of importance or the sequence of addressing them in the dialogue. The language model should determine the logical flow and prioritization independently.
- Ensure that the user goal lays a foundation for a focused yet dynamic interaction, where the agent has the opportunity to make recommendations and the user can respond or confirm these suggestions.

The objective is to clarify what the user intends to achieve or learn during the interaction without presuming or preempting the agent's role in guiding the conversation.

Example of a properly constructed user goal:

\"User aims to find [general need based on dialogue state], with preferences matching [specific preferences], and is looking for recommendations on [broad categories without naming specific entities].\"

Please proceed by formulating a user goal that aligns with these criteria.",
        serde_json::to_string_pretty(state).expect("state serializes")
    )
}

pub fn goal_name_leak(names: &[String]) -> String {
    format!(
        "The goal above names {}. Rewrite the user goal without mentioning any specific restaurant, hotel or attraction names; the agent will recommend them.",
        names.iter().map(|n| format!("\"{n}\"")).collect::<Vec<_>>().join(", ")
    )
}

pub fn dialogue_flow(
    state: &IndexMap<String, String>,
    goal: &str,
    db_info: &IndexMap<String, Entity>,
) -> String {
    format!(
        "## Dialogue State: {}
## User Goal: {goal}
## Information for the Agent: {}
## Instruction:
The dialogue state summarize the dialogue between the user and the agent. Your task is to generate a dialogue flow. Each element in the dialogue flow determine the information of a dialogue turn. Each element should contain a description for the dialogue turn and the corresponding turn state. The description is used to guide the subsequent turn utterance generation. The state is a subset of the dialogue state that describe the information the user mentioned or confirmed in the dialogue turn. Note that the dialogue is started with the agent and ended with the user and must follow an alternating pattern between the agent and the user. After a successful booking service, the model should provide a synthetic reference number, which consists of 8 random characters. Sometimes there are a lot of restriction for a domain, so you should construct more dialogue turns to make sure that the user express no more than six new restrictions of domain-slots in one dialogue turn. The value 'dontcare' means that the user does not care about the restriction of that domain-slot and this information must be expressed by the user. Plan some turns in which the user asks for additional information about a place, such as its phone number or address.

Remember that all the states in the dialogue state should be used and no additional information can be added.

Remember that the agent does not have prior knowledge of the user's goals.

Ensure that the user express no more than six new restriction of domain-slots in one dialogue turn. Be meticulous to confirm that the user does not introduce more than six new restrictions of domain-slots within a single turn. To comply with this, divide constraints across multiple turns when necessary.
## Output Format:
A JSON list whose elements alternate agent, user, agent, ..., user:
[{{\"description\": <description for the agent/user's utterance>, \"turn state\": {{<domain-slot>: <value>, ...}}}}, ...]",
        serde_json::to_string(state).expect("state serializes"),
        serde_json::to_string(db_info).expect("db info serializes"),
    )
}

pub const REPAIR_JSON_LIST: &str =
    "Your answer could not be parsed. Reply with only the JSON list in the requested output format.";

pub fn dialogue_generation(db_info: &IndexMap<String, Entity>, flow: &serde_json::Value) -> String {
    format!(
        "## Information for the Agent: {}
## Dialogue Flow: {}
## Instruction:
Based on the dialogue flow, please generate a dialogue between a agent and a user. You should include information provided in the description and the turn state while construct a dialogue turn. Express every value of the turn state explicitly in the utterance. The synthetic reference number should be a string consists of 8 random character. Remember no turn in the dialogue flow can be omitted and no additional dialogue turn can be added. The generated dialogue turns must correspond one-to-one with the provided dialogue flow, neither more nor less.

Remember no turns in the dialogue flow can be omitted and no additional dialogue turn can be added.
## Output Format:
[{{\"role\": <\"agent\" or \"user\">, \"description\": <description copied from the flow>, \"content\": <utterance>}}, ...]",
        serde_json::to_string(db_info).expect("db info serializes"),
        serde_json::to_string(flow).expect("flow serializes"),
    )
}

pub fn complication(
    history: &[(String, String)],
    system: &str,
    user: &str,
    turn_state: &IndexMap<String, String>,
    coref: &IndexMap<String, String>,
) -> String {
    let history = if history.is_empty() {
        "(none)".to_owned()
    } else {
        history
            .iter()
            .map(|(s, u)| format!("system: {s}\nuser: {u}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    format!(
        "## Dialogue History:
{history}
## Current Turn Utterances:
system: {system}
user: {user}
## Turn State: {}
## Co-reference:
{}
## Instruction:
Your task is to modify the current turn utterances to express the co-reference information implicitly rather than explicitly stating the full name of the value. Note that the rest of the values in the current turn state should still be expressed explicitly. The modified utterance should be the paraphrase of the original utterance in the current turn for both the system and the user. Only to modify the information for these co-reference value.

Remember to maintain the meaning of the modified utterance with the original one.

If the expression of the co-reference value in the original utterance is already in a implicit way, please do not modify the utterances and just copy it.
## Output Format:
{{
\"description\": <description of the co-reference information in natural language>,
\"system\": <modified system utterance of the current turn>,
\"user\": <modified user utterance of the current turn>
}}",
        serde_json::to_string(turn_state).expect("turn state serializes"),
        serde_json::to_string(coref).expect("coref serializes"),
    )
}

/// Text under `## {header}:` up to the next `\n## ` header.
pub fn section<'a>(text: &'a str, header: &str) -> Option<&'a str> {
    let marker = format!("## {header}:");
    let start = text.find(&marker)? + marker.len();
    let rest = &text[start..];
    let end = rest.find("\n## ").unwrap_or(rest.len());
    Some(rest[..end].trim())
}

/// JSON payload used in flow and dialogue prompts for a planned flow.
pub fn flow_payload(turns: &[crate::dialogue::FlowTurn]) -> serde_json::Value {
    json!(turns
        .iter()
        .map(|t| json!({
            "role": t.role,
            "description": t.description,
            "turn state": t.turn_state,
        }))
        .collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overview_lists_domains_and_pools() {
        let text = schema_overview(&Schema::multiwoz());
        assert!(text.starts_with("There are five domains"));
        assert!(text.contains(
            "1. Hotel: {area, type, internet, parking, name, book day, price range, star, book stay, book people}"
        ));
        assert!(text.contains("2. Restaurant: {area, book day, book people, book time, food, name, price range}"));
        assert!(text.contains("4. Taxi: {arrive by, departure, destination, leave at}"));
        assert!(text.contains("5. Train: {book people, day, departure, destination, leave at}"));
        assert!(text.contains("Area: centre, east, south, west, north"));
        assert!(text.contains("Hotel-type: hotel, guest house"));
        assert!(text.contains("Day: monday, tuesday"));
        assert!(!text.contains("Book day:"));
        assert!(text.contains("time in forms of \"xx:xx\""));
    }

    #[test]
    fn judgment_names_domains() {
        let p = judgment(&Schema::multiwoz(), &["restaurant".into(), "taxi".into()]);
        assert!(p.ends_with("# domains: restaurant, taxi"));
        assert!(p.contains("\"is_reasonable\""));
    }

    #[test]
    fn sections_roundtrip() {
        let mut state = IndexMap::new();
        state.insert("taxi-arriveby".to_string(), "12:30".to_string());
        let p = dialogue_flow(&state, "get a taxi", &IndexMap::new());
        assert_eq!(section(&p, "User Goal"), Some("get a taxi"));
        let s: IndexMap<String, String> =
            serde_json::from_str(section(&p, "Dialogue State").unwrap()).unwrap();
        assert_eq!(s, state);
    }
}
