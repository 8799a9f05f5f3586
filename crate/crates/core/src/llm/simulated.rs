//! A rule-based stand-in for a chat model.
//!
//! It reads the structured sections of the pipeline's own prompts and writes
//! answers in the shape a capable model would: prose-wrapped JSON for
//! judgments and seeds, flows that respect every planning constraint, and
//! template utterances that state each value explicitly. Every answer is a
//! pure function of the request, so recordings made with it are stable.
//!
//! A configurable share of dialogues drops one value from a user turn, which
//! exercises the retention gate the way real model slips do.

use indexmap::IndexMap;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::json::{extract_array, extract_object, scalar_text};
use super::{Backend, BackendError, ChatRequest, Stage};
use crate::normalize::{is_dontcare, parse_time};
use crate::prompts::section;
use crate::schema::{split_slot, Entity, Schema};

const EXAMPLE_SEEDS: &str = r#"Based on your instructions, here are several dialogue states with inferable information, formatted as dictionaries. Each state represents a user's goal in a conversation with an AI agent, with some values left blank for you to fill in later:

[
{"taxi-departure": "", "taxi-destination": "restaurant-area", "taxi-leave at": "restaurant-book time", "restaurant-book time": "", "restaurant-area": "", "restaurant-food": "Italian"},
{"taxi-departure": "", "taxi-destination": "restaurant-name", "taxi-arriveby": "restaurant-book time", "restaurant-name": "", "restaurant-book time": "", "restaurant-pricerange": "moderate"},
{"taxi-departure": "hotel-name", "taxi-destination": "restaurant-name", "taxi-arriveby": "", "hotel-name": "", "restaurant-name": "", "restaurant-book time": "taxi-arriveby"},
{"taxi-departure": "hotel-area", "taxi-destination": "", "taxi-leaveat": "", "hotel-area": "", "restaurant-name": "taxi-destination", "restaurant-booktime": "taxi-leaveat"}
]

In these dialogue states, I've adhered to the restrictions you've provided. The values for categorical slots have been determined, and the non-categorical slots have been left blank."#;

/// Plausible cross-domain links, most natural first.
const RELATIONS: [(&str, &str); 18] = [
    ("taxi-destination", "restaurant-name"),
    ("taxi-arriveby", "restaurant-book time"),
    ("taxi-departure", "hotel-name"),
    ("taxi-destination", "attraction-name"),
    ("taxi-destination", "hotel-name"),
    ("taxi-departure", "attraction-name"),
    ("taxi-departure", "restaurant-name"),
    ("taxi-destination", "train-departure"),
    ("hotel-area", "restaurant-area"),
    ("attraction-area", "hotel-area"),
    ("restaurant-area", "attraction-area"),
    ("restaurant-book day", "hotel-book day"),
    ("restaurant-book people", "hotel-book people"),
    ("train-day", "hotel-book day"),
    ("train-book people", "hotel-book people"),
    ("train-day", "restaurant-book day"),
    ("train-book people", "restaurant-book people"),
    ("hotel-area", "attraction-area"),
];

/// Links a careless model proposes; each breaks one filtering rule.
const NOISE: [(&str, &str); 6] = [
    ("taxi-leaveat", "restaurant-book time"),
    ("taxi-destination", "hotel-area"),
    ("train-departure", "hotel-name"),
    ("restaurant-book time", "hotel-book day"),
    ("hotel-area", "restaurant-food"),
    ("attraction-area", "train-destination"),
];

const CARS: [&str; 6] = ["black toyota", "white skoda", "red volvo", "blue ford", "grey audi", "yellow tesla"];

pub struct SimulatedBackend {
    schema: Schema,
    fault_rate: f64,
}

impl SimulatedBackend {
    pub fn new(schema: Schema) -> Self {
        Self { schema, fault_rate: 0.0 }
    }

    /// Share of dialogues in which one user turn omits a value.
    pub fn with_fault_rate(mut self, rate: f64) -> Self {
        self.fault_rate = rate.clamp(0.0, 1.0);
        self
    }
}

fn rng_for(request: &ChatRequest) -> ChaCha8Rng {
    let digest = request.digest();
    let seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    ChaCha8Rng::seed_from_u64(seed)
}

fn fatal(msg: impl Into<String>) -> BackendError {
    BackendError::Fatal(format!("simulated backend: {}", msg.into()))
}

fn domains_line(text: &str) -> Option<Vec<String>> {
    let line = text.lines().rev().find(|l| l.trim_start().starts_with("# domains:"))?;
    let list = line.trim_start().trim_start_matches("# domains:");
    Some(list.split(',').map(|d| d.trim().to_lowercase()).filter(|d| !d.is_empty()).collect())
}

fn string_map(v: &Value) -> IndexMap<String, String> {
    v.as_object()
        .map(|m| m.iter().filter_map(|(k, v)| scalar_text(v).map(|s| (k.clone(), s))).collect())
        .unwrap_or_default()
}

fn section_json(text: &str, header: &str) -> Option<Value> {
    serde_json::from_str(section(text, header)?).ok()
}

fn article(word: &str) -> &'static str {
    match word.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// Spoken form of a clock time; the 12-hour form keeps its suffix.
fn time_form(value: &str, twelve: bool) -> String {
    match parse_time(value) {
        Some((h, m)) if twelve => {
            let h12 = if h % 12 == 0 { 12 } else { h % 12 };
            format!("{h12}:{m:02} {}", if h < 12 { "am" } else { "pm" })
        }
        _ => value.to_owned(),
    }
}

/// How a user states `value` for `key`.
fn user_phrase(key: &str, value: &str, twelve: bool) -> String {
    let (domain, slot) = split_slot(key).unwrap_or(("", key));
    let t = || time_form(value, twelve);
    if is_dontcare(value) {
        return match slot {
            "area" => "in any area".into(),
            "pricerange" => "in any price range".into(),
            "food" => "serving any food".into(),
            "internet" => "with or without wifi, either is fine".into(),
            "parking" => "with or without parking, either is fine".into(),
            _ => format!("with any {slot}"),
        };
    }
    match (domain, slot) {
        (_, "area") => format!("in the {value}"),
        ("restaurant", "food") => format!("serving {value} food"),
        (_, "pricerange") => format!("in the {value} price range"),
        (_, "type") => format!("of the {value} type"),
        (_, "stars") => format!("with {value} stars"),
        (_, "internet") if value == "yes" => "with free wifi".into(),
        (_, "internet") => "with no internet".into(),
        (_, "parking") if value == "yes" => "with free parking".into(),
        (_, "parking") => "with no parking".into(),
        (_, "book day") | ("train", "day") => format!("on {value}"),
        (_, "book time") => format!("at {}", t()),
        (_, "book people") => format!("for {value} people"),
        (_, "book stay") => format!("for {value} nights"),
        ("train", "departure") => format!("departing from {value}"),
        ("train", "destination") => format!("going to {value}"),
        (_, "leaveat") => format!("leaving after {}", t()),
        (_, "arriveby") => format!("to arrive by {}", t()),
        ("taxi", "departure") => format!("from {value}"),
        ("taxi", "destination") => format!("to {value}"),
        _ => value.to_owned(),
    }
}

/// Every explicit phrase [`user_phrase`] may have produced.
fn explicit_phrases(key: &str, value: &str) -> Vec<String> {
    let mut out = vec![user_phrase(key, value, true), user_phrase(key, value, false)];
    out.dedup();
    out
}

/// An implicit paraphrase for a co-referring target, when one exists.
fn implicit_phrase(target: &str, source: &str) -> Option<String> {
    let (_, tslot) = split_slot(target)?;
    let (sdomain, sslot) = split_slot(source)?;
    let place = if sdomain == "train" { "train station".to_owned() } else { sdomain.to_owned() };
    Some(match (tslot, sslot) {
        ("arriveby", "book time") => "to arrive in time for my reservation".into(),
        ("arriveby", _) => format!("to arrive in time for the {sdomain}"),
        ("leaveat", _) => format!("leaving around the time of my {sdomain} booking"),
        ("destination", _) => format!("to the {place}"),
        ("departure", _) => format!("from the {place}"),
        ("area", _) => format!("in the same area as the {sdomain}"),
        ("book day" | "day", _) => format!("on the same day as my {sdomain} booking"),
        ("book people", _) => "for the same group of people".into(),
        ("book time", _) => format!("at the same time as my {sdomain} booking"),
        _ => return None,
    })
}

impl SimulatedBackend {
    fn judge(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let domains = domains_line(request.last_user()).ok_or_else(|| fatal("no domain list"))?;
        let known: Vec<String> = self.schema.domain_names();
        let unknown: Vec<&String> = domains.iter().filter(|d| !known.contains(d)).collect();
        let transport_only = domains.iter().all(|d| d == "taxi" || d == "train");
        let (ok, explanation) = if !unknown.is_empty() || transport_only {
            (
                0,
                format!(
                    "Fusing the {} domains in a single dialogue could be confusing and impractical because they serve overlapping transport purposes or fall outside what the agent supports.",
                    domains.join(" and ")
                ),
            )
        } else {
            (
                1,
                format!(
                    "The domains of {} can be reasonably fused together in a dialogue. A user planning a trip can settle one service first and then arrange the others around it, reusing times, days and places.",
                    domains.join(" and ")
                ),
            )
        };
        Ok(serde_json::to_string_pretty(&json!({"is_reasonable": ok, "explanation": explanation}))
            .expect("json"))
    }

    fn literals(&self, domain: &str, rng: &mut ChaCha8Rng) -> Vec<(String, String)> {
        let pick = |slot: &str, rng: &mut ChaCha8Rng| -> Option<(String, String)> {
            let key = format!("{domain}-{slot}");
            let pool = self.schema.slot(&key)?.pool.clone()?;
            pool.choose(rng).map(|v| (key, v.clone()))
        };
        let wanted: &[&str] = match domain {
            "restaurant" => &["pricerange"],
            "hotel" => &["type", "internet"],
            "attraction" => &["area"],
            "train" => &["day"],
            _ => &[],
        };
        wanted.iter().filter_map(|s| pick(s, rng)).collect()
    }

    fn seed_states(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let first = request.messages.first().map(|m| m.content.as_str()).unwrap_or_default();
        let mut domains = domains_line(first).ok_or_else(|| fatal("no domain list"))?;
        domains.sort();
        if domains == ["hotel", "restaurant", "taxi"] {
            return Ok(EXAMPLE_SEEDS.to_owned());
        }
        let mut rng = rng_for(request);
        let in_combo = |k: &str| split_slot(k).is_some_and(|(d, _)| domains.iter().any(|x| x == d));
        let candidates: Vec<(&str, &str)> =
            RELATIONS.iter().copied().filter(|(t, s)| in_combo(t) && in_combo(s)).collect();
        let noise: Vec<(&str, &str)> = NOISE.iter().copied().filter(|(t, s)| in_combo(t) && in_combo(s)).collect();

        let build = |links: &[(&str, &str)], rng: &mut ChaCha8Rng| -> Value {
            let mut state: IndexMap<String, String> = IndexMap::new();
            for d in &domains {
                for (k, v) in self.literals(d, rng) {
                    state.insert(k, v);
                }
                if self.schema.domain(d).and_then(|s| s.slot("name")).is_some() {
                    state.insert(format!("{d}-name"), String::new());
                }
            }
            for (t, s) in links {
                state.insert((*t).to_owned(), (*s).to_owned());
                state.entry((*s).to_owned()).or_default();
            }
            if domains.iter().any(|d| d == "taxi") && !state.keys().any(|k| k.starts_with("taxi-")) {
                state.insert("taxi-departure".into(), String::new());
                state.insert("taxi-destination".into(), String::new());
            }
            json!(state)
        };

        // Acyclic selection: a target is used once and no domain pair points
        // both ways.
        let pick_links = |offset: usize| -> Vec<(&str, &str)> {
            let mut chosen: Vec<(&str, &str)> = Vec::new();
            for i in 0..candidates.len() {
                let (t, s) = candidates[(i + offset) % candidates.len()];
                let (td, sd) = (split_slot(t).unwrap().0, split_slot(s).unwrap().0);
                let clash = chosen.iter().any(|(ct, cs)| {
                    let (ctd, csd) = (split_slot(ct).unwrap().0, split_slot(cs).unwrap().0);
                    *ct == t
                        || *ct == s
                        || (ctd == sd && csd == td)
                        || (*cs == s && ctd == td)
                        || (ctd == td && csd == sd && [*ct, t].contains(&"taxi-departure"))
                });
                if !clash && chosen.len() < 3 {
                    chosen.push((t, s));
                }
            }
            chosen
        };

        let mut seeds = Vec::new();
        if !candidates.is_empty() {
            seeds.push(build(&pick_links(0), &mut rng));
            let mut second = pick_links(1);
            if let Some(n) = noise.first() {
                if !second.iter().any(|(t, _)| *t == n.0) {
                    second.push(*n);
                }
            }
            seeds.push(build(&second, &mut rng));
        }
        seeds.push(build(&[], &mut rng));
        Ok(format!(
            "Based on your instructions, here are several dialogue states for {}:\n\n{}\n\nEach state keeps the categorical values consistent across domains.",
            domains.join(", "),
            serde_json::to_string_pretty(&seeds).expect("json")
        ))
    }

    fn goal(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let state = extract_object(request.last_user()).ok_or_else(|| fatal("no state in goal prompt"))?;
        let state = string_map(&Value::Object(state));
        let mut parts: Vec<String> = Vec::new();
        for domain in ordered_domains(&state) {
            let phrases: Vec<String> = state
                .iter()
                .filter(|(k, _)| split_slot(k).is_some_and(|(d, s)| d == domain && s != "name"))
                .filter(|(k, v)| {
                    let (_, s) = split_slot(k).unwrap();
                    !(domain == "taxi" && matches!(s, "departure" | "destination") && state.values().filter(|x| x == v).count() > 1)
                })
                .map(|(k, v)| user_phrase(k, v, false))
                .collect();
            let what = if domain == "taxi" { "a taxi".to_owned() } else { format!("{} {domain}", article(&domain)) };
            if phrases.is_empty() {
                parts.push(what);
            } else {
                parts.push(format!("{what} {}", phrases.join(", ")));
            }
        }
        Ok(format!(
            "The user aims to arrange {}, and is looking for recommendations on suitable places without having a specific one in mind.",
            parts.join("; then ")
        ))
    }

    fn flow(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let text = request.last_user();
        let state = string_map(&section_json(text, "Dialogue State").ok_or_else(|| fatal("no state"))?);
        let info: IndexMap<String, Entity> = section_json(text, "Information for the Agent")
            .and_then(|v| serde_json::from_value(v).ok())
            .unwrap_or_default();
        let mut turns: Vec<Value> = Vec::new();
        let mut agent_next = "The agent greets the user and asks what they can assist them with today.".to_owned();
        let mut push = |agent: &str, user: &str, st: IndexMap<String, String>| {
            turns.push(json!({"role": "agent", "description": agent, "turn state": {}}));
            turns.push(json!({"role": "user", "description": user, "turn state": st}));
        };
        for domain in ordered_domains(&state) {
            let slots: Vec<(&String, &String)> =
                state.iter().filter(|(k, _)| split_slot(k).is_some_and(|(d, _)| d == domain)).collect();
            let is_book = |k: &str| split_slot(k).is_some_and(|(_, s)| s.starts_with("book "));
            let is_name = |k: &str| split_slot(k).is_some_and(|(_, s)| s == "name");
            let search: Vec<_> = slots.iter().filter(|(k, _)| !is_book(k) && !is_name(k)).collect();
            let book: IndexMap<String, String> =
                slots.iter().filter(|(k, _)| is_book(k)).map(|(k, v)| ((*k).clone(), (*v).clone())).collect();
            let name = slots.iter().find(|(k, _)| is_name(k)).map(|(k, v)| ((*k).clone(), (*v).clone()));

            if domain == "taxi" {
                let st = slots.iter().map(|(k, v)| ((*k).clone(), (*v).clone())).collect();
                push(&agent_next, "The user asks for a taxi and gives the details.", st);
                agent_next = "The agent confirms the taxi booking and provides the car type and contact number.".into();
                continue;
            }
            for (i, chunk) in search.chunks(4).enumerate() {
                let st = chunk.iter().map(|(k, v)| ((*k).clone(), (*v).clone())).collect();
                let desc = if i == 0 {
                    format!("The user asks for {} {domain} with some preferences.", article(&domain))
                } else {
                    format!("The user adds more preferences for the {domain}.")
                };
                push(&agent_next, &desc, st);
                agent_next = format!("The agent asks for more details about the {domain}.");
            }
            let entity = info.get(&domain);
            match entity {
                Some(e) => {
                    agent_next = match (domain.as_str(), e.get("name"), e.get("trainid")) {
                        (_, Some(n), _) => format!("The agent recommends {n}, a {domain} that matches the request."),
                        ("train", _, Some(id)) => format!(
                            "The agent suggests train {id}, leaving at {}.",
                            e.get("leaveat").map(String::as_str).unwrap_or("the requested time")
                        ),
                        _ => format!("The agent recommends a suitable {domain}."),
                    };
                    let mut st: IndexMap<String, String> = IndexMap::new();
                    if let Some((k, v)) = &name {
                        st.insert(k.clone(), v.clone());
                    }
                    st.extend(book.clone());
                    if book.is_empty() {
                        push(&agent_next, "The user accepts the suggestion and asks for the phone number.", st);
                        agent_next = format!("The agent provides the phone number of the {domain}.");
                    } else {
                        push(&agent_next, "The user accepts the suggestion and asks to book it.", st);
                        agent_next = "The agent confirms the booking and provides the reference number.".into();
                    }
                }
                None => {
                    let mut st: IndexMap<String, String> = IndexMap::new();
                    if let Some((k, v)) = &name {
                        st.insert(k.clone(), v.clone());
                    }
                    st.extend(book.clone());
                    if !st.is_empty() {
                        push(&agent_next, &format!("The user asks to book the {domain}."), st);
                        agent_next = "The agent confirms the booking and provides the reference number.".into();
                    }
                }
            }
        }
        push(&agent_next, "The user thanks the agent and ends the conversation.", IndexMap::new());
        Ok(format!(
            "Here is the planned dialogue flow:\n{}",
            serde_json::to_string_pretty(&turns).expect("json")
        ))
    }

    fn dialogue(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let text = request.last_user();
        let flow = section_json(text, "Dialogue Flow")
            .and_then(|v| v.as_array().cloned())
            .ok_or_else(|| fatal("no flow"))?;
        let info: IndexMap<String, Entity> = section_json(text, "Information for the Agent")
            .and_then(|v| serde_json::from_value(v).ok())
            .unwrap_or_default();
        let mut rng = rng_for(request);
        let faulty = self.fault_rate > 0.0 && rng.random::<f64>() < self.fault_rate;
        let fault_turn = if faulty {
            flow.iter().position(|t| t["turn state"].as_object().is_some_and(|m| m.len() >= 2))
        } else {
            None
        };
        let mut out = Vec::new();
        for (i, turn) in flow.iter().enumerate() {
            let role = turn["role"].as_str().unwrap_or("agent");
            let desc = turn["description"].as_str().unwrap_or_default();
            let state = string_map(&turn["turn state"]);
            let content = if role == "agent" {
                self.agent_line(desc, &info, &mut rng)
            } else {
                let twelve = rng.random_bool(0.5);
                let mut phrases: Vec<String> = state.iter().map(|(k, v)| user_phrase(k, v, twelve)).collect();
                if fault_turn == Some(i) {
                    phrases.pop();
                }
                user_line(desc, &state, &phrases)
            };
            out.push(json!({"role": role, "description": desc, "content": content}));
        }
        Ok(serde_json::to_string_pretty(&out).expect("json"))
    }

    fn agent_line(&self, desc: &str, info: &IndexMap<String, Entity>, rng: &mut ChaCha8Rng) -> String {
        let named = info
            .values()
            .find(|e| e.get("name").is_some_and(|n| desc.contains(n.as_str())) || e.get("trainid").is_some_and(|n| desc.contains(n.as_str())));
        let field = |k: &str| named.and_then(|e| e.get(k)).cloned().unwrap_or_default();
        if desc.contains("greets") {
            "Good day! How may I assist you today?".into()
        } else if desc.contains("asks for more details") {
            "Sure. Is there anything else you would like in it?".into()
        } else if desc.contains("suggests train") {
            format!("Train {} leaves at {} and arrives at {}. Would that work?", field("trainid"), field("leaveat"), field("arriveby"))
        } else if desc.contains("recommends") {
            match named {
                Some(e) => format!(
                    "I recommend {}. It is located at {}.",
                    field("name"),
                    e.get("address").cloned().unwrap_or_else(|| "the city".into())
                ),
                None => "I have found a suitable option for you.".into(),
            }
        } else if desc.contains("confirms the taxi") {
            let phone: String = (0..9).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect();
            format!("Your taxi is booked. Look out for a {}; the contact number is 07{phone}.", CARS.choose(rng).expect("cars"))
        } else if desc.contains("confirms the booking") {
            format!("The booking was successful. Your reference number is {}.", reference(rng))
        } else if desc.contains("phone number") {
            let phone = info
                .values()
                .filter_map(|e| e.get("phone"))
                .next()
                .cloned()
                .unwrap_or_else(|| "01223 000000".into());
            format!("Of course, the phone number is {phone}. Anything else?")
        } else {
            "Is there anything else I can help you with?".into()
        }
    }

    fn complicate(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let text = request.last_user();
        let utter = section(text, "Current Turn Utterances").ok_or_else(|| fatal("no utterances"))?;
        let mut system = String::new();
        let mut user = String::new();
        for line in utter.lines() {
            if let Some(s) = line.strip_prefix("system: ") {
                system = s.to_owned();
            } else if let Some(u) = line.strip_prefix("user: ") {
                user = u.to_owned();
            }
        }
        let state = string_map(&section_json(text, "Turn State").unwrap_or(Value::Null));
        let coref = string_map(&section_json(text, "Co-reference").unwrap_or(Value::Null));
        let mut notes = Vec::new();
        for (target, source) in &coref {
            let Some(value) = state.get(target) else { continue };
            let Some(implicit) = implicit_phrase(target, source) else { continue };
            for explicit in explicit_phrases(target, value) {
                if let Some(pos) = user.find(&explicit) {
                    user.replace_range(pos..pos + explicit.len(), &implicit);
                    notes.push(format!("The '{target}' is the same as the '{source}', which is {value}."));
                    break;
                }
            }
        }
        let description = if notes.is_empty() {
            "The co-reference values are already expressed implicitly.".to_owned()
        } else {
            notes.join(" ")
        };
        Ok(serde_json::to_string_pretty(&json!({"description": description, "system": system, "user": user}))
            .expect("json"))
    }
}

fn reference(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
    let mut s: String = (0..7).map(|_| char::from(*ALPHABET.choose(rng).expect("alphabet"))).collect();
    s.insert(rng.random_range(0..8), char::from(b'2' + rng.random_range(0..8u8)));
    s
}

fn user_line(desc: &str, state: &IndexMap<String, String>, phrases: &[String]) -> String {
    let domain = state
        .keys()
        .find_map(|k| split_slot(k).map(|(d, _)| d.to_owned()))
        .unwrap_or_default();
    let name = state.iter().find(|(k, _)| k.ends_with("-name")).map(|(_, v)| v.clone());
    let rest: Vec<&String> = match &name {
        Some(n) => phrases.iter().filter(|p| *p != n).collect(),
        None => phrases.iter().collect(),
    };
    let rest = rest.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ");
    if desc.contains("thanks") {
        "Thank you, that is all I need. Goodbye!".into()
    } else if desc.contains("taxi") {
        format!("I also need a taxi {rest}.")
    } else if desc.contains("accepts") {
        let target = name.map(|n| format!("Please book {n}")).unwrap_or_else(|| "Please book it".into());
        let ask_phone = if desc.contains("phone number") { " Could you give me the phone number?" } else { "" };
        if desc.contains("phone number") && rest.is_empty() {
            let picked = state.iter().find(|(k, _)| k.ends_with("-name")).map(|(_, v)| v.as_str());
            match picked {
                Some(n) => format!("{n} sounds good.{ask_phone}"),
                None => format!("That sounds good.{ask_phone}"),
            }
        } else if rest.is_empty() {
            format!("That sounds good. {target}.{ask_phone}")
        } else {
            format!("That sounds good. {target} {rest}.{ask_phone}")
        }
    } else if desc.contains("adds more") {
        format!("It should also be {rest}.")
    } else if phrases.is_empty() {
        "That works for me.".into()
    } else {
        let what = if domain.is_empty() { "place".to_owned() } else { domain.clone() };
        format!("I am looking for {} {what} {rest}.", article(&what))
    }
}

/// Domains in order of first appearance, with taxi last.
fn ordered_domains(state: &IndexMap<String, String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for k in state.keys() {
        if let Some((d, _)) = split_slot(k) {
            if !out.iter().any(|x| x == d) {
                out.push(d.to_owned());
            }
        }
    }
    out.sort_by_key(|d| d == "taxi");
    out
}

impl Backend for SimulatedBackend {
    fn name(&self) -> &str {
        "simulated"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let is_repair = request.messages.len() > 1 && request.stage != Stage::Seed;
        if is_repair && request.stage != Stage::Goal {
            let prior = request
                .messages
                .iter()
                .rev()
                .find(|m| m.role == super::Role::Assistant)
                .map(|m| m.content.clone())
                .unwrap_or_default();
            return extract_array(&prior)
                .map(|a| serde_json::to_string(&a).expect("json"))
                .ok_or_else(|| fatal("nothing to repair"));
        }
        match request.stage {
            Stage::Judge => self.judge(request),
            Stage::Seed => self.seed_states(request),
            Stage::Goal => {
                let first = ChatRequest { messages: request.messages[..1].to_vec(), ..request.clone() };
                self.goal(&first)
            }
            Stage::Flow => self.flow(request),
            Stage::Dialogue => self.dialogue(request),
            Stage::Complicate => self.complicate(request),
        }
    }
}
