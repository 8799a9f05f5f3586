#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dstaug::complicate::{self, LabeledDialogue};
use dstaug::dialogue::{Dialogue, DialogueTurn, Flow, FlowTurn, Role};
use dstaug::planner::CorefLink;
use dstaug::pipeline::PipelineConfig;
use dstaug::{Database, Schema};
use indexmap::IndexMap;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn schema() -> Schema {
    Schema::load(fixtures().join("schema.json")).expect("fixture schema")
}

pub fn db(schema: &Schema) -> Database {
    Database::load_dir(fixtures().join("db"), schema).expect("fixture db")
}

/// The shipped replay config, writing into `out`.
pub fn replay_config(out: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::load(fixtures().join("pipeline.json")).expect("fixture config");
    c.output_dir = out.to_owned();
    c
}

pub fn map(pairs: &[(&str, &str)]) -> IndexMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Restaurant and taxi booking around Midsummer House Restaurant.
pub fn midsummer_state() -> IndexMap<String, String> {
    map(&[
        ("restaurant-name", "midsummer house restaurant"),
        ("restaurant-book time", "12:30"),
        ("restaurant-area", "centre"),
        ("restaurant-book people", "1"),
        ("restaurant-food", "british"),
        ("restaurant-book day", "wednesday"),
        ("restaurant-pricerange", "expensive"),
        ("taxi-destination", "midsummer house restaurant"),
        ("taxi-arriveby", "12:30"),
        ("taxi-departure", "peterborough train station"),
    ])
}

type Spec = (Role, &'static str, &'static str, &'static [(&'static str, &'static str)]);

/// Flow and utterances for the midsummer state. Turns 0, 1, 4 and 5 follow
/// a worked example; the turns in between are filled in.
const MIDSUMMER: [Spec; 10] = [
    (
        Role::Agent,
        "The agent greets the user and asks what they can assist them with today.",
        "Good day! How may I assist you today?",
        &[],
    ),
    (
        Role::User,
        "The user requests to book a table at a high-end restaurant that serves British cuisine in the city center for one person.",
        "I'd like to book a table for one at a high-end British cuisine restaurant in the city center.",
        &[
            ("restaurant-area", "centre"),
            ("restaurant-food", "british"),
            ("restaurant-book people", "1"),
            ("restaurant-pricerange", "expensive"),
        ],
    ),
    (
        Role::Agent,
        "The agent asks for the day and time of the reservation.",
        "Certainly. On which day and at what time would you like the reservation?",
        &[],
    ),
    (
        Role::User,
        "The user wants a table on Wednesday at 12:30.",
        "Wednesday at 12:30, please.",
        &[("restaurant-book day", "wednesday"), ("restaurant-book time", "12:30")],
    ),
    (
        Role::Agent,
        "The agent confirms the reservation details and informs the user that they have a table available at Midsummer House Restaurant, which fits all the criteria provided.",
        "I have a table available for you at Midsummer House Restaurant, which offers British cuisine and is located in the city center. It's quite an exquisite place, and it fits your criteria perfectly.",
        &[],
    ),
    (
        Role::User,
        "The user confirms the booking at Midsummer House Restaurant and requests a taxi to get there, specifying they need to arrive by 12:30 PM.",
        "That sounds wonderful. Please confirm my booking at Midsummer House Restaurant. Also, I need a taxi to get there and arrive by 12:30 PM.",
        &[
            ("restaurant-name", "midsummer house restaurant"),
            ("taxi-destination", "midsummer house restaurant"),
            ("taxi-arriveby", "12:30"),
        ],
    ),
    (
        Role::Agent,
        "The agent confirms the booking with a reference number and asks where the taxi should pick the user up.",
        "Your table is booked, the reference number is 3GZ8T1QK. Where should the taxi pick you up?",
        &[],
    ),
    (
        Role::User,
        "The user asks to be picked up at Peterborough train station.",
        "From Peterborough train station, please.",
        &[("taxi-departure", "peterborough train station")],
    ),
    (
        Role::Agent,
        "The agent confirms the taxi booking.",
        "Your taxi is booked. Look out for a grey Skoda.",
        &[],
    ),
    (Role::User, "The user thanks the agent and ends the conversation.", "Thank you, that is everything. Goodbye!", &[]),
];

pub fn midsummer_flow() -> Flow {
    Flow {
        id: "midsummer/f".into(),
        state_id: "midsummer".into(),
        turns: MIDSUMMER
            .iter()
            .map(|(role, desc, _, st)| FlowTurn { role: *role, description: desc.to_string(), turn_state: map(st) })
            .collect(),
    }
}

pub fn midsummer_dialogue() -> Dialogue {
    Dialogue {
        id: "midsummer/d".into(),
        flow_id: "midsummer/f".into(),
        state_id: "midsummer".into(),
        turns: MIDSUMMER
            .iter()
            .map(|(role, desc, content, _)| DialogueTurn {
                role: *role,
                description: desc.to_string(),
                content: content.to_string(),
            })
            .collect(),
    }
}

/// Taxi destination and arrival taken from the restaurant booking.
pub fn midsummer_coref() -> Vec<CorefLink> {
    [("taxi-destination", "restaurant-name"), ("taxi-arriveby", "restaurant-book time")]
        .map(|(t, s)| CorefLink { target: t.into(), source: s.into() })
        .to_vec()
}

pub fn midsummer_labeled() -> LabeledDialogue {
    complicate::assemble_labeled_dialogue(&midsummer_dialogue(), &midsummer_flow(), &midsummer_coref())
        .expect("fixture pairs up")
}

/// Every file below `dir`, relative path to bytes.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir") {
        let path = entry.expect("entry").path();
        if path.is_file() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, std::fs::read(&path).expect("artifact"));
        }
    }
    out
}
