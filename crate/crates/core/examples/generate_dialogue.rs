//! Goal, flow and utterances for one synthesized state, with validation.

use std::path::Path;
use std::sync::Arc;

use dstaug::dialogue::{self, RetentionReport};
use dstaug::lexicon::Lexicon;
use dstaug::llm::{LlmClient, SimulatedBackend};
use dstaug::planner::{self, DomainCombo, RuleSet};
use dstaug::synth::expand_seed;
use dstaug::{Database, Schema};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let schema = Schema::load(root.join("schema.json"))?;
    let db = Database::load_dir(root.join("db"), &schema)?;
    let llm = LlmClient::new(Arc::new(SimulatedBackend::new(schema.clone())));

    let combo = DomainCombo::new(["restaurant", "taxi"]).expect("two domains");
    let judged = planner::judge_combo(&llm, &schema, &combo)?;
    let seeds = planner::generate_seed_states(&llm, &schema, judged.reasonable().expect("reasonable"))?;
    let seed = planner::filter_seed_state(&seeds[0], &schema, &RuleSet::default()).seed;
    let state = expand_seed(&seed, &schema, &db, 1, &mut ChaCha8Rng::seed_from_u64(3)).remove(0);

    let goal = dialogue::generate_user_goal(&llm, &state)?;
    println!("goal: {}\n", goal.text);
    let flow = dialogue::plan_flow(&llm, &schema, &state, &goal)?.ok_or("no flow")?;
    println!("flow violations: {:?}", dialogue::validate_flow(&flow.turns, &state.entries));

    let d = dialogue::generate_dialogue(&llm, &flow, &state)?.ok_or("no dialogue")?;
    for t in &d.turns {
        println!("{:>5}: {}", t.role, t.content);
    }
    let check = dialogue::validate_dialogue(&d.turns, &flow.turns, &Lexicon::default());
    let report = RetentionReport::from_checks([&check]);
    println!("\nretained: {} ({}%)", check.retained, report.percent().unwrap_or_default());
    Ok(())
}
