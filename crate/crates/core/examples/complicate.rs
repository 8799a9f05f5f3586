//! Labels a dialogue turn by turn and rewrites its co-reference turns.

use std::path::Path;
use std::sync::Arc;

use dstaug::complicate::{self, Variant};
use dstaug::dialogue;
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
    let lexicon = Lexicon::default();

    let combo = DomainCombo::new(["attraction", "taxi"]).expect("two domains");
    let judged = planner::judge_combo(&llm, &schema, &combo)?;
    let seeds = planner::generate_seed_states(&llm, &schema, judged.reasonable().expect("reasonable"))?;
    let seed = planner::filter_seed_state(&seeds[0], &schema, &RuleSet::default()).seed;
    let state = expand_seed(&seed, &schema, &db, 1, &mut ChaCha8Rng::seed_from_u64(11)).remove(0);
    println!("references: {:?}", state.coref);

    let goal = dialogue::generate_user_goal(&llm, &state)?;
    let flow = dialogue::plan_flow(&llm, &schema, &state, &goal)?.ok_or("no flow")?;
    let d = dialogue::generate_dialogue(&llm, &flow, &state)?.ok_or("no dialogue")?;
    let easy = complicate::assemble_labeled_dialogue(&d, &flow, &state.coref)?;
    let (hard, report) = complicate::complicate_dialogue(&llm, &easy, &lexicon)?;
    assert_eq!(hard.variant, Variant::Difficult);

    for (i, (e, h)) in easy.turns.iter().zip(&hard.turns).enumerate() {
        println!("\nturn {i} {:?}", e.turn_state);
        println!("  easy:      {}", e.user);
        if e.user != h.user {
            println!("  difficult: {}", h.user);
        }
    }
    println!("\n{report:?}");
    println!("labels unchanged: {}", easy.same_annotations(&hard));
    Ok(())
}
