//! Grounds a seed state into complete dialogue states from the database.

use std::path::Path;

use dstaug::planner::{DomainCombo, SeedState, ValueSpec};
use dstaug::synth::{self, StateSampler, SynthConfig};
use dstaug::{Database, Schema};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let schema = Schema::load(root.join("schema.json"))?;
    let db = Database::load_dir(root.join("db"), &schema)?;

    let entries = [
        ("taxi-departure", ValueSpec::Blank),
        ("taxi-destination", ValueSpec::Reference("restaurant-name".into())),
        ("taxi-arriveby", ValueSpec::Reference("restaurant-book time".into())),
        ("restaurant-name", ValueSpec::Blank),
        ("restaurant-book time", ValueSpec::Blank),
        ("restaurant-pricerange", ValueSpec::Literal("moderate".into())),
    ];
    let seed = SeedState {
        id: "hotel+restaurant+taxi/s1".into(),
        combo: DomainCombo::new(["hotel", "restaurant", "taxi"]).expect("three domains"),
        entries: entries.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
    };
    println!("fill order: {:?}", synth::dependency_order(&seed)?);

    let sampler = StateSampler::new(&schema, &db, SynthConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for state in sampler.expand(&seed, 3, &mut rng) {
        println!("\n{} (stream {})", state.id, state.rng_seed);
        for (k, v) in &state.entries {
            println!("  {k:<22} {v}");
        }
    }
    Ok(())
}
