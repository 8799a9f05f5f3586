//! Records a pipeline run against the simulated model, then replays it
//! offline and checks that the dataset is unchanged.

use std::path::Path;
use std::sync::Arc;

use dstaug::llm::SimulatedBackend;
use dstaug::pipeline::{self, BackendConfig, Pipeline, PipelineConfig};
use dstaug::Schema;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let work = tempfile::tempdir()?;
    let tape = work.path().join("run.jsonl");

    let mut config = PipelineConfig::new(root.join("db"), BackendConfig::Simulated { fault_rate: 0.0 }, work.path().join("live"), 5);
    config.combos = Some(vec!["restaurant+taxi".into()]);
    config.states_per_seed = 2;
    let live = Arc::new(SimulatedBackend::new(Schema::multiwoz()));
    let (_, cassette) = pipeline::record_pipeline(config.clone(), live, &tape)?;
    println!("recorded {} exchanges", cassette.len());

    config.backend = BackendConfig::Replay { cassette: tape };
    config.output_dir = work.path().join("replay");
    let summaries = Pipeline::new(config)?.run_all(false)?;
    let calls: usize = summaries.iter().map(|s| s.llm.backend_calls).sum();
    println!("replayed {calls} exchanges");

    for name in ["train-values.jsonl", "train-domainslots.jsonl"] {
        let a = std::fs::read(work.path().join("live").join(name))?;
        let b = std::fs::read(work.path().join("replay").join(name))?;
        println!("{name}: {}", if a == b { "identical" } else { "differs" });
    }
    Ok(())
}
