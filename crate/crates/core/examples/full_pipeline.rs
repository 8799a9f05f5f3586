//! Runs every stage from the shipped replay cassette and prints the stage
//! summaries and the retention rate.

use std::path::Path;

use dstaug::dialogue::RetentionReport;
use dstaug::jsonl;
use dstaug::pipeline::{Pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut config = PipelineConfig::load(root.join("pipeline.json"))?;
    let out = tempfile::tempdir()?;
    config.output_dir = out.path().to_owned();

    let pipeline = Pipeline::new(config)?;
    for s in pipeline.run_all(false)? {
        println!("{:<10} in {:>3} out {:>4} llm {:>3}  {:?}", s.stage, s.inputs, s.records, s.llm.backend_calls, s.counts);
    }
    let report: RetentionReport = serde_json::from_str(&std::fs::read_to_string(out.path().join("retention-report.json"))?)?;
    println!("\nretained {}/{} dialogues ({}%)", report.retained, report.generated, report.percent().unwrap_or_default());
    let values: Vec<serde_json::Value> = jsonl::read(out.path().join("train-values.jsonl"))?;
    println!("first sample: {}", values[0]);
    Ok(())
}
