use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use dstaug::complicate::LabeledDialogue;
use dstaug::eval::{self, CorefAnnotation, PredictionRecord};
use dstaug::jsonl;
use dstaug::llm::{Backend, SimulatedBackend};
use dstaug::pipeline::{self, BackendConfig, Pipeline, PipelineConfig, Stage, StageSummary, VariantSelection};

#[derive(Parser)]
#[command(name = "dstaug", version, about = "Easy-to-difficult dialogue data augmentation for state tracking")]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single stage when no subcommand is given.
    #[arg(long)]
    stage: Option<Stage>,
    /// Reuse records already present in stage artifacts.
    #[arg(long, global = true)]
    resume: bool,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Export samples without slot value permutation.
    #[arg(long, global = true)]
    no_permute: bool,
    #[arg(long, global = true)]
    variant: Option<VariantSelection>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Judge every domain combination.
    Judge,
    /// Propose seed states and filter their references.
    Seed,
    /// Ground seeds into dialogue states.
    Synth,
    /// Write one user goal per state.
    Goal,
    /// Plan and validate dialogue flows.
    Flow,
    /// Generate and validate dialogues.
    Dialogue,
    /// Label turns and rewrite co-reference turns.
    Complicate,
    /// Export training samples.
    Augment,
    /// Run every stage in order.
    RunAll,
    /// Run every stage against a live backend and save the exchanges.
    RecordCassette {
        /// Output cassette; defaults to the config's replay cassette.
        #[arg(long)]
        cassette: Option<PathBuf>,
        /// Record from the built-in simulated model.
        #[arg(long)]
        simulated: bool,
        /// Share of simulated dialogues that drop one stated value.
        #[arg(long, default_value_t = 0.0, requires = "simulated")]
        fault_rate: f64,
    },
    /// Score predictions against labeled dialogues.
    Eval {
        /// Labeled dialogues (labeled.jsonl).
        #[arg(long)]
        gold: PathBuf,
        /// Prediction records (JSONL).
        #[arg(long)]
        predictions: PathBuf,
        /// Co-reference annotations (JSONL); derived from the gold file when absent.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, String> {
    let path = cli.config.as_ref().ok_or("--config is required")?;
    let mut config = PipelineConfig::load(path).map_err(|e| e.to_string())?;
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if cli.no_permute {
        config.permute = false;
    }
    if let Some(v) = cli.variant {
        config.variant = v;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn print_summary(s: &StageSummary) {
    let counts: Vec<String> = s.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{:<10} inputs={} records={} reused={} llm_requests={} cache_hits={} {}",
        s.stage.as_str(),
        s.inputs,
        s.records,
        s.reused,
        s.llm.requests,
        s.llm.cache_hits,
        counts.join(" ")
    );
}

fn run(cli: Cli) -> Result<(), String> {
    let stage = match (&cli.command, cli.stage) {
        (None, Some(s)) => Some(s),
        (None, None) => return Err("give a subcommand or --stage".into()),
        (Some(_), Some(_)) => return Err("--stage cannot be combined with a subcommand".into()),
        (Some(c), None) => match c {
            Command::Judge => Some(Stage::Judge),
            Command::Seed => Some(Stage::Seed),
            Command::Synth => Some(Stage::Synth),
            Command::Goal => Some(Stage::Goal),
            Command::Flow => Some(Stage::Flow),
            Command::Dialogue => Some(Stage::Dialogue),
            Command::Complicate => Some(Stage::Complicate),
            Command::Augment => Some(Stage::Augment),
            _ => None,
        },
    };
    if let Some(stage) = stage {
        let p = Pipeline::new(load_config(&cli)?).map_err(|e| e.to_string())?;
        print_summary(&p.run_stage(stage, cli.resume).map_err(|e| e.to_string())?);
        return Ok(());
    }
    match cli.command.as_ref().expect("subcommand") {
        Command::RunAll => {
            let p = Pipeline::new(load_config(&cli)?).map_err(|e| e.to_string())?;
            for s in p.run_all(cli.resume).map_err(|e| e.to_string())? {
                print_summary(&s);
            }
        }
        Command::RecordCassette { cassette, simulated, fault_rate } => {
            let config = load_config(&cli)?;
            let target = match (cassette, &config.backend) {
                (Some(p), _) => p.clone(),
                (None, BackendConfig::Replay { cassette }) => cassette.clone(),
                (None, _) => return Err("give --cassette".into()),
            };
            let schema = config.load_schema().map_err(|e| e.to_string())?;
            let live: Arc<dyn Backend> = match (&config.backend, *simulated) {
                (_, true) => Arc::new(SimulatedBackend::new(schema).with_fault_rate(*fault_rate)),
                (BackendConfig::Replay { .. }, false) => {
                    return Err("a replay backend cannot record; use --simulated or an http backend".into())
                }
                _ => config.backend(&schema).map_err(|e| e.to_string())?,
            };
            let (summaries, tape) = pipeline::record_pipeline(config, live, &target).map_err(|e| e.to_string())?;
            for s in &summaries {
                print_summary(s);
            }
            println!("cassette {} holds {} exchanges", target.display(), tape.len());
        }
        Command::Eval { gold, predictions, annotations, output } => {
            let labeled: Vec<LabeledDialogue> =
                jsonl::read(gold).map_err(|e| format!("{}: {e}", gold.display()))?;
            let preds: Vec<PredictionRecord> =
                jsonl::read(predictions).map_err(|e| format!("{}: {e}", predictions.display()))?;
            let notes: Vec<CorefAnnotation> = match annotations {
                Some(p) => jsonl::read(p).map_err(|e| format!("{}: {e}", p.display()))?,
                None => eval::annotations_from_labeled(&labeled),
            };
            let report = eval::evaluate(&preds, &eval::gold_turns(&labeled), &notes).map_err(|e| e.to_string())?;
            match output {
                Some(p) => jsonl::write_json(p, &report).map_err(|e| format!("{}: {e}", p.display()))?,
                None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
            }
        }
        _ => unreachable!("stage commands handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
