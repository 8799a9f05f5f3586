//! Stage-by-stage orchestration with on-disk artifacts.
//!
//! Each stage reads the previous stage's JSONL artifact from the output
//! directory, processes records on a bounded worker pool (output order
//! always follows input order) and writes its own artifact plus a
//! `<stage>.summary.json`. With `resume`, records whose provenance id is
//! already present in the stage's artifact are reused instead of recomputed.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{self, TrainingSample};
use crate::complicate::{self, ComplicationReport, LabeledDialogue, Variant};
use crate::dialogue::{self, Dialogue, DialogueCheck, Flow, FlowViolation, RetentionReport, UserGoal};
use crate::jsonl;
use crate::lexicon::Lexicon;
use crate::llm::{
    Backend, Cassette, ClientStats, Decoding, HttpBackend, HttpConfig, LlmClient, LlmError, RecordingBackend,
    ReplayBackend, ResponseCache, RetryPolicy, SimulatedBackend, Stage as LlmStage,
};
use crate::planner::{self, FilterOutcome, JudgeOutcome, RuleSet, SeedState};
use crate::schema::{Database, Schema, SchemaError};
use crate::synth::{DialogueState, StateSampler, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("stage {stage} needs {artifact}; run the earlier stages first")]
    MissingPrerequisite { stage: Stage, artifact: PathBuf },
    #[error("stage {stage}: {source}")]
    Llm { stage: Stage, source: LlmError },
    #[error("stage {stage}: {message}")]
    Stage { stage: Stage, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[default]
    Judge,
    Seed,
    Synth,
    Goal,
    Flow,
    Dialogue,
    Complicate,
    Augment,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Judge,
        Stage::Seed,
        Stage::Synth,
        Stage::Goal,
        Stage::Flow,
        Stage::Dialogue,
        Stage::Complicate,
        Stage::Augment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Judge => "judge",
            Stage::Seed => "seed",
            Stage::Synth => "synth",
            Stage::Goal => "goal",
            Stage::Flow => "flow",
            Stage::Dialogue => "dialogue",
            Stage::Complicate => "complicate",
            Stage::Augment => "augment",
        }
    }

    /// Artifact this stage writes.
    pub fn artifact(self) -> &'static str {
        match self {
            Stage::Judge => "judgments.jsonl",
            Stage::Seed => "seeds.jsonl",
            Stage::Synth => "states.jsonl",
            Stage::Goal => "goals.jsonl",
            Stage::Flow => "flows.jsonl",
            Stage::Dialogue => "dialogues.jsonl",
            Stage::Complicate => "labeled.jsonl",
            Stage::Augment => "manifest.json",
        }
    }

    fn previous(self) -> Option<Stage> {
        let i = Stage::ALL.iter().position(|s| *s == self)?;
        i.checked_sub(1).map(|p| Stage::ALL[p])
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantSelection {
    Easy,
    Difficult,
    #[default]
    Both,
}

impl VariantSelection {
    pub fn includes(self, v: Variant) -> bool {
        matches!(
            (self, v),
            (VariantSelection::Both, _)
                | (VariantSelection::Easy, Variant::Easy)
                | (VariantSelection::Difficult, Variant::Difficult)
        )
    }
}

impl FromStr for VariantSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Self::Easy),
            "difficult" => Ok(Self::Difficult),
            "both" => Ok(Self::Both),
            _ => Err(format!("unknown variant `{s}` (easy, difficult or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Http(HttpConfig),
    Replay { cassette: PathBuf },
    Simulated {
        #[serde(default)]
        fault_rate: f64,
    },
}

fn default_states_per_seed() -> usize {
    5
}
fn default_cap() -> usize {
    augment::DEFAULT_PERMUTATION_CAP
}
fn default_true() -> bool {
    true
}
fn default_workers() -> usize {
    4
}
fn default_dontcare() -> f64 {
    0.05
}
fn default_retry_cap() -> u32 {
    10
}
fn default_none() -> String {
    augment::DEFAULT_NONE_MARKER.into()
}
fn default_split() -> String {
    "train".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Schema file; the built-in MultiWOZ schema when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_path: Option<PathBuf>,
    /// Directory holding one `<domain>.json` entity table per domain.
    pub db_dir: PathBuf,
    pub backend: BackendConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    pub rng_seed: u64,
    #[serde(default = "default_states_per_seed")]
    pub states_per_seed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds_per_combo: Option<usize>,
    /// Restricts seed generation to these combination ids (`a+b+c`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combos: Option<Vec<String>>,
    /// Only the first `max_seeds` kept seeds are grounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seeds: Option<usize>,
    #[serde(default = "default_cap")]
    pub permutation_cap: usize,
    #[serde(default = "default_true")]
    pub permute: bool,
    #[serde(default)]
    pub variant: VariantSelection,
    pub output_dir: PathBuf,
    /// Per-stage replacements for the default sampling parameters.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub decoding: BTreeMap<LlmStage, Decoding>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_dontcare")]
    pub dontcare_prob: f64,
    #[serde(default = "default_retry_cap")]
    pub retry_cap: u32,
    #[serde(default = "default_none")]
    pub none_marker: String,
    #[serde(default = "default_split")]
    pub split: String,
}

impl PipelineConfig {
    /// Minimal config with defaults for everything optional.
    pub fn new(db_dir: impl Into<PathBuf>, backend: BackendConfig, output_dir: impl Into<PathBuf>, rng_seed: u64) -> Self {
        Self {
            schema_path: None,
            db_dir: db_dir.into(),
            backend,
            cache_dir: None,
            rng_seed,
            states_per_seed: default_states_per_seed(),
            seeds_per_combo: None,
            combos: None,
            max_seeds: None,
            permutation_cap: default_cap(),
            permute: true,
            variant: VariantSelection::Both,
            output_dir: output_dir.into(),
            decoding: BTreeMap::new(),
            retry: RetryPolicy::default(),
            workers: default_workers(),
            dontcare_prob: default_dontcare(),
            retry_cap: default_retry_cap(),
            none_marker: default_none(),
            split: default_split(),
        }
    }

    /// Reads a JSON config; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut config: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = config.schema_path.as_mut() {
            fix(p);
        }
        fix(&mut config.db_dir);
        fix(&mut config.output_dir);
        if let Some(p) = config.cache_dir.as_mut() {
            fix(p);
        }
        if let BackendConfig::Replay { cassette } = &mut config.backend {
            fix(cassette);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_owned()));
        if self.states_per_seed == 0 {
            return bad("states_per_seed must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.permutation_cap == 0 {
            return bad("permutation_cap must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.dontcare_prob) {
            return bad("dontcare_prob must lie in [0, 1]");
        }
        if self.none_marker.is_empty() {
            return bad("none_marker must not be empty");
        }
        for (stage, d) in &self.decoding {
            d.validate()
                .map_err(|e| PipelineError::Config(format!("decoding for {}: {e}", stage.as_str())))?;
        }
        Ok(())
    }

    /// Digest of every setting that can change the produced data.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        let name = |p: &Path| PathBuf::from(p.file_name().unwrap_or_default());
        c.output_dir = PathBuf::new();
        c.cache_dir = None;
        c.workers = 0;
        c.db_dir = name(&c.db_dir);
        c.schema_path = c.schema_path.as_deref().map(name);
        if let BackendConfig::Replay { cassette } = &mut c.backend {
            *cassette = name(cassette);
        }
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    pub fn load_schema(&self) -> Result<Schema, PipelineError> {
        match &self.schema_path {
            Some(p) => Ok(Schema::load(p)?),
            None => Ok(Schema::multiwoz()),
        }
    }

    /// The configured backend, unwrapped.
    pub fn backend(&self, schema: &Schema) -> Result<Arc<dyn Backend>, PipelineError> {
        Ok(match &self.backend {
            BackendConfig::Http(h) => Arc::new(
                HttpBackend::new(h.clone()).map_err(|e| PipelineError::Config(e.to_string()))?,
            ),
            BackendConfig::Replay { cassette } => {
                Arc::new(ReplayBackend::load(cassette).map_err(io_err(cassette))?)
            }
            BackendConfig::Simulated { fault_rate } => {
                Arc::new(SimulatedBackend::new(schema.clone()).with_fault_rate(*fault_rate))
            }
        })
    }

    pub fn client(&self, backend: Arc<dyn Backend>) -> Result<LlmClient, PipelineError> {
        let cache = match &self.cache_dir {
            Some(dir) => ResponseCache::on_disk(dir).map_err(io_err(dir))?,
            None => ResponseCache::in_memory(),
        };
        let mut client = LlmClient::new(backend).with_cache(cache).with_retry(self.retry);
        for (stage, d) in &self.decoding {
            client = client
                .with_decoding(*stage, *d)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(client)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub combo_id: String,
    pub original: SeedState,
    pub outcome: FilterOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub state_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<UserGoal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub state_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<Flow>,
    pub violations: Vec<FlowViolation>,
}

impl FlowRecord {
    pub fn valid_flow(&self) -> Option<&Flow> {
        self.flow.as_ref().filter(|_| self.violations.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub state_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue: Option<Dialogue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<DialogueCheck>,
}

impl DialogueRecord {
    pub fn retained(&self) -> Option<&Dialogue> {
        self.dialogue.as_ref().filter(|_| self.check.as_ref().is_some_and(|c| c.retained))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub inputs: usize,
    /// Inputs whose output was taken from an earlier run.
    pub reused: usize,
    pub records: usize,
    pub counts: BTreeMap<String, usize>,
    pub llm: ClientStats,
}

impl StageSummary {
    fn bump(&mut self, key: &str, by: usize) {
        *self.counts.entry(key.to_owned()).or_default() += by;
    }
}

/// Stable 64-bit stream seed for one record.
pub fn stream_seed(seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub schema: Schema,
    pub db: Database,
    pub llm: LlmClient,
    pub lexicon: Lexicon,
    pub rules: RuleSet,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let schema = config.load_schema()?;
        let backend = config.backend(&schema)?;
        Self::with_backend(config, schema, backend)
    }

    /// Uses `backend` in place of the configured one.
    pub fn with_backend(
        config: PipelineConfig,
        schema: Schema,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        let db = Database::load_dir(&config.db_dir, &schema)?;
        let llm = config.client(backend)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self { config, schema, db, llm, lexicon: Lexicon::default(), rules: RuleSet::default(), pool })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn read<T: serde::de::DeserializeOwned>(&self, stage: Stage, from: Stage) -> Result<Vec<T>, PipelineError> {
        let path = self.path(from.artifact());
        if !path.exists() {
            return Err(PipelineError::MissingPrerequisite { stage, artifact: path });
        }
        jsonl::read(&path).map_err(io_err(&path))
    }

    fn existing<T: serde::de::DeserializeOwned>(&self, stage: Stage, resume: bool) -> Result<Vec<T>, PipelineError> {
        if !resume {
            return Ok(Vec::new());
        }
        let path = self.path(stage.artifact());
        jsonl::read_or_empty(&path).map_err(io_err(&path))
    }

    fn write<T: Serialize>(&self, stage: Stage, records: &[T]) -> Result<(), PipelineError> {
        let path = self.path(stage.artifact());
        jsonl::write(&path, records).map_err(io_err(&path))
    }

    fn finish(&self, mut summary: StageSummary, before: ClientStats) -> Result<StageSummary, PipelineError> {
        summary.llm = self.llm.stats().since(&before);
        let path = self.path(&format!("{}.summary.json", summary.stage));
        jsonl::write_json(&path, &summary).map_err(io_err(&path))?;
        log::info!(
            "{}: {} inputs, {} records, {} reused, {} LLM calls ({} cached)",
            summary.stage,
            summary.inputs,
            summary.records,
            summary.reused,
            summary.llm.requests,
            summary.llm.cache_hits
        );
        Ok(summary)
    }

    /// Maps inputs on the worker pool, reusing earlier outputs by key.
    #[allow(clippy::too_many_arguments)]
    fn map_inputs<I, O, F>(
        &self,
        stage: Stage,
        inputs: &[I],
        key_in: impl Fn(&I) -> String + Sync,
        existing: Vec<O>,
        key_out: impl Fn(&O) -> String,
        summary: &mut StageSummary,
        work: F,
    ) -> Result<Vec<O>, PipelineError>
    where
        I: Sync,
        O: Send + Sync + Clone,
        F: Fn(&I) -> Result<Vec<O>, LlmError> + Sync,
    {
        let mut done: HashMap<String, Vec<O>> = HashMap::new();
        for o in existing {
            done.entry(key_out(&o)).or_default().push(o);
        }
        summary.inputs = inputs.len();
        let results: Vec<Result<(bool, Vec<O>), LlmError>> = self.pool.install(|| {
            inputs
                .par_iter()
                .map(|i| match done.get(&key_in(i)) {
                    Some(prev) => Ok((true, prev.clone())),
                    None => work(i).map(|o| (false, o)),
                })
                .collect()
        });
        let mut out = Vec::new();
        for r in results {
            let (reused, records) = r.map_err(|source| PipelineError::Llm { stage, source })?;
            if reused {
                summary.reused += 1;
            }
            out.extend(records);
        }
        summary.records = out.len();
        Ok(out)
    }

    pub fn run_stage(&self, stage: Stage, resume: bool) -> Result<StageSummary, PipelineError> {
        if let Some(prev) = stage.previous() {
            let artifact = self.path(prev.artifact());
            if !artifact.exists() {
                return Err(PipelineError::MissingPrerequisite { stage, artifact });
            }
        }
        std::fs::create_dir_all(&self.config.output_dir).map_err(io_err(&self.config.output_dir))?;
        let before = self.llm.stats();
        let summary = match stage {
            Stage::Judge => self.judge(resume)?,
            Stage::Seed => self.seed(resume)?,
            Stage::Synth => self.synth(resume)?,
            Stage::Goal => self.goal(resume)?,
            Stage::Flow => self.flow(resume)?,
            Stage::Dialogue => self.dialogue(resume)?,
            Stage::Complicate => self.complicate(resume)?,
            Stage::Augment => self.augment()?,
        };
        self.finish(summary, before)
    }

    pub fn run_all(&self, resume: bool) -> Result<Vec<StageSummary>, PipelineError> {
        Stage::ALL.iter().map(|s| self.run_stage(*s, resume)).collect()
    }

    fn judge(&self, resume: bool) -> Result<StageSummary, PipelineError> {
        let stage = Stage::Judge;
        let mut summary = StageSummary { stage, ..Default::default() };
        let combos = planner::enumerate_combos(&self.schema.domain_names())
            .map_err(|e| PipelineError::Stage { stage, message: e.to_string() })?;
        let existing: Vec<JudgeOutcome> = self.existing(stage, resume)?;
        let out = self.map_inputs(
            stage,
            &combos,
            |c| c.id(),
            existing,
            |o| o.combo().id(),
            &mut summary,
            |c| planner::judge_combo(&self.llm, &self.schema, c).map(|o| vec![o]),
        )?;
        for o in &out {
            let key = match o {
                JudgeOutcome::Parsed(j) if j.is_reasonable => "reasonable",
                JudgeOutcome::Parsed(_) => "unreasonable",
                JudgeOutcome::Unparseable { .. } => "unparseable",
            };
            summary.bump(key, 1);
        }
        self.write(stage, &out)?;
        Ok(summary)
    }

    fn seed(&self, resume: bool) -> Result<StageSummary, PipelineError> {
        let stage = Stage::Seed;
        let mut summary = StageSummary { stage, ..Default::default() };
        let judgments: Vec<JudgeOutcome> = self.read(stage, Stage::Judge)?;
        let wanted = |id: &str| self.config.combos.as_ref().is_none_or(|c| c.iter().any(|x| x == id));
        let reasonable: Vec<_> = judgments
            .iter()
            .filter_map(|j| j.reasonable().cloned())
            .filter(|j| wanted(&j.combo.id()))
            .collect();
        let existing: Vec<SeedRecord> = self.existing(stage, resume)?;
        let cap = self.config.seeds_per_combo;
        let out = self.map_inputs(
            stage,
            &reasonable,
            |j| j.combo.id(),
            existing,
            |r| r.combo_id.clone(),
            &mut summary,
            |j| {
                let seeds = match planner::generate_seed_states(&self.llm, &self.schema, j) {
                    Ok(s) => s,
                    Err(planner::PlannerError::Llm(e)) => return Err(e),
                    Err(e) => {
                        log::warn!("{e}");
                        Vec::new()
                    }
                };
                Ok(seeds
                    .into_iter()
                    .take(cap.unwrap_or(usize::MAX))
                    .map(|s| SeedRecord {
                        combo_id: j.combo.id(),
                        outcome: planner::filter_seed_state(&s, &self.schema, &self.rules),
                        original: s,
                    })
                    .collect())
            },
        )?;
        for r in &out {
            summary.bump("seeds", 1);
            summary.bump("links_removed", r.outcome.removed.len());
            for l in &r.outcome.removed {
                summary.bump(&format!("removed_{}", l.rule.as_str()), 1);
            }
            if r.outcome.rejected.is_some() {
                summary.bump("rejected", 1);
            } else {
                summary.bump("kept", 1);
            }
            if r.outcome.lost_all_links {
                summary.bump("lost_all_links", 1);
            }
        }
        self.write(stage, &out)?;
        Ok(summary)
    }

    fn synth(&self, resume: bool) -> Result<StageSummary, PipelineError> {
        let stage = Stage::Synth;
        let mut summary = StageSummary { stage, ..Default::default() };
        let seeds: Vec<SeedRecord> = self.read(stage, Stage::Seed)?;
        let kept: Vec<SeedState> = seeds
            .into_iter()
            .filter(|r| r.outcome.rejected.is_none())
            .map(|r| r.outcome.seed)
            .take(self.config.max_seeds.unwrap_or(usize::MAX))
            .collect();
        let sampler = StateSampler::new(
            &self.schema,
            &self.db,
            SynthConfig {
                retry_cap: self.config.retry_cap,
                dontcare_prob: self.config.dontcare_prob,
                ..SynthConfig::default()
            },
        );
        let existing: Vec<DialogueState> = self.existing(stage, resume)?;
        let n = self.config.states_per_seed;
        let out = self.map_inputs(
            stage,
            &kept,
            |s| s.id.clone(),
            existing,
            |s| s.seed_id.clone(),
            &mut summary,
            |seed| {
                if let Err(e) = crate::synth::dependency_order(seed) {
                    log::info!("seed {} rejected: {e}", seed.id);
                    return Ok(Vec::new());
                }
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.config.rng_seed, &seed.id));
                Ok(sampler.expand(seed, n, &mut rng))
            },
        )?;
        for seed in &kept {
            match crate::synth::dependency_order(seed) {
                Err(SynthError::Cycle(_)) => summary.bump("rejected_cycle", 1),
                Err(_) => summary.bump("rejected_other", 1),
                Ok(_) if !out.iter().any(|s| s.seed_id == seed.id) => summary.bump("unsatisfiable", 1),
                Ok(_) => {}
            }
        }
        summary.bump("states", out.len());
        self.write(stage, &out)?;
        Ok(summary)
    }

    fn states_by_id(&self, stage: Stage) -> Result<IndexMap<String, DialogueState>, PipelineError> {
        let states: Vec<DialogueState> = self.read(stage, Stage::Synth)?;
        Ok(states.into_iter().map(|s| (s.id.clone(), s)).collect())
    }

    fn goal(&self, resume: bool) -> Result<StageSummary, PipelineError> {
        let stage = Stage::Goal;
        let mut summary = StageSummary { stage, ..Default::default() };
        let states: Vec<DialogueState> = self.read(stage, Stage::Synth)?;
        let existing: Vec<GoalRecord> = self.existing(stage, resume)?;
        let out = self.map_inputs(
            stage,
            &states,
            |s| s.id.clone(),
            existing,
            |g| g.state_id.clone(),
            &mut summary,
            |s| {
                let record = match dialogue::generate_user_goal(&self.llm, s) {
                    Ok(goal) => GoalRecord { state_id: s.id.clone(), goal: Some(goal), error: None },
                    Err(dialogue::DialogueError::Llm(e)) => return Err(e),
                    Err(e) => GoalRecord { state_id: s.id.clone(), goal: None, error: Some(e.to_string()) },
                };
                Ok(vec![record])
            },
        )?;
        summary.bump("goals", out.iter().filter(|g| g.goal.is_some()).count());
        summary.bump("rejected", out.iter().filter(|g| g.goal.is_none()).count());
        self.write(stage, &out)?;
        Ok(summary)
    }

    fn flow(&self, resume: bool) -> Result<StageSummary, PipelineError> {
        let stage = Stage::Flow;
        let mut summary = StageSummary { stage, ..Default::default() };
        let states = self.states_by_id(stage)?;
        let goals: Vec<GoalRecord> = self.read(stage, Stage::Goal)?;
        let goals: Vec<UserGoal> = goals.into_iter().filter_map(|g| g.goal).collect();
        let existing: Vec<FlowRecord> = self.existing(stage, resume)?;
        let out = self.map_inputs(
            stage,
            &goals,
            |g| g.state_id.clone(),
            existing,
            |f| f.state_id.clone(),
            &mut summary,
            |g| {
                let Some(state) = states.get(&g.state_id) else {
                    return Ok(Vec::new());
                };
                let flow = dialogue::plan_flow(&self.llm, &self.schema, state, g)?;
                let violations = match &flow {
                    Some(f) => dialogue::validate_flow(&f.turns, &state.entries),
                    None => Vec::new(),
                };
                Ok(vec![FlowRecord { state_id: g.state_id.clone(), flow, violations }])
            },
        )?;
        for r in &out {
            match (&r.flow, r.violations.first()) {
                (None, _) => summary.bump("unparseable", 1),
                (Some(_), None) => summary.bump("valid", 1),
                (Some(_), Some(v)) => summary.bump(&format!("invalid_{}", v.kind()), 1),
            }
        }
        self.write(stage, &out)?;
        Ok(summary)
    }

    fn dialogue(&self, resume: bool) -> Result<StageSummary, PipelineError> {
        let stage = Stage::Dialogue;
        let mut summary = StageSummary { stage, ..Default::default() };
        let states = self.states_by_id(stage)?;
        let flows: Vec<FlowRecord> = self.read(stage, Stage::Flow)?;
        let flows: Vec<Flow> = flows.iter().filter_map(|r| r.valid_flow().cloned()).collect();
        let existing: Vec<DialogueRecord> = self.existing(stage, resume)?;
        let out = self.map_inputs(
            stage,
            &flows,
            |f| f.state_id.clone(),
            existing,
            |d| d.state_id.clone(),
            &mut summary,
            |f| {
                let Some(state) = states.get(&f.state_id) else {
                    return Ok(Vec::new());
                };
                let d = dialogue::generate_dialogue(&self.llm, f, state)?;
                let check = d.as_ref().map(|d| dialogue::validate_dialogue(&d.turns, &f.turns, &self.lexicon));
                Ok(vec![DialogueRecord { state_id: f.state_id.clone(), dialogue: d, check }])
            },
        )?;
        let report = RetentionReport::from_checks(out.iter().filter_map(|r| r.check.as_ref()));
        summary.bump("unparseable", out.iter().filter(|r| r.dialogue.is_none()).count());
        summary.bump("generated", report.generated);
        summary.bump("retained", report.retained);
        summary.bump("deleted", report.deleted);
        let path = self.path("retention-report.json");
        jsonl::write_json(&path, &report).map_err(io_err(&path))?;
        self.write(stage, &out)?;
        Ok(summary)
    }

    fn complicate(&self, resume: bool) -> Result<StageSummary, PipelineError> {
        let stage = Stage::Complicate;
        let mut summary = StageSummary { stage, ..Default::default() };
        let states = self.states_by_id(stage)?;
        let flows: Vec<FlowRecord> = self.read(stage, Stage::Flow)?;
        let flows: HashMap<String, Flow> =
            flows.into_iter().filter_map(|r| r.valid_flow().cloned().map(|f| (f.state_id.clone(), f))).collect();
        let dialogues: Vec<DialogueRecord> = self.read(stage, Stage::Dialogue)?;
        let retained: Vec<Dialogue> = dialogues.iter().filter_map(|r| r.retained().cloned()).collect();
        let existing: Vec<LabeledDialogue> = self.existing(stage, resume)?;
        let variant = self.config.variant;
        let reports = std::sync::Mutex::new(ComplicationReport::default());
        let failures = std::sync::Mutex::new(0usize);
        let out = self.map_inputs(
            stage,
            &retained,
            |d| d.state_id.clone(),
            existing,
            |l| l.state_id.clone(),
            &mut summary,
            |d| {
                let (Some(flow), Some(state)) = (flows.get(&d.state_id), states.get(&d.state_id)) else {
                    return Ok(Vec::new());
                };
                let easy = match complicate::assemble_labeled_dialogue(d, flow, &state.coref) {
                    Ok(ld) => ld,
                    Err(e) => {
                        log::warn!("{}: {e}", d.id);
                        *failures.lock().expect("lock") += 1;
                        return Ok(Vec::new());
                    }
                };
                let mut out = Vec::new();
                if variant.includes(Variant::Difficult) {
                    let (hard, report) = complicate::complicate_dialogue(&self.llm, &easy, &self.lexicon)?;
                    let mut total = reports.lock().expect("lock");
                    total.flagged += report.flagged;
                    total.modified += report.modified;
                    total.copied += report.copied;
                    total.kept += report.kept;
                    total.restored += report.restored;
                    if variant.includes(Variant::Easy) {
                        out.push(easy);
                    }
                    out.push(hard);
                } else {
                    out.push(easy);
                }
                Ok(out)
            },
        )?;
        let r = reports.into_inner().expect("lock");
        summary.bump("assembly_failures", failures.into_inner().expect("lock"));
        summary.bump("turns_flagged", r.flagged);
        summary.bump("turns_modified", r.modified);
        summary.bump("turns_copied", r.copied);
        summary.bump("turns_kept_unparseable", r.kept);
        summary.bump("turns_restored", r.restored);
        summary.bump("easy", out.iter().filter(|l| l.variant == Variant::Easy).count());
        summary.bump("difficult", out.iter().filter(|l| l.variant == Variant::Difficult).count());
        self.write(stage, &out)?;
        Ok(summary)
    }

    fn augment(&self) -> Result<StageSummary, PipelineError> {
        let stage = Stage::Augment;
        let mut summary = StageSummary { stage, ..Default::default() };
        let labeled: Vec<LabeledDialogue> = self.read(stage, Stage::Complicate)?;
        let selected: Vec<&LabeledDialogue> =
            labeled.iter().filter(|l| self.config.variant.includes(l.variant)).collect();
        summary.inputs = selected.len();
        let base: Vec<TrainingSample> = selected
            .iter()
            .flat_map(|l| augment::to_samples(l, &self.schema, &self.lexicon, &self.config.none_marker))
            .collect();
        let samples = if self.config.permute {
            augment::permute_all(&base, self.config.permutation_cap, &self.config.none_marker, self.config.rng_seed)
        } else {
            base.clone()
        };
        summary.bump("base_samples", base.len());
        if samples.is_empty() {
            return Err(PipelineError::Stage { stage, message: "no labeled dialogues to export".into() });
        }
        let manifest = augment::export_training(&samples, &self.config.output_dir, &self.config.split, &self.config.digest())
            .map_err(io_err(&self.config.output_dir))?;
        summary.records = manifest.total;
        for (k, v) in &manifest.counts {
            summary.bump(k, *v);
        }
        Ok(summary)
    }
}

/// Runs every stage with `live` wrapped in a recorder and saves the
/// exchanges to `cassette_path`, merged with any entries already there.
pub fn record_pipeline(
    config: PipelineConfig,
    live: Arc<dyn Backend>,
    cassette_path: &Path,
) -> Result<(Vec<StageSummary>, Cassette), PipelineError> {
    let existing = Cassette::load_or_new(cassette_path).map_err(io_err(cassette_path))?;
    let recorder = Arc::new(RecordingBackend::new(live, existing));
    let schema = config.load_schema()?;
    let pipeline = Pipeline::with_backend(config, schema, recorder.clone())?;
    let summaries = pipeline.run_all(false)?;
    let cassette = recorder.cassette();
    cassette.save(cassette_path).map_err(io_err(cassette_path))?;
    Ok((summaries, cassette))
}
