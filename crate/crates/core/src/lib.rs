//! Zero-shot data augmentation for multi-domain dialogue state tracking.
//!
//! The crate turns an ontology and an entity database into annotated
//! training dialogues with the help of a chat model:
//!
//! 1. [`planner`]: enumerate domain combinations, have the model judge them
//!    and propose seed states with cross-domain references, then drop links
//!    that break the logic rules.
//! 2. [`synth`]: ground each seed into complete dialogue states by sampling
//!    the database in dependency order.
//! 3. [`dialogue`]: user goal, dialogue flow and utterances, with hard
//!    validation of flows and dialogues.
//! 4. [`complicate`]: pair turns into labeled exchanges and rewrite
//!    co-reference turns so values are stated implicitly.
//! 5. [`augment`]: training samples and slot value permutation.
//! 6. [`eval`]: joint goal accuracy and co-reference slot accuracy.
//!
//! [`pipeline`] runs the stages with on-disk artifacts; [`llm`] provides the
//! chat client with caching, retries and record/replay.

pub mod augment;
pub mod complicate;
pub mod dialogue;
pub mod eval;
pub mod jsonl;
pub mod lexicon;
pub mod llm;
pub mod normalize;
pub mod pipeline;
pub mod planner;
pub mod prompts;
pub mod schema;
pub mod synth;

pub use schema::{Database, Schema};
