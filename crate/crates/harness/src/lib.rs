//! Prompting and evaluation around TVL: question records, stratified
//! splits, prompt templates, demonstration retrieval, an HTTP chat client,
//! completion parsing and scored experiment runs.

pub mod client;
pub mod experiment;
pub mod output;
pub mod prompts;
pub mod record;
pub mod retrieve;
pub mod split;
pub mod stub;

use thiserror::Error;

pub use client::{ChatModel, ClientError, HttpModel, ModelConfig, RetrieverConfig};
pub use experiment::{run_experiment, ExperimentResult, PairLog, RunOptions, ShotPolicy};
pub use output::parse_model_output;
pub use prompts::{build_correction_prompt, build_fewshot_prompt, build_nlq_prompts, Demo, Issue, PromptKind, PromptSpec};
pub use record::{questions_for, read_jsonl, write_jsonl, DatasetRecord};
pub use retrieve::{EmbeddingRetriever, LexicalRetriever, Retriever};
pub use split::split_dataset;
pub use stub::{StubMode, StubServer};

/// Curated demonstrations for runs without retrieval.
pub const DEMOS_JSONL: &str = include_str!("../fixtures/demos.jsonl");

pub fn default_demos() -> Vec<Demo> {
    DEMOS_JSONL
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("bundled demos are valid"))
        .collect()
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("run stopped after {completed} of {total} pairs: {source}; rerun with the same checkpoint to resume")]
    Interrupted { completed: usize, total: usize, source: ClientError },
    #[error("run stopped after {completed} of {total} pairs")]
    Incomplete { completed: usize, total: usize },
}
