//! Pipeline stages behind the CLI subcommands.
//!
//! Each command writes its outputs under the configured `out` directory
//! and reports per-item failures instead of aborting; the binary exits
//! nonzero when any item failed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stepsearch_core::Problem;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::export::ExportError;
use crate::io::{read_jsonl, IoError};

pub mod build_data;
pub mod rerank;
pub mod search;
pub mod select;
pub mod synth;
pub mod verify;

pub use build_data::cmd_build_data;
pub use rerank::cmd_rerank;
pub use search::cmd_search;
pub use select::cmd_select;
pub use synth::cmd_synth;
pub use verify::cmd_verify_traces;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Selection(#[from] stepsearch_core::selection::SelectionError),
    #[error(transparent)]
    Search(#[from] stepsearch_core::mcts::ConfigError),
    #[error(transparent)]
    Bon(#[from] stepsearch_core::inference::BonError),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

/// One item that could not be processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item: String,
    pub error: String,
}

impl ItemFailure {
    pub fn new(item: impl Into<String>, error: impl ToString) -> Self {
        ItemFailure { item: item.into(), error: error.to_string() }
    }
}

/// What a command reports back to the caller.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// Human-readable lines for stdout.
    pub summary: Vec<String>,
    pub failures: Vec<ItemFailure>,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const SELECTION_REPORT: &str = "selection/report.json";
pub const SELECTION_IDS: &str = "selection/ids.txt";
pub const SEARCH_RESULTS: &str = "search/results.jsonl";
pub const SEARCH_SUMMARY: &str = "search/summary.json";
pub const TRACES_DIR: &str = "search/traces";
pub const DATASET_DIR: &str = "dataset";
pub const BUILD_REPORT: &str = "build/report.json";
pub const ACCURACY_CSV: &str = "rerank/accuracy.csv";
pub const ACCURACY_JSON: &str = "rerank/accuracy.json";
pub const AUDIT_JSONL: &str = "rerank/audit.jsonl";

pub fn load_corpus(config: &RunConfig) -> Result<Vec<Problem>, CommandError> {
    let path = config.input("corpus", &config.paths.corpus)?;
    Ok(read_jsonl(&path)?)
}

pub fn index_problems(problems: &[Problem]) -> BTreeMap<&str, &Problem> {
    problems.iter().map(|p| (p.id.as_str(), p)).collect()
}

/// One id per non-blank line; `#` starts a comment line.
pub fn read_ids(path: &Path) -> Result<Vec<String>, CommandError> {
    if !path.exists() {
        return Err(ConfigError::MissingPath { what: "id list", path: path.to_path_buf() }.into());
    }
    let text = crate::io::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}
