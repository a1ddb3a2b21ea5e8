use std::path::{Path, PathBuf};

use stepsearch_core::mcts::{verify_trace, TraceRecord};

use super::{CommandError, ItemFailure, Outcome};
use crate::io::{read_jsonl, IoError};

pub const TRACE_TOLERANCE: f64 = 1e-9;

/// Re-derives visits and values of every `*.jsonl` trace under `dir` and
/// checks creation rewards against `tau` when given.
pub fn cmd_verify_traces(dir: &Path, tau: Option<f64>) -> Result<Outcome, CommandError> {
    let entries = std::fs::read_dir(dir).map_err(|source| IoError::Fs { path: dir.to_path_buf(), source })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();

    let mut failures = Vec::new();
    let mut nodes = 0;
    for f in &files {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let records: Vec<TraceRecord> = match read_jsonl(f) {
            Ok(r) => r,
            Err(e) => {
                failures.push(ItemFailure::new(name, e));
                continue;
            }
        };
        let check = verify_trace(&records, tau, TRACE_TOLERANCE);
        nodes += check.nodes;
        if !check.is_ok() {
            let shown: Vec<&str> = check.violations.iter().take(3).map(String::as_str).collect();
            failures.push(ItemFailure::new(
                name,
                format!("{} violations: {}", check.violations.len(), shown.join("; ")),
            ));
        }
    }
    Ok(Outcome {
        summary: vec![format!(
            "{} trace files, {} nodes, {} failing",
            files.len(),
            nodes,
            failures.len()
        )],
        failures,
    })
}
