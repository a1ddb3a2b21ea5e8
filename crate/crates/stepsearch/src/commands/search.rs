use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stepsearch_core::mcts::{search_with_tree, trace_records, SearchResult};
use stepsearch_core::Problem;

use super::{index_problems, load_corpus, read_ids, CommandError, ItemFailure, Outcome, SEARCH_RESULTS, SEARCH_SUMMARY, SELECTION_IDS, TRACES_DIR};
use crate::config::RunConfig;
use crate::io::{file_stem, write_json, write_jsonl};

#[derive(Debug, Clone, Default)]
pub struct SearchOptions {
    /// Problem ids to search; defaults to the selection output when present,
    /// otherwise the whole corpus.
    pub ids: Option<PathBuf>,
    pub tau: Option<f64>,
    pub rollouts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub problems: usize,
    pub searched: usize,
    pub with_trajectories: usize,
    pub trajectories: usize,
    pub failed_rollouts: usize,
    pub failures: Vec<ItemFailure>,
}

fn resolve_ids(config: &RunConfig, options: &SearchOptions, corpus: &[Problem]) -> Result<Vec<String>, CommandError> {
    if let Some(p) = &options.ids {
        return read_ids(p);
    }
    let selected = config.out(SELECTION_IDS);
    if selected.exists() {
        log::info!("searching ids from {}", selected.display());
        return read_ids(&selected);
    }
    Ok(corpus.iter().map(|p| p.id.clone()).collect())
}

pub fn cmd_search(config: &RunConfig, options: &SearchOptions) -> Result<Outcome, CommandError> {
    let corpus = load_corpus(config)?;
    let problems = index_problems(&corpus);
    let ids = resolve_ids(config, options, &corpus)?;
    let mut search_config = config.search_config();
    if let Some(t) = options.tau {
        search_config.tau = t;
    }
    if let Some(r) = options.rollouts {
        search_config.rollouts = r;
    }
    search_config.validate()?;
    let actors = config.actors()?;
    let prm = config.prm()?;
    let traces_dir = config.out(TRACES_DIR);

    let run_one = |id: &String| -> Result<SearchResult, ItemFailure> {
        let problem = problems.get(id.as_str()).ok_or_else(|| ItemFailure::new(id, "unknown problem id"))?;
        let (result, tree) =
            search_with_tree(problem, &actors, prm.as_ref(), &search_config).map_err(|e| ItemFailure::new(id, e))?;
        let trace = trace_records(id, &tree);
        write_jsonl(&traces_dir.join(format!("{}.jsonl", file_stem(id))), &trace).map_err(|e| ItemFailure::new(id, e))?;
        log::info!(
            "{id}: {} trajectories, {} nodes, {} pruned",
            result.trajectories.len(),
            result.tree_stats.node_count,
            result.tree_stats.pruned
        );
        Ok(result)
    };
    let outcomes: Vec<Result<SearchResult, ItemFailure>> = config.thread_pool()?.install(|| ids.par_iter().map(run_one).collect());

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    write_jsonl(&config.out(SEARCH_RESULTS), &results)?;
    let summary = SearchSummary {
        problems: ids.len(),
        searched: results.len(),
        with_trajectories: results.iter().filter(|r| !r.trajectories.is_empty()).count(),
        trajectories: results.iter().map(|r| r.trajectories.len()).sum(),
        failed_rollouts: results.iter().map(|r| r.tree_stats.failed_rollouts).sum(),
        failures: failures.clone(),
    };
    write_json(&config.out(SEARCH_SUMMARY), &summary)?;
    Ok(Outcome {
        summary: vec![
            format!("searched {} of {} problems", summary.searched, summary.problems),
            format!("{} trajectories, {} problems with at least one", summary.trajectories, summary.with_trajectories),
            format!("traces in {}", traces_dir.display()),
        ],
        failures,
    })
}
