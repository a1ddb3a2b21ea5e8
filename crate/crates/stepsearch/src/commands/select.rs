use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use stepsearch_core::selection::{
    difficulty_filter, mark_prioritized, report_for, select_samples, stratified_quotas, CellCount, ProblemStat,
    SelectionError, SelectionReport,
};
use stepsearch_core::{Grade, Problem, Subject};

use super::{load_corpus, CommandError, ItemFailure, Outcome, SELECTION_IDS, SELECTION_REPORT};
use crate::config::RunConfig;
use crate::io::{read_jsonl, write_atomic, write_json};

/// Step scores of prior rollouts for one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutScores {
    pub problem_id: String,
    pub solutions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaRow {
    pub subject: Subject,
    pub grade: Grade,
    /// Distinct concepts in the cell, or its problem count when no problem
    /// in the cell lists concepts.
    pub count: u64,
    pub quota: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutput {
    pub top_fraction: f64,
    pub total_quota: u64,
    pub corpus: usize,
    /// Dropped by the difficulty filter before ranking.
    pub excluded: Vec<String>,
    pub reports: Vec<SelectionReport>,
    pub selected: Vec<String>,
    pub quotas: Vec<QuotaRow>,
    pub failures: Vec<ItemFailure>,
}

#[derive(Debug, Clone, Default)]
pub struct SelectOptions {
    pub top_fraction: Option<f64>,
}

/// Per-cell counts: distinct concept ids, falling back to problem counts.
pub fn cell_counts(problems: &[Problem]) -> Vec<CellCount> {
    let mut concepts: BTreeMap<(Subject, Grade), BTreeSet<&str>> = BTreeMap::new();
    let mut problems_per: BTreeMap<(Subject, Grade), u64> = BTreeMap::new();
    for p in problems {
        let key = (p.subject, p.grade);
        concepts.entry(key).or_default().extend(p.concept_ids.iter().map(String::as_str));
        *problems_per.entry(key).or_default() += 1;
    }
    problems_per
        .into_iter()
        .map(|(key, n)| {
            let c = concepts[&key].len() as u64;
            CellCount { subject: key.0, grade: key.1, count: if c > 0 { c } else { n } }
        })
        .collect()
}

pub fn run_selection(
    config: &RunConfig,
    problems: &[Problem],
    scores: &[RolloutScores],
    stats: Option<&[ProblemStat]>,
    top_fraction: f64,
) -> Result<SelectionOutput, CommandError> {
    if problems.is_empty() {
        return Err(SelectionError::EmptyCorpus.into());
    }
    let mut failures = Vec::new();
    let by_id: BTreeMap<&str, &RolloutScores> = scores.iter().map(|s| (s.problem_id.as_str(), s)).collect();
    let known: BTreeSet<&str> = problems.iter().map(|p| p.id.as_str()).collect();
    for s in scores.iter().filter(|s| !known.contains(s.problem_id.as_str())) {
        log::warn!("rollout scores for {} which is not in the corpus", s.problem_id);
    }

    let mut excluded = Vec::new();
    let mut pool: Vec<&Problem> = problems.iter().collect();
    if let Some(stats) = stats {
        let kept: BTreeSet<String> = difficulty_filter(stats)?.into_iter().collect();
        let judged: BTreeSet<&str> = stats.iter().map(|s| s.problem_id.as_str()).collect();
        pool.retain(|p| {
            let keep = !judged.contains(p.id.as_str()) || kept.contains(&p.id);
            if !keep {
                excluded.push(p.id.clone());
            }
            keep
        });
    }

    let mut reports = Vec::new();
    for p in pool {
        match by_id.get(p.id.as_str()) {
            None => failures.push(ItemFailure::new(&p.id, "no rollout scores")),
            Some(s) => match report_for(&p.id, &s.solutions) {
                Ok(r) => reports.push(r),
                Err(e) => failures.push(ItemFailure::new(&p.id, e)),
            },
        }
    }
    let selected = if reports.is_empty() { Vec::new() } else { select_samples(&reports, top_fraction)? };
    mark_prioritized(&mut reports, &selected);

    let counts = cell_counts(problems);
    let quotas = stratified_quotas(&counts, config.selection.total_quota)?;
    let quotas = counts
        .iter()
        .map(|c| QuotaRow { subject: c.subject, grade: c.grade, count: c.count, quota: quotas[&(c.subject, c.grade)] })
        .collect();

    Ok(SelectionOutput {
        top_fraction,
        total_quota: config.selection.total_quota,
        corpus: problems.len(),
        excluded,
        reports,
        selected,
        quotas,
        failures,
    })
}

pub fn cmd_select(config: &RunConfig, options: &SelectOptions) -> Result<Outcome, CommandError> {
    let problems = load_corpus(config)?;
    let scores_path = config.input("rollout_scores", &config.paths.rollout_scores)?;
    let scores: Vec<RolloutScores> = read_jsonl(&scores_path)?;
    let stats: Option<Vec<ProblemStat>> = match config.optional_input("problem_stats", &config.paths.problem_stats)? {
        Some(p) => Some(read_jsonl(&p)?),
        None => None,
    };
    let top_fraction = options.top_fraction.unwrap_or(config.selection.top_fraction);
    let out = run_selection(config, &problems, &scores, stats.as_deref(), top_fraction)?;

    write_json(&config.out(SELECTION_REPORT), &out)?;
    let mut ids = out.selected.join("\n");
    if !ids.is_empty() {
        ids.push('\n');
    }
    write_atomic(&config.out(SELECTION_IDS), ids.as_bytes())?;

    let quota_sum: u64 = out.quotas.iter().map(|q| q.quota).sum();
    Ok(Outcome {
        summary: vec![
            format!("corpus: {} problems, {} excluded by difficulty", out.corpus, out.excluded.len()),
            format!("selected: {} of {} ranked (top_fraction {})", out.selected.len(), out.reports.len(), top_fraction),
            format!("quotas: {} cells, total {}", out.quotas.len(), quota_sum),
            format!("wrote {}", config.out(SELECTION_REPORT).display()),
        ],
        failures: out.failures,
    })
}
