use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stepsearch_core::inference::{evaluate_problem, AccuracyRow, AuditRecord, BonError, ProblemOutcome};

use super::{load_corpus, read_ids, CommandError, ItemFailure, Outcome, ACCURACY_CSV, ACCURACY_JSON, AUDIT_JSONL};
use crate::config::RunConfig;
use crate::io::{write_atomic, write_json, write_jsonl};

#[derive(Debug, Clone, Default)]
pub struct RerankOptions {
    /// Restrict evaluation to these ids.
    pub ids: Option<std::path::PathBuf>,
    pub ns: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rows: Vec<AccuracyRow>,
    pub failures: Vec<ItemFailure>,
}

pub fn cmd_rerank(config: &RunConfig, options: &RerankOptions) -> Result<Outcome, CommandError> {
    let mut problems = load_corpus(config)?;
    if let Some(path) = &options.ids {
        let ids = read_ids(path)?;
        problems.retain(|p| ids.contains(&p.id));
    }
    if let Some(p) = problems.iter().find(|p| p.ground_truth.is_none()) {
        return Err(BonError::MissingGold(p.id.clone()).into());
    }
    let mut section = config.bon.clone();
    if let Some(ns) = &options.ns {
        section.ns = ns.clone();
    }
    let configs = section.configs(config.seed_or_default());
    for c in &configs {
        c.validate()?;
    }
    let solver = config.solver()?;
    let prm = config.prm()?;
    let pool = config.thread_pool()?;

    let mut rows = Vec::new();
    let mut audit: Vec<AuditRecord> = Vec::new();
    let mut failures = Vec::new();
    for (ci, bon) in configs.iter().enumerate() {
        let outcomes: Vec<Result<ProblemOutcome, (String, BonError)>> = pool.install(|| {
            problems
                .par_iter()
                .map(|p| evaluate_problem(p, solver.as_ref(), prm.as_ref(), bon, ci).map_err(|e| (p.id.clone(), e)))
                .collect()
        });
        let mut done = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            match o {
                Ok(o) => done.push(o),
                Err((id, e)) => {
                    failures.push(ItemFailure::new(format!("{id} (n={}, {})", bon.n, bon.strategy.as_str()), e));
                    // a problem that could not be evaluated counts as wrong
                    done.push(ProblemOutcome { problem_id: id, correct: false, audit: Vec::new() });
                }
            }
        }
        rows.push(AccuracyRow::from_outcomes(bon, &done));
        audit.extend(done.into_iter().flat_map(|o| o.audit));
    }

    let mut csv_out = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        csv_out.serialize(r)?;
    }
    let bytes = csv_out.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    write_atomic(&config.out(ACCURACY_CSV), &bytes)?;
    write_json(&config.out(ACCURACY_JSON), &AccuracyReport { rows: rows.clone(), failures: failures.clone() })?;
    write_jsonl(&config.out(AUDIT_JSONL), &audit)?;

    let mut summary = vec![format!("{} problems, {} configurations", problems.len(), configs.len())];
    summary.push(format!("{:>3}  {:<18} {:>9}", "n", "strategy", "accuracy"));
    for r in &rows {
        summary.push(format!("{:>3}  {:<18} {:>8.2}%", r.n, r.strategy.as_str(), 100.0 * r.accuracy));
    }
    Ok(Outcome { summary, failures })
}
