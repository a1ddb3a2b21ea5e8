use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use stepsearch_core::datagen::{
    build_dialogue_critique, filter_trajectories, inject_error, qc_filters, record_from_trajectory, rejection_sample,
    DatasetRecord, Format, InjectionSpec, QcReport,
};
use stepsearch_core::hash::StableHasher;
use stepsearch_core::mcts::SearchResult;
use stepsearch_core::{ActorModel, Problem, RewardModel, StepLabel};

use super::{index_problems, load_corpus, CommandError, ItemFailure, Outcome, BUILD_REPORT, DATASET_DIR, SEARCH_RESULTS};
use crate::config::{ConfigError, RunConfig};
use crate::export::{export_dataset, Manifest};
use crate::io::{read_jsonl, write_json};

/// A known-good solution used as the base for error injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub problem_id: String,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateAnnotation {
    pub record_id: String,
    pub labels: Vec<StepLabel>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub seed: u64,
    pub search_trajectories: usize,
    pub mcts_records: usize,
    pub injection_records: usize,
    pub dialogue_records: usize,
    pub qc: QcReport,
    pub manifest: Manifest,
    pub failures: Vec<ItemFailure>,
}

/// Stepwise records from search paths that pass the confidence gate and,
/// when gold is known, rejection sampling. Returns the records and the
/// retained step texts for use as injection references.
fn mcts_records(
    results: &[SearchResult],
    problems: &BTreeMap<&str, &Problem>,
    prm: &dyn RewardModel,
    floor: f64,
    failures: &mut Vec<ItemFailure>,
) -> (Vec<DatasetRecord>, Vec<ReferenceSolution>) {
    let mut records = Vec::new();
    let mut references = Vec::new();
    for result in results {
        let Some(problem) = problems.get(result.problem_id.as_str()) else {
            failures.push(ItemFailure::new(&result.problem_id, "search result for unknown problem"));
            continue;
        };
        for (k, scored) in result.trajectories.iter().enumerate() {
            let t = &scored.trajectory;
            let critiques = match prm.critique_full(problem, t) {
                Ok(c) => c,
                Err(e) => {
                    failures.push(ItemFailure::new(format!("{}#{k}", problem.id), e));
                    continue;
                }
            };
            let pair = [(t.clone(), critiques)];
            let mut kept = match filter_trajectories(&pair, floor) {
                Ok(k) => k,
                Err(e) => {
                    failures.push(ItemFailure::new(format!("{}#{k}", problem.id), e));
                    continue;
                }
            };
            if let Some(gold) = &problem.ground_truth {
                kept = rejection_sample(&kept, gold);
            }
            if kept.is_empty() {
                continue;
            }
            match record_from_trajectory(t, &pair[0].1, Format::Stepwise) {
                Ok(r) => {
                    references.push(ReferenceSolution {
                        problem_id: problem.id.clone(),
                        steps: t.steps.iter().map(|s| s.content.clone()).collect(),
                    });
                    records.push(r);
                }
                Err(e) => failures.push(ItemFailure::new(format!("{}#{k}", problem.id), e)),
            }
        }
    }
    (records, references)
}

/// Seeded choice of step, error type and generating actor for one injection.
pub fn injection_plan(seed: u64, problem_id: &str, k: usize, steps: usize, actors: usize) -> (usize, StepLabel, usize) {
    let h = StableHasher::new().str("inject").u64(seed).str(problem_id).u64(k as u64).finish();
    let errors: Vec<StepLabel> = StepLabel::errors().collect();
    let index = (h % steps as u64) as usize;
    let error = errors[((h >> 20) % errors.len() as u64) as usize];
    let actor = ((h >> 40) % actors as u64) as usize;
    (index, error, actor)
}

fn injection_records(
    references: &[ReferenceSolution],
    problems: &BTreeMap<&str, &Problem>,
    actors: &[Box<dyn ActorModel>],
    per_reference: usize,
    seed: u64,
    failures: &mut Vec<ItemFailure>,
) -> Vec<DatasetRecord> {
    let mut records = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (r, reference) in references.iter().enumerate() {
        let item = format!("{} reference {r}", reference.problem_id);
        let Some(problem) = problems.get(reference.problem_id.as_str()) else {
            failures.push(ItemFailure::new(item, "reference for unknown problem"));
            continue;
        };
        if reference.steps.is_empty() {
            failures.push(ItemFailure::new(item, "reference has no steps"));
            continue;
        }
        for k in 0..per_reference {
            let (index, error, a) = injection_plan(seed, &problem.id, r * per_reference + k, reference.steps.len(), actors.len());
            let actor = actors[a].as_ref();
            let made = InjectionSpec::new(index, error, actor.id())
                .and_then(|spec| inject_error(problem, &reference.steps, &spec, actor))
                .and_then(|inj| inj.into_record(problem.id.clone()));
            match made {
                Ok(rec) => {
                    if seen.insert(rec.record_id.clone()) {
                        records.push(rec);
                    }
                }
                Err(e) => failures.push(ItemFailure::new(format!("{item} injection {k}"), e)),
            }
        }
    }
    records
}

fn dialogue_records(
    ids: &[&str],
    problems: &BTreeMap<&str, &Problem>,
    solver: &dyn ActorModel,
    prm: &dyn RewardModel,
    temperature: f64,
    failures: &mut Vec<ItemFailure>,
) -> Vec<DatasetRecord> {
    let mut records = Vec::new();
    for id in ids {
        let Some(problem) = problems.get(id) else { continue };
        let made = solver
            .solve(problem, temperature, 0)
            .map_err(|e| e.to_string())
            .and_then(|answer| build_dialogue_critique(problem, &answer, prm).map_err(|e| e.to_string()));
        match made {
            Ok(r) => records.push(r),
            Err(e) => failures.push(ItemFailure::new(format!("{id} dialogue"), e)),
        }
    }
    records
}

pub fn cmd_build_data(config: &RunConfig) -> Result<Outcome, CommandError> {
    let seed = config.require_seed()?;
    let corpus = load_corpus(config)?;
    let problems = index_problems(&corpus);
    let results_path = config.out(SEARCH_RESULTS);
    let references_path = config.optional_input("references", &config.paths.references)?;
    if !results_path.exists() && references_path.is_none() {
        return Err(ConfigError::MissingPath { what: "trajectory store or references", path: results_path }.into());
    }
    let results: Vec<SearchResult> = if results_path.exists() { read_jsonl(&results_path)? } else { Vec::new() };
    let prm = config.prm()?;
    let actors = config.actors()?;
    let mut failures = Vec::new();

    let (mcts, mut references) =
        mcts_records(&results, &problems, prm.as_ref(), config.datagen.confidence_floor, &mut failures);
    if let Some(p) = &references_path {
        references = read_jsonl(p)?;
    }
    let injected = injection_records(
        &references,
        &problems,
        &actors,
        config.datagen.injections_per_reference,
        seed,
        &mut failures,
    );

    let mut dialogue = Vec::new();
    if config.datagen.dialogue {
        let mut ids: Vec<&str> = Vec::new();
        let mut seen = BTreeSet::new();
        for id in results.iter().map(|r| r.problem_id.as_str()).chain(references.iter().map(|r| r.problem_id.as_str())) {
            if seen.insert(id) {
                ids.push(id);
            }
        }
        let solver = config.solver()?;
        dialogue = dialogue_records(&ids, &problems, solver.as_ref(), prm.as_ref(), config.search.temperature, &mut failures);
    }

    let duplicates: Option<BTreeMap<String, Vec<StepLabel>>> =
        match config.optional_input("duplicate_annotations", &config.paths.duplicate_annotations)? {
            Some(p) => Some(read_jsonl::<DuplicateAnnotation>(&p)?.into_iter().map(|d| (d.record_id, d.labels)).collect()),
            None => None,
        };

    let mut all = Vec::with_capacity(mcts.len() + injected.len() + dialogue.len());
    all.extend(mcts.iter().cloned());
    all.extend(injected.iter().cloned());
    all.extend(dialogue.iter().cloned());
    let (retained, qc) = qc_filters(&all, duplicates.as_ref(), &config.qc_config());
    let manifest = export_dataset(&retained, &config.out(DATASET_DIR))?;

    let report = BuildReport {
        seed,
        search_trajectories: results.iter().map(|r| r.trajectories.len()).sum(),
        mcts_records: mcts.len(),
        injection_records: injected.len(),
        dialogue_records: dialogue.len(),
        qc,
        manifest,
        failures: failures.clone(),
    };
    write_json(&config.out(BUILD_REPORT), &report)?;

    let mut summary = vec![
        format!(
            "records: {} search paths, {} injected, {} dialogue",
            report.mcts_records, report.injection_records, report.dialogue_records
        ),
        format!("qc: {} in, {} retained, {} rejected", report.qc.input, report.qc.retained, report.qc.rejections.len()),
    ];
    for f in &report.manifest.files {
        summary.push(format!("  {} {} records sha256 {}", f.path, f.records, f.sha256));
    }
    summary.push(format!("manifest: {} records in {} files", report.manifest.total_records(), report.manifest.files.len()));
    Ok(Outcome { summary, failures })
}
