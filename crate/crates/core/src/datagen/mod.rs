//! Trajectory post-filtering and PRM training-record construction.
//!
//! Search output is narrowed by [`filter_trajectories`] (all steps correct
//! and a confident critique) and by answer agreement ([`rejection_sample`],
//! [`self_consistency_vote`]). Training records come from three sources:
//! annotated search paths, error injection into reference solutions and
//! teacher critiques of free-form student answers. [`qc_filters`] gates
//! every batch before export.

mod answer;
mod construct;
mod qc;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::{hex16, StableHasher};
use crate::model::{ModelError, ScoringError};
use crate::types::{StepCritique, StepLabel, Trajectory};

pub use answer::{canonicalize_answer, rejection_sample, self_consistency_vote};
pub use construct::{build_dialogue_critique, inject_error, record_from_trajectory, Injection, InjectionSpec};
pub use qc::{qc_filters, QcConfig, QcReport, QcRule, Rejection};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagenError {
    #[error("candidate {index}: {steps} steps but {critiques} critiques")]
    Alignment { index: usize, steps: usize, critiques: usize },
    #[error("step index {index} out of range for {len} steps")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("error injection needs an error label, got correct_step")]
    CorrectLabel,
    #[error("rewrite of step {index} left it unchanged")]
    InjectionFailed { index: usize },
    #[error("student answer is empty")]
    EmptyAnswer,
    #[error("segmentation produced no steps")]
    Segmentation,
    #[error("a record needs at least one step")]
    EmptyRecord,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Stepwise,
    Critique,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    MctsPath,
    ErrorInjection,
    Dialogue,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::MctsPath => "mcts_path",
            Source::ErrorInjection => "error_injection",
            Source::Dialogue => "dialogue",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumStage {
    Stage1Stepwise,
    Stage2Critique,
}

impl CurriculumStage {
    pub fn for_format(format: Format) -> Self {
        match format {
            Format::Stepwise => CurriculumStage::Stage1Stepwise,
            Format::Critique => CurriculumStage::Stage2Critique,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CurriculumStage::Stage1Stepwise => "stage1_stepwise",
            CurriculumStage::Stage2Critique => "stage2_critique",
        }
    }
}

/// One PRM training example.
///
/// `source_steps` holds the segmented step texts the annotations refer to;
/// a well-formed record has one quadruple per source step with matching
/// content. Fields are public so malformed records can be represented and
/// rejected by [`qc_filters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub record_id: String,
    pub problem_id: String,
    pub format: Format,
    pub source: Source,
    pub curriculum_stage: CurriculumStage,
    pub source_steps: Vec<String>,
    pub steps: Vec<StepCritique>,
}

impl DatasetRecord {
    /// Builds a record with a content-derived id and the stage implied by
    /// `format`.
    pub fn new(
        problem_id: impl Into<String>,
        format: Format,
        source: Source,
        source_steps: Vec<String>,
        steps: Vec<StepCritique>,
    ) -> Result<Self, DatagenError> {
        if steps.is_empty() {
            return Err(DatagenError::EmptyRecord);
        }
        let problem_id = problem_id.into();
        let mut h = StableHasher::new()
            .str(&problem_id)
            .str(source.as_str())
            .u64(format as u64);
        for s in &source_steps {
            h = h.str(s);
        }
        for c in &steps {
            h = h.str(c.label.as_str()).str(&c.content);
        }
        Ok(DatasetRecord {
            record_id: hex16(h.finish()),
            problem_id,
            format,
            source,
            curriculum_stage: CurriculumStage::for_format(format),
            source_steps,
            steps,
        })
    }

    /// First non-correct label, the record's error type for coverage.
    pub fn error_type(&self) -> Option<StepLabel> {
        self.steps.iter().map(|c| c.label).find(|l| *l != StepLabel::CorrectStep)
    }

    pub fn labels(&self) -> Vec<StepLabel> {
        self.steps.iter().map(|c| c.label).collect()
    }

    /// Relative JSONL path for this record's partition.
    pub fn partition(&self) -> String {
        partition_path(self.curriculum_stage, self.source)
    }
}

pub fn partition_path(stage: CurriculumStage, source: Source) -> String {
    alloc::format!("{}/{}.jsonl", stage.as_str(), source.as_str())
}

/// Groups records by partition path, preserving input order within each.
pub fn partition_records(records: &[DatasetRecord]) -> alloc::collections::BTreeMap<String, Vec<&DatasetRecord>> {
    let mut out: alloc::collections::BTreeMap<String, Vec<&DatasetRecord>> = Default::default();
    for r in records {
        out.entry(r.partition()).or_default().push(r);
    }
    out
}

/// Keeps trajectories whose steps are all labelled correct and whose mean
/// critique score reaches `confidence_floor`.
///
/// `critiques[i]` must align one-to-one with the steps of candidate `i`.
pub fn filter_trajectories(
    candidates: &[(Trajectory, Vec<StepCritique>)],
    confidence_floor: f64,
) -> Result<Vec<Trajectory>, DatagenError> {
    let mut kept = Vec::new();
    for (index, (t, critiques)) in candidates.iter().enumerate() {
        if t.steps.len() != critiques.len() {
            return Err(DatagenError::Alignment {
                index,
                steps: t.steps.len(),
                critiques: critiques.len(),
            });
        }
        if critiques.is_empty() {
            continue;
        }
        let all_correct = critiques.iter().all(|c| c.label == StepLabel::CorrectStep);
        let mean = critiques.iter().map(|c| c.score).sum::<f64>() / critiques.len() as f64;
        if all_correct && mean >= confidence_floor {
            kept.push(t.clone());
        }
    }
    Ok(kept)
}
