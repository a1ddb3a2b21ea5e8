use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DatagenError, DatasetRecord, Format, Source};
use crate::model::{ensure_in_range, ActorModel, RewardModel};
use crate::types::{ActionKind, Problem, ReasoningStep, StepCritique, StepLabel, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub step_index: usize,
    pub error_type: StepLabel,
    pub generator_id: String,
}

impl InjectionSpec {
    pub fn new(step_index: usize, error_type: StepLabel, generator_id: impl Into<String>) -> Result<Self, DatagenError> {
        if error_type == StepLabel::CorrectStep {
            return Err(DatagenError::CorrectLabel);
        }
        Ok(InjectionSpec { step_index, error_type, generator_id: generator_id.into() })
    }
}

/// A corrupted solution and its gold step annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub spec: InjectionSpec,
    pub steps: Vec<String>,
    pub gold: Vec<StepCritique>,
}

impl Injection {
    pub fn into_record(self, problem_id: impl Into<String>) -> Result<DatasetRecord, DatagenError> {
        DatasetRecord::new(problem_id, Format::Stepwise, Source::ErrorInjection, self.steps, self.gold)
    }
}

/// Has `actor` rewrite `reference_steps[spec.step_index]` to exhibit
/// `spec.error_type`.
///
/// Every other step is copied unchanged. Gold annotations label the
/// rewritten step with the error type and score 0, all others correct with
/// score 1. A rewrite that is empty or equal to the original (ignoring
/// surrounding whitespace) is an [`DatagenError::InjectionFailed`].
pub fn inject_error<A: ActorModel + ?Sized>(
    problem: &Problem,
    reference_steps: &[String],
    spec: &InjectionSpec,
    actor: &A,
) -> Result<Injection, DatagenError> {
    if spec.error_type == StepLabel::CorrectStep {
        return Err(DatagenError::CorrectLabel);
    }
    let index = spec.step_index;
    if index >= reference_steps.len() {
        return Err(DatagenError::IndexOutOfRange { index, len: reference_steps.len() });
    }
    let rewritten = actor.rewrite(problem, reference_steps, index, spec.error_type)?;
    if rewritten.trim().is_empty() || rewritten.trim() == reference_steps[index].trim() {
        return Err(DatagenError::InjectionFailed { index });
    }
    let mut steps = reference_steps.to_vec();
    steps[index] = rewritten;
    let gold = steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if i == index {
                StepCritique::new(s.clone(), spec.error_type, spec.error_type.description(), 0.0)
            } else {
                StepCritique::new(s.clone(), StepLabel::CorrectStep, "", 1.0)
            }
            .expect("fixed scores are in range")
        })
        .collect();
    Ok(Injection { spec: spec.clone(), steps, gold })
}

/// Segments a student answer with `teacher` and critiques every segment.
///
/// The record keeps the teacher's label, explanation and score verbatim;
/// quadruple content is the segment text itself.
pub fn build_dialogue_critique<R: RewardModel + ?Sized>(
    problem: &Problem,
    student_answer: &str,
    teacher: &R,
) -> Result<DatasetRecord, DatagenError> {
    if student_answer.trim().is_empty() {
        return Err(DatagenError::EmptyAnswer);
    }
    let segments: Vec<String> = teacher
        .segment(problem, student_answer)?
        .into_iter()
        .filter(|s| !s.trim().is_empty())
        .collect();
    if segments.is_empty() {
        return Err(DatagenError::Segmentation);
    }
    let mut prefix: Vec<ReasoningStep> = Vec::with_capacity(segments.len());
    let mut critiques = Vec::with_capacity(segments.len());
    for seg in &segments {
        let step = ReasoningStep::new(ActionKind::Thinking, seg.clone(), "student")
            .map_err(|_| DatagenError::Segmentation)?;
        let c = teacher.critique(problem, &prefix, &step)?;
        ensure_in_range(&c)?;
        critiques.push(StepCritique { content: seg.to_string(), ..c });
        prefix.push(step);
    }
    DatasetRecord::new(problem.id.clone(), Format::Critique, Source::Dialogue, segments, critiques)
}

/// Wraps an annotated search path as a training record.
pub fn record_from_trajectory(
    trajectory: &Trajectory,
    critiques: &[StepCritique],
    format: Format,
) -> Result<DatasetRecord, DatagenError> {
    if critiques.len() != trajectory.steps.len() {
        return Err(DatagenError::Alignment {
            index: 0,
            steps: trajectory.steps.len(),
            critiques: critiques.len(),
        });
    }
    let source_steps: Vec<String> = trajectory.steps.iter().map(|s| s.content.clone()).collect();
    let steps = critiques
        .iter()
        .zip(&source_steps)
        .map(|(c, s)| StepCritique { content: s.clone(), ..c.clone() })
        .collect();
    DatasetRecord::new(trajectory.problem_id.clone(), format, Source::MctsPath, source_steps, steps)
}
