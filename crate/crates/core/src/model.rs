//! Actor and reward-model interfaces.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::types::{check_score, ActionKind, Problem, ReasoningStep, StepCritique, StepLabel, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// Transport failure, after retries where applicable.
    #[error("remote model unavailable: {0}")]
    RemoteUnavailable(String),
    /// The model answered, but not in the expected shape.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("prompt template error: {0}")]
    Template(String),
    /// A scripted or otherwise deliberate failure.
    #[error("model failed: {0}")]
    Failed(String),
}

/// A step generator.
///
/// Implementations must be shareable across threads. Scripted actors are
/// deterministic in their inputs; remote actors are not.
pub trait ActorModel: Send + Sync {
    fn id(&self) -> &str;

    /// Proposes the next step of kind `action` after `prefix`.
    fn generate(
        &self,
        problem: &Problem,
        prefix: &[ReasoningStep],
        action: ActionKind,
        temperature: f64,
    ) -> Result<ReasoningStep, ModelError>;

    /// Writes a complete free-form solution. `sample` is the candidate slot.
    fn solve(&self, problem: &Problem, temperature: f64, sample: u32) -> Result<String, ModelError>;

    /// Rewrites `steps[index]` so that it exhibits `error`.
    fn rewrite(
        &self,
        problem: &Problem,
        steps: &[String],
        index: usize,
        error: StepLabel,
    ) -> Result<String, ModelError>;
}

/// A process reward model (step critic).
pub trait RewardModel: Send + Sync {
    fn id(&self) -> &str;

    /// Critiques `step` given the steps before it. `sample` distinguishes
    /// repeated calls for averaging; stateless models may ignore it.
    fn critique_sample(
        &self,
        problem: &Problem,
        prefix: &[ReasoningStep],
        step: &ReasoningStep,
        sample: u32,
    ) -> Result<StepCritique, ModelError>;

    fn critique(
        &self,
        problem: &Problem,
        prefix: &[ReasoningStep],
        step: &ReasoningStep,
    ) -> Result<StepCritique, ModelError> {
        self.critique_sample(problem, prefix, step, 0)
    }

    /// One critique per step, each given its own prefix.
    fn critique_full(&self, problem: &Problem, trajectory: &Trajectory) -> Result<Vec<StepCritique>, ModelError> {
        let steps = &trajectory.steps;
        let mut out = Vec::with_capacity(steps.len());
        for (i, step) in steps.iter().enumerate() {
            let c = self.critique(problem, &steps[..i], step)?;
            ensure_in_range(&c)?;
            out.push(c);
        }
        Ok(out)
    }

    /// Splits a free-form answer into steps. The default splits on line
    /// breaks and sentence-final punctuation.
    fn segment(&self, _problem: &Problem, text: &str) -> Result<Vec<String>, ModelError> {
        Ok(split_sentences(text))
    }
}

impl<T: ActorModel + ?Sized> ActorModel for &T {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, p: &Problem, prefix: &[ReasoningStep], a: ActionKind, t: f64) -> Result<ReasoningStep, ModelError> {
        (**self).generate(p, prefix, a, t)
    }
    fn solve(&self, p: &Problem, t: f64, sample: u32) -> Result<String, ModelError> {
        (**self).solve(p, t, sample)
    }
    fn rewrite(&self, p: &Problem, steps: &[String], index: usize, error: StepLabel) -> Result<String, ModelError> {
        (**self).rewrite(p, steps, index, error)
    }
}

impl<T: RewardModel + ?Sized> RewardModel for &T {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn critique_sample(&self, p: &Problem, prefix: &[ReasoningStep], s: &ReasoningStep, n: u32) -> Result<StepCritique, ModelError> {
        (**self).critique_sample(p, prefix, s, n)
    }
    fn critique_full(&self, p: &Problem, t: &Trajectory) -> Result<Vec<StepCritique>, ModelError> {
        (**self).critique_full(p, t)
    }
    fn segment(&self, p: &Problem, text: &str) -> Result<Vec<String>, ModelError> {
        (**self).segment(p, text)
    }
}

impl<T: ActorModel + ?Sized> ActorModel for alloc::boxed::Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, p: &Problem, prefix: &[ReasoningStep], a: ActionKind, t: f64) -> Result<ReasoningStep, ModelError> {
        (**self).generate(p, prefix, a, t)
    }
    fn solve(&self, p: &Problem, t: f64, sample: u32) -> Result<String, ModelError> {
        (**self).solve(p, t, sample)
    }
    fn rewrite(&self, p: &Problem, steps: &[String], index: usize, error: StepLabel) -> Result<String, ModelError> {
        (**self).rewrite(p, steps, index, error)
    }
}

impl<T: RewardModel + ?Sized> RewardModel for alloc::boxed::Box<T> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn critique_sample(&self, p: &Problem, prefix: &[ReasoningStep], s: &ReasoningStep, n: u32) -> Result<StepCritique, ModelError> {
        (**self).critique_sample(p, prefix, s, n)
    }
    fn critique_full(&self, p: &Problem, t: &Trajectory) -> Result<Vec<StepCritique>, ModelError> {
        (**self).critique_full(p, t)
    }
    fn segment(&self, p: &Problem, text: &str) -> Result<Vec<String>, ModelError> {
        (**self).segment(p, text)
    }
}

/// Out-of-range scores are a protocol violation, never clamped.
pub fn ensure_in_range(c: &StepCritique) -> Result<(), ModelError> {
    check_score(c.score).map_err(|e| ModelError::Protocol(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("k_prm must be at least 1")]
    ZeroSamples,
    #[error("critique {index} failed after {} successful samples: {source}", partial.len())]
    Critique {
        index: u32,
        partial: Vec<f64>,
        #[source]
        source: ModelError,
    },
}

/// Averaged step reward: the mean score of `k_prm` critiques of `step`.
pub fn prm_step_score<R: RewardModel + ?Sized>(
    prm: &R,
    problem: &Problem,
    prefix: &[ReasoningStep],
    step: &ReasoningStep,
    k_prm: u32,
) -> Result<f64, ScoringError> {
    if k_prm == 0 {
        return Err(ScoringError::ZeroSamples);
    }
    let mut scores = Vec::with_capacity(k_prm as usize);
    for i in 0..k_prm {
        let c = prm
            .critique_sample(problem, prefix, step, i)
            .and_then(|c| ensure_in_range(&c).map(|_| c))
            .map_err(|source| ScoringError::Critique {
                index: i,
                partial: scores.clone(),
                source,
            })?;
        scores.push(c.score);
    }
    Ok(scores.iter().sum::<f64>() / f64::from(k_prm))
}

/// Splits on newlines and on `.`, `!`, `?` followed by whitespace.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        for (k, (i, c)) in chars.iter().enumerate() {
            let boundary = matches!(c, '.' | '!' | '?')
                && chars.get(k + 1).map(|(_, n)| n.is_whitespace()).unwrap_or(true);
            if boundary {
                let end = i + c.len_utf8();
                push_trimmed(&mut out, &line[start..end]);
                start = end;
            }
        }
        push_trimmed(&mut out, &line[start..]);
    }
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Wraps a reward model and reports `1 - score` with the label flipped
/// between correct and a generic reasoning error.
#[derive(Debug, Clone)]
pub struct InvertedReward<R> {
    inner: R,
    id: String,
}

impl<R: RewardModel> InvertedReward<R> {
    pub fn new(inner: R) -> Self {
        let id = alloc::format!("inverted:{}", inner.id());
        InvertedReward { inner, id }
    }
}

impl<R: RewardModel> RewardModel for InvertedReward<R> {
    fn id(&self) -> &str {
        &self.id
    }

    fn critique_sample(
        &self,
        problem: &Problem,
        prefix: &[ReasoningStep],
        step: &ReasoningStep,
        sample: u32,
    ) -> Result<StepCritique, ModelError> {
        let c = self.inner.critique_sample(problem, prefix, step, sample)?;
        ensure_in_range(&c)?;
        let label = if c.label == StepLabel::CorrectStep {
            StepLabel::LogicalReasoningError
        } else {
            StepLabel::CorrectStep
        };
        Ok(StepCritique {
            content: c.content,
            label,
            explanation: c.explanation,
            score: 1.0 - c.score,
        })
    }
}
