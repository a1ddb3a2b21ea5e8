//! Domain types shared by every module.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Violations of the value-object invariants below.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("grade {0} outside 7..=12")]
    GradeOutOfRange(u8),
    #[error("step content must be non-empty")]
    EmptyContent,
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("an answer step must be the last step")]
    AnswerNotLast,
    #[error("trajectory has more than one answer step")]
    MultipleAnswers,
    #[error("final answer is set but the last step is not an answer")]
    FinalAnswerWithoutAnswerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Math,
    Biology,
    Physics,
    Geography,
    Chemistry,
}

impl Subject {
    pub const ALL: [Subject; 5] = [
        Subject::Math,
        Subject::Biology,
        Subject::Physics,
        Subject::Geography,
        Subject::Chemistry,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subject::Math => "math",
            Subject::Biology => "biology",
            Subject::Physics => "physics",
            Subject::Geography => "geography",
            Subject::Chemistry => "chemistry",
        }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// School grade, 7 through 12 inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Grade(u8);

impl Grade {
    pub const MIN: u8 = 7;
    pub const MAX: u8 = 12;

    pub fn new(grade: u8) -> Result<Self, CoreError> {
        if (Self::MIN..=Self::MAX).contains(&grade) {
            Ok(Grade(grade))
        } else {
            Err(CoreError::GradeOutOfRange(grade))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Grade> {
        (Self::MIN..=Self::MAX).map(Grade)
    }
}

impl TryFrom<u8> for Grade {
    type Error = CoreError;
    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Grade::new(value)
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g.0
    }
}

/// A multimodal question. Images are opaque asset ids resolved elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    #[serde(default)]
    pub image_refs: Vec<String>,
    pub subject: Subject,
    pub grade: Grade,
    #[serde(default)]
    pub concept_ids: Vec<String>,
    #[serde(default)]
    pub ground_truth: Option<String>,
}

impl Problem {
    /// Text-only problem with no concepts or images; handy for fixtures.
    pub fn new(id: impl Into<String>, statement: impl Into<String>, subject: Subject, grade: Grade) -> Self {
        Problem {
            id: id.into(),
            statement: statement.into(),
            image_refs: Vec::new(),
            subject,
            grade,
            concept_ids: Vec::new(),
            ground_truth: None,
        }
    }

    pub fn with_ground_truth(mut self, answer: impl Into<String>) -> Self {
        self.ground_truth = Some(answer.into());
        self
    }
}

/// The six typed reasoning actions a trajectory is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Caption,
    Summary,
    SubTask,
    Thinking,
    SelfReflection,
    Answer,
}

impl ActionKind {
    /// Canonical order, also the order of the linear schedule.
    pub const ALL: [ActionKind; 6] = [
        ActionKind::Caption,
        ActionKind::Summary,
        ActionKind::SubTask,
        ActionKind::Thinking,
        ActionKind::SelfReflection,
        ActionKind::Answer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Caption => "caption",
            ActionKind::Summary => "summary",
            ActionKind::SubTask => "sub_task",
            ActionKind::Thinking => "thinking",
            ActionKind::SelfReflection => "self_reflection",
            ActionKind::Answer => "answer",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        ActionKind::ALL.into_iter().find(|a| a.as_str() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One typed step emitted by an actor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStep")]
pub struct ReasoningStep {
    pub action: ActionKind,
    pub content: String,
    pub producer_id: String,
}

#[derive(Deserialize)]
struct RawStep {
    action: ActionKind,
    content: String,
    producer_id: String,
}

impl TryFrom<RawStep> for ReasoningStep {
    type Error = CoreError;
    fn try_from(raw: RawStep) -> Result<Self, Self::Error> {
        ReasoningStep::new(raw.action, raw.content, raw.producer_id)
    }
}

impl ReasoningStep {
    pub fn new(
        action: ActionKind,
        content: impl Into<String>,
        producer_id: impl Into<String>,
    ) -> Result<Self, CoreError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(CoreError::EmptyContent);
        }
        Ok(ReasoningStep {
            action,
            content,
            producer_id: producer_id.into(),
        })
    }
}

/// An ordered action sequence for one problem.
///
/// Construction checks the answer invariants (at most one answer step,
/// last if present, and `final_answer` only alongside a trailing answer
/// step). Action-grammar validity is a separate predicate, see
/// [`crate::grammar`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct Trajectory {
    pub problem_id: String,
    pub steps: Vec<ReasoningStep>,
    pub final_answer: Option<String>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    problem_id: String,
    steps: Vec<ReasoningStep>,
    #[serde(default)]
    final_answer: Option<String>,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = CoreError;
    fn try_from(raw: RawTrajectory) -> Result<Self, Self::Error> {
        let t = Trajectory {
            problem_id: raw.problem_id,
            steps: raw.steps,
            final_answer: raw.final_answer,
        };
        t.check()?;
        Ok(t)
    }
}

impl Trajectory {
    /// Builds a trajectory whose final answer is the content of its trailing
    /// answer step, if any.
    pub fn new(problem_id: impl Into<String>, steps: Vec<ReasoningStep>) -> Result<Self, CoreError> {
        let final_answer = match steps.last() {
            Some(s) if s.action == ActionKind::Answer => Some(s.content.trim().into()),
            _ => None,
        };
        let t = Trajectory {
            problem_id: problem_id.into(),
            steps,
            final_answer,
        };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<(), CoreError> {
        let answers = self.steps.iter().filter(|s| s.action == ActionKind::Answer).count();
        if answers > 1 {
            return Err(CoreError::MultipleAnswers);
        }
        let last_is_answer = self.steps.last().map(|s| s.action) == Some(ActionKind::Answer);
        if answers == 1 && !last_is_answer {
            return Err(CoreError::AnswerNotLast);
        }
        if self.final_answer.is_some() && !last_is_answer {
            return Err(CoreError::FinalAnswerWithoutAnswerStep);
        }
        Ok(())
    }

    pub fn actions(&self) -> Vec<ActionKind> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Step-level error taxonomy used by the reward model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepLabel {
    CorrectStep,
    VisualMisunderstanding,
    ProblemMisunderstanding,
    LackOfDomainKnowledge,
    MisapplicationOfKnowledge,
    LogicalReasoningError,
    Hallucination,
    ComputationalError,
    OffTopicOrIncongruent,
}

impl StepLabel {
    pub const ALL: [StepLabel; 9] = [
        StepLabel::CorrectStep,
        StepLabel::VisualMisunderstanding,
        StepLabel::ProblemMisunderstanding,
        StepLabel::LackOfDomainKnowledge,
        StepLabel::MisapplicationOfKnowledge,
        StepLabel::LogicalReasoningError,
        StepLabel::Hallucination,
        StepLabel::ComputationalError,
        StepLabel::OffTopicOrIncongruent,
    ];

    /// The eight error labels, in declaration order.
    pub fn errors() -> impl Iterator<Item = StepLabel> {
        StepLabel::ALL.into_iter().skip(1)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepLabel::CorrectStep => "correct_step",
            StepLabel::VisualMisunderstanding => "visual_misunderstanding",
            StepLabel::ProblemMisunderstanding => "problem_misunderstanding",
            StepLabel::LackOfDomainKnowledge => "lack_of_domain_knowledge",
            StepLabel::MisapplicationOfKnowledge => "misapplication_of_knowledge",
            StepLabel::LogicalReasoningError => "logical_reasoning_error",
            StepLabel::Hallucination => "hallucination",
            StepLabel::ComputationalError => "computational_error",
            StepLabel::OffTopicOrIncongruent => "off_topic_or_incongruent",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let norm: String = name
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        StepLabel::ALL.into_iter().find(|l| l.as_str() == norm)
    }

    /// Short description used when prompting an actor to inject this error.
    pub fn description(self) -> &'static str {
        match self {
            StepLabel::CorrectStep => "no identifiable error",
            StepLabel::VisualMisunderstanding => {
                "misreads the image, diagram, axes or spatial relationships"
            }
            StepLabel::ProblemMisunderstanding => {
                "misinterprets the question's intent, constraints or key information"
            }
            StepLabel::LackOfDomainKnowledge => "fails to recall a relevant fact or concept",
            StepLabel::MisapplicationOfKnowledge => {
                "uses a known concept, formula or procedure incorrectly"
            }
            StepLabel::LogicalReasoningError => {
                "draws an unsupported conclusion or skips a needed inference"
            }
            StepLabel::Hallucination => "states fabricated or unrelated content",
            StepLabel::ComputationalError => "makes an arithmetic or algebraic mistake",
            StepLabel::OffTopicOrIncongruent => "does not match the step's functional intent",
        }
    }
}

impl fmt::Display for StepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reward-model output for one step: the annotation quadruple.
///
/// `score` serializes as a decimal with at most six fractional digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCritique")]
pub struct StepCritique {
    pub content: String,
    pub label: StepLabel,
    pub explanation: String,
    #[serde(serialize_with = "serialize_score")]
    pub score: f64,
}

#[derive(Deserialize)]
struct RawCritique {
    content: String,
    label: StepLabel,
    explanation: String,
    score: f64,
}

impl TryFrom<RawCritique> for StepCritique {
    type Error = CoreError;
    fn try_from(raw: RawCritique) -> Result<Self, Self::Error> {
        StepCritique::new(raw.content, raw.label, raw.explanation, raw.score)
    }
}

impl StepCritique {
    pub fn new(
        content: impl Into<String>,
        label: StepLabel,
        explanation: impl Into<String>,
        score: f64,
    ) -> Result<Self, CoreError> {
        check_score(score)?;
        Ok(StepCritique {
            content: content.into(),
            label,
            explanation: explanation.into(),
            score,
        })
    }

    /// The `{content, label, explanation}` triple view.
    pub fn triple(&self) -> (&str, StepLabel, &str) {
        (&self.content, self.label, &self.explanation)
    }
}

pub(crate) fn check_score(score: f64) -> Result<(), CoreError> {
    if (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(CoreError::ScoreOutOfRange(score))
    }
}

/// Rounds to six fractional digits.
pub fn quantize_score(score: f64) -> f64 {
    libm::round(score * 1e6) / 1e6
}

fn serialize_score<S: Serializer>(score: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(quantize_score(*score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn step(a: ActionKind) -> ReasoningStep {
        ReasoningStep::new(a, "x", "p").unwrap()
    }

    #[test]
    fn six_actions_nine_labels() {
        assert_eq!(ActionKind::ALL.len(), 6);
        assert_eq!(StepLabel::ALL.len(), 9);
        assert_eq!(StepLabel::errors().count(), 8);
    }

    #[test]
    fn action_names_are_snake_case() {
        let names: Vec<String> = ActionKind::ALL
            .iter()
            .map(|a| serde_json::to_string(a).unwrap())
            .collect();
        assert_eq!(
            names,
            [
                "\"caption\"",
                "\"summary\"",
                "\"sub_task\"",
                "\"thinking\"",
                "\"self_reflection\"",
                "\"answer\""
            ]
        );
        for a in ActionKind::ALL {
            assert_eq!(ActionKind::parse(a.as_str()), Some(a));
        }
    }

    #[test]
    fn grade_range() {
        assert!(Grade::new(6).is_err());
        assert!(Grade::new(13).is_err());
        assert_eq!(Grade::all().count(), 6);
        assert!(serde_json::from_str::<Grade>("5").is_err());
    }

    #[test]
    fn empty_step_content_rejected() {
        assert_eq!(
            ReasoningStep::new(ActionKind::Thinking, "  ", "a"),
            Err(CoreError::EmptyContent)
        );
        let json = r#"{"action":"thinking","content":"","producer_id":"a"}"#;
        assert!(serde_json::from_str::<ReasoningStep>(json).is_err());
    }

    #[test]
    fn trajectory_answer_invariants() {
        let ok = Trajectory::new("p", vec![step(ActionKind::Caption), step(ActionKind::Answer)]).unwrap();
        assert_eq!(ok.final_answer.as_deref(), Some("x"));
        assert_eq!(
            Trajectory::new("p", vec![step(ActionKind::Answer), step(ActionKind::Thinking)]),
            Err(CoreError::AnswerNotLast)
        );
        assert_eq!(
            Trajectory::new("p", vec![step(ActionKind::Answer), step(ActionKind::Answer)]),
            Err(CoreError::MultipleAnswers)
        );
        let json = r#"{"problem_id":"p","steps":[{"action":"thinking","content":"t","producer_id":"a"}],"final_answer":"4"}"#;
        assert!(serde_json::from_str::<Trajectory>(json).is_err());
    }

    #[test]
    fn critique_score_bounds_and_encoding() {
        assert!(StepCritique::new("c", StepLabel::CorrectStep, "", 1.5).is_err());
        assert!(StepCritique::new("c", StepLabel::CorrectStep, "", f64::NAN).is_err());
        let c = StepCritique::new("c", StepLabel::Hallucination, "made up", 0.1234567).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(
            json,
            r#"{"content":"c","label":"hallucination","explanation":"made up","score":0.123457}"#
        );
    }

    #[test]
    fn label_parse_accepts_display_names() {
        assert_eq!(StepLabel::parse("Computational Error"), Some(StepLabel::ComputationalError));
        assert_eq!(StepLabel::parse("off-topic-or-incongruent"), Some(StepLabel::OffTopicOrIncongruent));
        assert_eq!(StepLabel::parse("nonsense"), None);
    }
}
