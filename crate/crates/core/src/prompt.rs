//! Prompt templates with `{placeholder}` substitution.
//!
//! `{{` and `}}` produce literal braces. A placeholder the context cannot
//! resolve is an error, never left in the output.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::types::{ActionKind, Problem, ReasoningStep, StepLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown template id `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` has unresolved placeholder `{name}`")]
    Unresolved { template: String, name: String },
    #[error("template `{0}` has an unterminated placeholder")]
    Unterminated(String),
}

/// What the prompt is about, beyond the problem and prefix.
#[derive(Debug, Clone, Copy)]
pub enum Payload<'a> {
    /// Generate the next step of this kind.
    Action(ActionKind),
    /// Critique this step (appended to the prefix when listing steps).
    Step(&'a ReasoningStep),
    /// Rewrite `steps[index]` to exhibit `error`.
    Injection {
        steps: &'a [String],
        index: usize,
        error: StepLabel,
    },
    /// Free text, e.g. an answer to segment.
    Text(&'a str),
    None,
}

#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub problem: &'a Problem,
    pub prefix: &'a [ReasoningStep],
    pub payload: Payload<'a>,
}

impl<'a> PromptContext<'a> {
    pub fn new(problem: &'a Problem, prefix: &'a [ReasoningStep], payload: Payload<'a>) -> Self {
        PromptContext { problem, prefix, payload }
    }

    fn resolve(&self, name: &str) -> Option<String> {
        let p = self.problem;
        let v = match name {
            "statement" => p.statement.clone(),
            "subject" => p.subject.as_str().to_string(),
            "grade" => p.grade.get().to_string(),
            "images" => {
                if p.image_refs.is_empty() {
                    "(none)".to_string()
                } else {
                    p.image_refs.join(", ")
                }
            }
            "labels" => StepLabel::ALL
                .iter()
                .map(|l| l.as_str())
                .collect::<Vec<_>>()
                .join(", "),
            "steps" => self.numbered_steps(),
            "step_count" => self.step_count().to_string(),
            _ => return self.resolve_payload(name),
        };
        Some(v)
    }

    fn resolve_payload(&self, name: &str) -> Option<String> {
        match (self.payload, name) {
            (Payload::Action(a), "action") => Some(a.as_str().to_string()),
            (Payload::Action(a), "action_instruction") => Some(action_instruction(a).to_string()),
            (Payload::Step(s), "step") => Some(s.content.clone()),
            (Payload::Step(s), "step_action") => Some(s.action.as_str().to_string()),
            (Payload::Step(_), "step_number") => Some((self.prefix.len() + 1).to_string()),
            (Payload::Injection { steps, index, .. }, "step") => steps.get(index).cloned(),
            (Payload::Injection { index, .. }, "step_number") => Some((index + 1).to_string()),
            (Payload::Injection { error, .. }, "error_type") => Some(error.as_str().to_string()),
            (Payload::Injection { error, .. }, "error_description") => {
                Some(error.description().to_string())
            }
            (Payload::Text(t), "text") => Some(t.to_string()),
            _ => None,
        }
    }

    fn step_count(&self) -> usize {
        match self.payload {
            Payload::Step(_) => self.prefix.len() + 1,
            Payload::Injection { steps, .. } => steps.len(),
            _ => self.prefix.len(),
        }
    }

    fn numbered_steps(&self) -> String {
        let mut out = String::new();
        let mut n = 0;
        let mut line = |out: &mut String, tag: &str, content: &str| {
            n += 1;
            let _ = writeln!(out, "Step {n} [{tag}]: {content}");
        };
        match self.payload {
            Payload::Injection { steps, .. } => {
                for s in steps {
                    line(&mut out, "step", s);
                }
            }
            _ => {
                for s in self.prefix {
                    line(&mut out, s.action.as_str(), &s.content);
                }
                if let Payload::Step(s) = self.payload {
                    line(&mut out, s.action.as_str(), &s.content);
                }
            }
        }
        if out.is_empty() {
            out.push_str("(no steps yet)\n");
        }
        out.trim_end().to_string()
    }
}

pub fn action_instruction(action: ActionKind) -> &'static str {
    match action {
        ActionKind::Caption => {
            "Describe the visual content relevant to the question: objects, labels, values and spatial relations."
        }
        ActionKind::Summary => "Summarise what the question asks and the information given.",
        ActionKind::SubTask => "Break the problem into the next concrete sub-task to solve.",
        ActionKind::Thinking => "Carry out the next reasoning or calculation step.",
        ActionKind::SelfReflection => {
            "Check the reasoning so far for mistakes and state whether it holds."
        }
        ActionKind::Answer => "State the final answer only.",
    }
}

const STEP_TEMPLATE: &str = "You are solving a grade {grade} {subject} problem step by step.\n\
Question: {statement}\n\
Images: {images}\n\
Steps so far:\n{steps}\n\n\
Next action: {action}. {action_instruction}\n\
Reply with the content of this single step only.";

const CRITIQUE_TEMPLATE: &str = "You are a strict grader reviewing a student's solution to a grade {grade} {subject} problem.\n\
Question: {statement}\n\
Images: {images}\n\
Solution steps:\n{steps}\n\n\
Judge step {step_number} ({step_action}) only, given the steps before it.\n\
Choose one label from: {labels}.\n\
Reply with JSON: {{\"content\": <the step>, \"label\": <label>, \"explanation\": <why>, \"score\": <probability the step is correct, 0 to 1>}}";

const SOLVE_TEMPLATE: &str = "Solve this grade {grade} {subject} problem.\n\
Question: {statement}\n\
Images: {images}\n\
Write each step inside tags named after its action: <caption>, <summary>, <sub_task>, <thinking>, <self_reflection>, and finish with <answer>...</answer>.";

const INJECT_TEMPLATE: &str = "Below is a correct reference solution to a grade {grade} {subject} problem.\n\
Question: {statement}\n\
Reference steps:\n{steps}\n\n\
Rewrite step {step_number} so that it contains a {error_type} error: the step {error_description}.\n\
Keep the style of the original. Reply with the rewritten step only.\n\
Original step {step_number}: {step}";

const SEGMENT_TEMPLATE: &str = "Split the following answer to a grade {grade} {subject} question into its individual reasoning steps.\n\
Question: {statement}\n\
Answer:\n{text}\n\n\
Reply with a JSON array of strings, one per step, preserving the original wording.";

/// Template store keyed by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRegistry {
    templates: BTreeMap<String, String>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        for a in ActionKind::ALL {
            templates.insert(a.as_str().to_string(), STEP_TEMPLATE.to_string());
        }
        templates.insert("critique".into(), CRITIQUE_TEMPLATE.into());
        templates.insert("solve".into(), SOLVE_TEMPLATE.into());
        templates.insert("inject_error".into(), INJECT_TEMPLATE.into());
        templates.insert("segment".into(), SEGMENT_TEMPLATE.into());
        PromptRegistry { templates }
    }
}

impl PromptRegistry {
    pub fn empty() -> Self {
        PromptRegistry { templates: BTreeMap::new() }
    }

    pub fn register(&mut self, id: impl Into<String>, template: impl Into<String>) {
        self.templates.insert(id.into(), template.into());
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn build(&self, template_id: &str, ctx: &PromptContext<'_>) -> Result<String, TemplateError> {
        build_prompt(self, template_id, ctx)
    }
}

pub fn build_prompt(
    registry: &PromptRegistry,
    template_id: &str,
    ctx: &PromptContext<'_>,
) -> Result<String, TemplateError> {
    let template = registry
        .get(template_id)
        .ok_or_else(|| TemplateError::UnknownTemplate(template_id.to_string()))?;
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(pos) = rest.find(['{', '}']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(r) = tail.strip_prefix("{{") {
            out.push('{');
            rest = r;
        } else if let Some(r) = tail.strip_prefix("}}") {
            out.push('}');
            rest = r;
        } else if let Some(r) = tail.strip_prefix('}') {
            out.push('}');
            rest = r;
        } else {
            let end = tail
                .find('}')
                .ok_or_else(|| TemplateError::Unterminated(template_id.to_string()))?;
            let name = &tail[1..end];
            let value = ctx.resolve(name).ok_or_else(|| TemplateError::Unresolved {
                template: template_id.to_string(),
                name: name.to_string(),
            })?;
            out.push_str(&value);
            rest = &tail[end + 1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Template id for generating a step of kind `action`.
pub fn step_template_id(action: ActionKind) -> &'static str {
    action.as_str()
}
