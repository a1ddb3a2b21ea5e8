//! Action grammar for trajectories.
//!
//! Default rules:
//! 1. the first step, if any, is a caption;
//! 2. there is at most one answer and it is the last step;
//! 3. an answer requires a self-reflection somewhere before it.
//!
//! Each rule can be switched off through [`GrammarRules`].

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::types::{ActionKind, ReasoningStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarRules {
    pub caption_first: bool,
    pub single_trailing_answer: bool,
    pub reflection_before_answer: bool,
}

impl Default for GrammarRules {
    fn default() -> Self {
        GrammarRules {
            caption_first: true,
            single_trailing_answer: true,
            reflection_before_answer: true,
        }
    }
}

impl GrammarRules {
    /// Every sequence is valid.
    pub const fn unconstrained() -> Self {
        GrammarRules {
            caption_first: false,
            single_trailing_answer: false,
            reflection_before_answer: false,
        }
    }

    pub fn is_valid(&self, steps: &[ReasoningStep]) -> bool {
        let actions: Vec<ActionKind> = steps.iter().map(|s| s.action).collect();
        self.is_valid_actions(&actions)
    }

    pub fn is_valid_actions(&self, actions: &[ActionKind]) -> bool {
        if self.caption_first {
            if let Some(first) = actions.first() {
                if *first != ActionKind::Caption {
                    return false;
                }
            }
        }
        let mut reflected = false;
        for (i, a) in actions.iter().enumerate() {
            match a {
                ActionKind::SelfReflection => reflected = true,
                ActionKind::Answer => {
                    if self.single_trailing_answer && i + 1 != actions.len() {
                        return false;
                    }
                    if self.reflection_before_answer && !reflected {
                        return false;
                    }
                }
                _ => {}
            }
        }
        true
    }

    /// Actions that keep `prefix ++ [action]` valid, in canonical order.
    ///
    /// A prefix ending in an answer admits nothing when answers must be
    /// trailing.
    pub fn legal_next(&self, prefix: &[ActionKind]) -> Vec<ActionKind> {
        if self.single_trailing_answer && prefix.last() == Some(&ActionKind::Answer) {
            return Vec::new();
        }
        let reflected = prefix.contains(&ActionKind::SelfReflection);
        ActionKind::ALL
            .into_iter()
            .filter(|a| {
                if self.caption_first && prefix.is_empty() && *a != ActionKind::Caption {
                    return false;
                }
                if *a == ActionKind::Answer && self.reflection_before_answer && !reflected {
                    return false;
                }
                true
            })
            .collect()
    }
}

/// Validity under the default rules.
pub fn grammar_valid(steps: &[ReasoningStep]) -> bool {
    GrammarRules::default().is_valid(steps)
}
