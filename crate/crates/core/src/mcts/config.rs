use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::GrammarRules;
use crate::types::ActionKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{0} must be at least 1")]
    NotPositive(&'static str),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

/// Which actions are expanded at a node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Every action the grammar allows after the prefix.
    #[default]
    GrammarLegal,
    /// Only the action following the last one in
    /// caption → summary → sub_task → thinking → self_reflection → answer.
    Linear,
}

impl Schedule {
    pub fn next_actions(self, grammar: &GrammarRules, prefix: &[ActionKind]) -> Vec<ActionKind> {
        let legal = grammar.legal_next(prefix);
        match self {
            Schedule::GrammarLegal => legal,
            Schedule::Linear => {
                let next = match prefix.last() {
                    None => Some(ActionKind::Caption),
                    Some(ActionKind::Answer) => None,
                    Some(a) => ActionKind::ALL.get(a.index() + 1).copied(),
                };
                match next {
                    Some(a) if legal.contains(&a) => vec![a],
                    _ => Vec::new(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Number of actors drawn from the pool per expansion.
    pub k_actors: usize,
    /// PRM samples averaged per candidate.
    pub k_prm: u32,
    /// Pruning threshold; candidates with reward below it are discarded.
    pub tau: f64,
    pub c_explore: f64,
    pub max_depth: usize,
    pub rollouts: usize,
    /// Recorded with results; the search itself draws no randomness.
    pub seed: u64,
    /// Sampling temperature passed to actors during expansion.
    pub temperature: f64,
    pub schedule: Schedule,
    pub grammar: GrammarRules,
    /// Mean-reward floor of the self-reflection gate.
    pub confidence_floor: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            k_actors: 3,
            k_prm: 1,
            tau: 0.5,
            c_explore: core::f64::consts::SQRT_2,
            max_depth: 12,
            rollouts: 4,
            seed: 0,
            temperature: 0.7,
            schedule: Schedule::GrammarLegal,
            grammar: GrammarRules::default(),
            confidence_floor: 0.6,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k_actors == 0 {
            return Err(ConfigError::NotPositive("k_actors"));
        }
        if self.k_prm == 0 {
            return Err(ConfigError::NotPositive("k_prm"));
        }
        if self.max_depth == 0 {
            return Err(ConfigError::NotPositive("max_depth"));
        }
        if self.rollouts == 0 {
            return Err(ConfigError::NotPositive("rollouts"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(ConfigError::OutOfRange { name: "tau", value: self.tau, range: "[0, 1]" });
        }
        if !(self.c_explore > 0.0 && self.c_explore.is_finite()) {
            return Err(ConfigError::OutOfRange {
                name: "c_explore",
                value: self.c_explore,
                range: "(0, inf)",
            });
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(ConfigError::OutOfRange {
                name: "confidence_floor",
                value: self.confidence_floor,
                range: "[0, 1]",
            });
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ConfigError::OutOfRange {
                name: "temperature",
                value: self.temperature,
                range: "[0, inf)",
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ActionKind::*;

    #[test]
    fn defaults_validate() {
        let c = SearchConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!((c.k_actors, c.k_prm, c.tau, c.max_depth, c.rollouts), (3, 1, 0.5, 12, 4));
        assert!((c.c_explore - 1.414).abs() < 1e-3);
    }

    #[test]
    fn invalid_values() {
        let c = SearchConfig { tau: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SearchConfig { rollouts: 0, ..Default::default() };
        assert_eq!(c.validate(), Err(ConfigError::NotPositive("rollouts")));
        let c = SearchConfig { c_explore: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn linear_schedule_steps_through_actions() {
        let g = GrammarRules::default();
        assert_eq!(Schedule::Linear.next_actions(&g, &[]), vec![Caption]);
        assert_eq!(Schedule::Linear.next_actions(&g, &[Caption, Summary]), vec![SubTask]);
        assert_eq!(
            Schedule::Linear.next_actions(&g, &[Caption, Summary, SubTask, Thinking, SelfReflection]),
            vec![Answer]
        );
        assert!(Schedule::Linear.next_actions(&g, &[Caption, Summary, SubTask, Thinking, SelfReflection, Answer]).is_empty());
        assert_eq!(Schedule::Linear.next_actions(&g, &[Caption, Summary, SubTask, Thinking]), vec![SelfReflection]);
        assert_eq!(Schedule::Linear.next_actions(&g, &[Caption, Thinking, Thinking]), vec![SelfReflection]);
    }
}
