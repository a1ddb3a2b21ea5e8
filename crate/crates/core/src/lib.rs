//! Core engine for constructing, scoring, filtering and reranking typed
//! multi-step reasoning trajectories.
//!
//! The crate is `no_std` (with `alloc`). Model access goes through the
//! [`ActorModel`] and [`RewardModel`] traits; deterministic scripted
//! implementations live in [`mock`], remote adapters live in the
//! `stepsearch` companion crate.
//!
//! Modules:
//!
//! - [`types`] and [`grammar`]: shared domain types and action-grammar rules.
//! - [`model`], [`prompt`], [`mock`]: model interfaces, prompt templates and scripted mocks.
//! - [`mcts`]: PRM-guided tree search over the six reasoning actions.
//! - [`selection`]: reward-variance prioritisation and stratified quotas.
//! - [`datagen`]: trajectory filtering and PRM training-record construction.
//! - [`inference`]: Best-of-N sampling and reranking.
//! - [`synthetic`]: planted-path problem suites used for offline evaluation.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod datagen;
pub mod grammar;
pub mod hash;
pub mod inference;
pub mod mcts;
pub mod mock;
pub mod model;
pub mod prompt;
pub mod selection;
pub mod synthetic;
pub mod types;

pub use grammar::{grammar_valid, GrammarRules};
pub use model::{prm_step_score, ActorModel, ModelError, RewardModel, ScoringError};
pub use types::{
    ActionKind, CoreError, Grade, Problem, ReasoningStep, StepCritique, StepLabel, Subject,
    Trajectory,
};
