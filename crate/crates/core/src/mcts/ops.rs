//! The individual search steps: expansion, scoring and filtering, UCB
//! selection, and the self-reflection gate.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use super::config::SearchConfig;
use super::tree::{NodeId, SearchTree};
use crate::model::{ensure_in_range, prm_step_score, ActorModel, ModelError, RewardModel, ScoringError};
use crate::types::{ActionKind, Problem, ReasoningStep, StepCritique, StepLabel, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpansionError {
    #[error("prefix depth {depth} has reached max_depth {max_depth}")]
    DepthExceeded { depth: usize, max_depth: usize },
    #[error("action {0} is not permitted after this prefix")]
    IllegalAction(ActionKind),
    #[error("no actors available")]
    NoActors,
    #[error("all {} actors failed", .0.len())]
    AllActorsFailed(Vec<(String, ModelError)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    /// Deduplicated by content, in actor order.
    pub candidates: Vec<ReasoningStep>,
    pub failures: Vec<(String, ModelError)>,
}

/// Asks the first `k_actors` actors for a step of kind `action`.
///
/// Failing actors are logged and skipped; identical contents collapse to
/// the first producer.
pub fn expand<A: ActorModel>(
    prefix: &[ReasoningStep],
    problem: &Problem,
    actors: &[A],
    action: ActionKind,
    config: &SearchConfig,
) -> Result<Expansion, ExpansionError> {
    if prefix.len() >= config.max_depth {
        return Err(ExpansionError::DepthExceeded {
            depth: prefix.len(),
            max_depth: config.max_depth,
        });
    }
    let actions: Vec<ActionKind> = prefix.iter().map(|s| s.action).collect();
    if !config.grammar.legal_next(&actions).contains(&action) {
        return Err(ExpansionError::IllegalAction(action));
    }
    if actors.is_empty() {
        return Err(ExpansionError::NoActors);
    }
    let mut candidates: Vec<ReasoningStep> = Vec::new();
    let mut failures = Vec::new();
    for actor in actors.iter().take(config.k_actors) {
        match actor.generate(problem, prefix, action, config.temperature) {
            Ok(step) => {
                if !candidates.iter().any(|c| c.content == step.content) {
                    candidates.push(step);
                }
            }
            Err(e) => {
                log::warn!("actor {} failed on {} for {}: {e}", actor.id(), action, problem.id);
                failures.push((String::from(actor.id()), e));
            }
        }
    }
    if candidates.is_empty() {
        return Err(ExpansionError::AllActorsFailed(failures));
    }
    Ok(Expansion { candidates, failures })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Filtered {
    pub survivors: Vec<(ReasoningStep, f64)>,
    pub pruned: Vec<(ReasoningStep, f64)>,
}

/// Scores each candidate with `k_prm` averaged critiques and keeps those
/// with reward `>= tau`. An empty survivor set is a dead branch, not an error.
pub fn score_and_filter<R: RewardModel + ?Sized>(
    candidates: Vec<ReasoningStep>,
    prm: &R,
    problem: &Problem,
    prefix: &[ReasoningStep],
    config: &SearchConfig,
) -> Result<Filtered, ScoringError> {
    let mut out = Filtered::default();
    for step in candidates {
        let r = prm_step_score(prm, problem, prefix, &step, config.k_prm)?;
        if r >= config.tau {
            out.survivors.push((step, r));
        } else {
            out.pruned.push((step, r));
        }
    }
    Ok(out)
}

/// `V + c * sqrt(ln(max(N_parent, 1)) / (1 + N))`.
pub fn ucb_score(value: f64, visits: u64, parent_visits: u64, c_explore: f64) -> f64 {
    let log_n = libm::log(parent_visits.max(1) as f64);
    value + c_explore * libm::sqrt(log_n / (1.0 + visits as f64))
}

/// Index of the best `(value, visits)` pair; the earliest wins ties.
pub fn select_index(children: &[(f64, u64)], parent_visits: u64, c_explore: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (v, n)) in children.iter().enumerate() {
        let score = ucb_score(*v, *n, parent_visits, c_explore);
        match best {
            Some((_, b)) if score <= b => {}
            _ => best = Some((i, score)),
        }
    }
    best.map(|(i, _)| i)
}

/// UCB choice among `children` of `parent`. `None` only for an empty slice.
pub fn select(tree: &SearchTree, children: &[NodeId], parent: NodeId, c_explore: f64) -> Option<NodeId> {
    let stats: Vec<(f64, u64)> = children
        .iter()
        .map(|c| {
            let n = tree.node(*c);
            (n.value, n.visits)
        })
        .collect();
    select_index(&stats, tree.node(parent).visits, c_explore).map(|i| children[i])
}

/// Pure form of the self-reflection gate over existing critiques: mean
/// score at least `floor` and every self-reflection step labelled correct.
/// A trajectory without any self-reflection step fails.
pub fn reflection_gate(trajectory: &Trajectory, critiques: &[StepCritique], floor: f64) -> bool {
    if critiques.len() != trajectory.steps.len() || critiques.is_empty() {
        return false;
    }
    let mut reflected = false;
    for (s, c) in trajectory.steps.iter().zip(critiques) {
        if s.action == ActionKind::SelfReflection {
            reflected = true;
            if c.label != StepLabel::CorrectStep {
                return false;
            }
        }
    }
    let mean = critiques.iter().map(|c| c.score).sum::<f64>() / critiques.len() as f64;
    reflected && mean >= floor
}

/// Critiques every step of `trajectory` and applies [`reflection_gate`].
pub fn reflect_verify<R: RewardModel + ?Sized>(
    trajectory: &Trajectory,
    prm: &R,
    problem: &Problem,
    floor: f64,
) -> Result<bool, ScoringError> {
    let steps = &trajectory.steps;
    let mut critiques: Vec<StepCritique> = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let c = prm
            .critique(problem, &steps[..i], step)
            .and_then(|c| ensure_in_range(&c).map(|_| c))
            .map_err(|source| ScoringError::Critique {
                index: i as u32,
                partial: critiques.iter().map(|c| c.score).collect(),
                source,
            })?;
        critiques.push(c);
    }
    Ok(reflection_gate(trajectory, &critiques, floor))
}
