use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::config::{ConfigError, SearchConfig};
use super::ops::{expand, score_and_filter, select};
use super::tree::{NodeId, SearchTree};
use crate::grammar::grammar_valid;
use crate::model::{ActorModel, RewardModel};
use crate::types::{ActionKind, Problem, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    pub trajectory: Trajectory,
    /// Creation reward of each step, root side first.
    pub step_rewards: Vec<f64>,
    /// Reward of the answer step.
    pub terminal_reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub max_depth: usize,
    /// Candidates discarded by the threshold filter.
    pub pruned: usize,
    /// Candidates scored by the reward model.
    pub scored: usize,
    pub rollouts: usize,
    pub completed: usize,
    pub dead_branches: usize,
    pub failed_rollouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub problem_id: String,
    pub seed: u64,
    pub trajectories: Vec<ScoredTrajectory>,
    pub tree_stats: TreeStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RolloutEnd {
    Completed,
    /// Reached an answer whose trajectory breaks the default grammar.
    Invalid,
    DeadBranch,
    Failed,
}

/// Runs `config.rollouts` passes of select → expand → score/filter →
/// backpropagate over one shared tree and returns every grammar-valid
/// complete trajectory found.
pub fn search<A: ActorModel, R: RewardModel + ?Sized>(
    problem: &Problem,
    actors: &[A],
    prm: &R,
    config: &SearchConfig,
) -> Result<SearchResult, ConfigError> {
    search_with_tree(problem, actors, prm, config).map(|(r, _)| r)
}

/// Like [`search`], also returning the final tree.
pub fn search_with_tree<A: ActorModel, R: RewardModel + ?Sized>(
    problem: &Problem,
    actors: &[A],
    prm: &R,
    config: &SearchConfig,
) -> Result<(SearchResult, SearchTree), ConfigError> {
    config.validate()?;
    if actors.is_empty() {
        return Err(ConfigError::NotPositive("actor pool size"));
    }
    let mut run = Run {
        problem,
        actors,
        prm,
        config,
        tree: SearchTree::new(),
        stats: TreeStats::default(),
        found: Vec::new(),
    };
    for _ in 0..config.rollouts {
        if run.tree.node(SearchTree::ROOT).exhausted {
            break;
        }
        run.stats.rollouts += 1;
        match run.rollout() {
            RolloutEnd::Completed => run.stats.completed += 1,
            RolloutEnd::DeadBranch | RolloutEnd::Invalid => run.stats.dead_branches += 1,
            RolloutEnd::Failed => run.stats.failed_rollouts += 1,
        }
    }
    run.stats.node_count = run.tree.len();
    run.stats.max_depth = run.tree.nodes().iter().map(|n| n.depth).max().unwrap_or(0);
    let result = SearchResult {
        problem_id: problem.id.clone(),
        seed: config.seed,
        trajectories: run.found,
        tree_stats: run.stats,
    };
    Ok((result, run.tree))
}

struct Run<'a, A, R: ?Sized> {
    problem: &'a Problem,
    actors: &'a [A],
    prm: &'a R,
    config: &'a SearchConfig,
    tree: SearchTree,
    stats: TreeStats,
    found: Vec<ScoredTrajectory>,
}

impl<A: ActorModel, R: RewardModel + ?Sized> Run<'_, A, R> {
    fn rollout(&mut self) -> RolloutEnd {
        let mut node = SearchTree::ROOT;
        loop {
            if !self.tree.node(node).expanded {
                if let Some(end) = self.expand_node(node) {
                    return end;
                }
            }
            let open = self.tree.open_children(node);
            let Some(next) = select(&self.tree, &open, node, self.config.c_explore) else {
                self.tree.mark_exhausted(node);
                return RolloutEnd::DeadBranch;
            };
            node = next;
            if self.tree.node(node).is_answer() {
                return self.finish(node);
            }
        }
    }

    /// Expands `node` in place. `Some` ends the rollout.
    fn expand_node(&mut self, node: NodeId) -> Option<RolloutEnd> {
        let prefix = self.tree.path(node);
        if prefix.len() >= self.config.max_depth {
            self.tree.mark_exhausted(node);
            return Some(RolloutEnd::DeadBranch);
        }
        let actions: Vec<ActionKind> = prefix.iter().map(|s| s.action).collect();
        let next = self.config.schedule.next_actions(&self.config.grammar, &actions);
        if next.is_empty() {
            self.tree.mark_exhausted(node);
            return Some(RolloutEnd::DeadBranch);
        }

        let mut candidates = Vec::new();
        for action in next {
            match expand(&prefix, self.problem, self.actors, action, self.config) {
                Ok(e) => candidates.extend(e.candidates),
                Err(e) => log::warn!("{}: expansion of {action} at node {node} failed: {e}", self.problem.id),
            }
        }
        if candidates.is_empty() {
            // left unexpanded so a later rollout can retry
            return Some(RolloutEnd::Failed);
        }
        let n = candidates.len();
        let filtered = match score_and_filter(candidates, self.prm, self.problem, &prefix, self.config) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("{}: scoring at node {node} failed: {e}", self.problem.id);
                return Some(RolloutEnd::Failed);
            }
        };
        self.stats.scored += n;
        self.stats.pruned += filtered.pruned.len();
        self.tree.set_expanded(node);
        let chain = self.tree.chain(node);
        let inserted = self.tree.backpropagate(&chain, filtered.survivors);
        if inserted.is_empty() {
            self.tree.mark_exhausted(node);
            return Some(RolloutEnd::DeadBranch);
        }
        None
    }

    fn finish(&mut self, answer: NodeId) -> RolloutEnd {
        self.tree.mark_exhausted(answer);
        let steps = self.tree.path(answer);
        if !grammar_valid(&steps) {
            return RolloutEnd::Invalid;
        }
        let Ok(trajectory) = Trajectory::new(self.problem.id.clone(), steps) else {
            return RolloutEnd::Invalid;
        };
        self.found.push(ScoredTrajectory {
            trajectory,
            step_rewards: self.tree.path_rewards(answer),
            terminal_reward: self.tree.node(answer).reward,
        });
        RolloutEnd::Completed
    }
}
