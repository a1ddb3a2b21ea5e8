//! PRM-guided Monte Carlo tree search over typed reasoning actions.
//!
//! Each rollout walks down the shared tree by UCB, expands the first
//! unexpanded node with every scheduled action from every actor, scores the
//! candidates with the reward model, drops those below `tau`, inserts the
//! survivors and folds their rewards into the ancestor chain. A rollout ends
//! when an answer step is selected, when a branch dies, or at `max_depth`.

mod config;
mod ops;
mod search;
mod trace;
mod tree;

pub use config::{ConfigError, Schedule, SearchConfig};
pub use ops::{
    expand, reflect_verify, reflection_gate, score_and_filter, select, select_index, ucb_score, Expansion,
    ExpansionError, Filtered,
};
pub use search::{search, search_with_tree, ScoredTrajectory, SearchResult, TreeStats};
pub use trace::{trace_records, verify_trace, TraceCheck, TraceRecord};
pub use tree::{NodeId, SearchNode, SearchTree};
