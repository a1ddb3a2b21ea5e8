use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::types::{ActionKind, ReasoningStep};

pub type NodeId = usize;

/// One node of the search tree. Ids are creation order, root is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: NodeId,
    pub step: Option<ReasoningStep>,
    /// Mean of every reward routed through this node.
    pub value: f64,
    pub visits: u64,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Averaged PRM reward at creation; 0 for the root.
    pub reward: f64,
    pub depth: usize,
    pub expanded: bool,
    /// Never selected again: dead branch, finished answer, or all children exhausted.
    pub exhausted: bool,
}

impl SearchNode {
    pub fn action(&self) -> Option<ActionKind> {
        self.step.as_ref().map(|s| s.action)
    }

    pub fn is_answer(&self) -> bool {
        self.action() == Some(ActionKind::Answer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl Default for SearchTree {
    fn default() -> Self {
        Self::new()
    }
}

impl SearchTree {
    pub const ROOT: NodeId = 0;

    pub fn new() -> Self {
        SearchTree {
            nodes: alloc::vec![SearchNode {
                id: 0,
                step: None,
                value: 0.0,
                visits: 0,
                parent: None,
                children: Vec::new(),
                reward: 0.0,
                depth: 0,
                expanded: false,
                exhausted: false,
            }],
        }
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `id`, its parent, ..., root.
    pub fn chain(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = alloc::vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Steps from the root down to `id`.
    pub fn path(&self, id: NodeId) -> Vec<ReasoningStep> {
        let mut steps: Vec<ReasoningStep> = self
            .chain(id)
            .into_iter()
            .filter_map(|n| self.nodes[n].step.clone())
            .collect();
        steps.reverse();
        steps
    }

    pub fn path_rewards(&self, id: NodeId) -> Vec<f64> {
        let mut r: Vec<f64> = self
            .chain(id)
            .into_iter()
            .filter(|n| *n != Self::ROOT)
            .map(|n| self.nodes[n].reward)
            .collect();
        r.reverse();
        r
    }

    pub fn open_children(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id]
            .children
            .iter()
            .copied()
            .filter(|c| !self.nodes[*c].exhausted)
            .collect()
    }

    pub(crate) fn set_expanded(&mut self, id: NodeId) {
        self.nodes[id].expanded = true;
    }

    /// Marks `id` exhausted, then every expanded ancestor whose children
    /// are all exhausted.
    pub fn mark_exhausted(&mut self, id: NodeId) {
        self.nodes[id].exhausted = true;
        let mut cur = self.nodes[id].parent;
        while let Some(p) = cur {
            let node = &self.nodes[p];
            if node.exhausted || !node.expanded {
                break;
            }
            if node.children.iter().all(|c| self.nodes[*c].exhausted) {
                self.nodes[p].exhausted = true;
                cur = self.nodes[p].parent;
            } else {
                break;
            }
        }
    }

    /// Inserts the surviving candidates under `parent_chain[0]` with
    /// `V = r̂`, `N = 1`, then folds them into every node of the chain:
    /// `V ← (N·V + Σr̂) / (N + k)`, `N ← N + k`, leaf side first.
    ///
    /// `parent_chain` runs from the expanded node up to the root. An empty
    /// survivor set changes nothing. Returns the new node ids.
    pub fn backpropagate(&mut self, parent_chain: &[NodeId], surviving: Vec<(ReasoningStep, f64)>) -> Vec<NodeId> {
        let Some(&parent) = parent_chain.first() else {
            return Vec::new();
        };
        debug_assert!(parent_chain.windows(2).all(|w| self.nodes[w[0]].parent == Some(w[1])));
        debug_assert_eq!(parent_chain.last(), Some(&Self::ROOT));

        let k = surviving.len() as u64;
        if k == 0 {
            return Vec::new();
        }
        let total: f64 = surviving.iter().map(|(_, r)| *r).sum();
        let depth = self.nodes[parent].depth + 1;
        let mut ids = Vec::with_capacity(surviving.len());
        for (step, reward) in surviving {
            let id = self.nodes.len();
            self.nodes.push(SearchNode {
                id,
                step: Some(step),
                value: reward,
                visits: 1,
                parent: Some(parent),
                children: Vec::new(),
                reward,
                depth,
                expanded: false,
                exhausted: false,
            });
            self.nodes[parent].children.push(id);
            ids.push(id);
        }
        for &a in parent_chain {
            let node = &mut self.nodes[a];
            let n = node.visits as f64;
            node.value = (n * node.value + total) / (n + k as f64);
            node.visits += k;
        }
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(text: &str) -> ReasoningStep {
        ReasoningStep::new(ActionKind::Thinking, text, "a").unwrap()
    }

    #[test]
    fn first_visit() {
        let mut t = SearchTree::new();
        let ids = t.backpropagate(&[0], vec![(s("x"), 0.8)]);
        assert_eq!(ids, vec![1]);
        assert_eq!(t.node(0).visits, 1);
        assert!((t.node(0).value - 0.8).abs() < 1e-12);
        assert_eq!(t.node(1).visits, 1);
        assert_eq!(t.node(1).value, 0.8);
    }

    #[test]
    fn running_mean_update() {
        let mut t = SearchTree::new();
        // bring root to N=2, V=0.5
        t.backpropagate(&[0], vec![(s("a"), 0.4), (s("b"), 0.6)]);
        assert_eq!(t.node(0).visits, 2);
        assert!((t.node(0).value - 0.5).abs() < 1e-12);
        t.backpropagate(&[0], vec![(s("c"), 0.7), (s("d"), 0.9)]);
        assert_eq!(t.node(0).visits, 4);
        assert!((t.node(0).value - 0.65).abs() < 1e-12);
        // brute force: mean of every routed reward
        let mean = (0.4 + 0.6 + 0.7 + 0.9) / 4.0;
        assert!((t.node(0).value - mean).abs() < 1e-12);
    }

    #[test]
    fn empty_survivors_leave_stats_unchanged() {
        let mut t = SearchTree::new();
        t.backpropagate(&[0], vec![(s("a"), 0.3)]);
        let before = t.clone();
        assert!(t.backpropagate(&[1, 0], vec![]).is_empty());
        assert_eq!(t, before);
    }

    #[test]
    fn deep_chain_updates_every_ancestor() {
        let mut t = SearchTree::new();
        t.backpropagate(&[0], vec![(s("a"), 0.5)]);
        t.backpropagate(&[1, 0], vec![(s("b"), 1.0), (s("c"), 0.0)]);
        assert_eq!(t.node(1).visits, 3);
        assert!((t.node(1).value - 0.5).abs() < 1e-12);
        assert_eq!(t.node(0).visits, 3);
        assert_eq!(t.path(2).len(), 2);
        assert_eq!(t.path_rewards(2), vec![0.5, 1.0]);
        assert_eq!(t.chain(3), vec![3, 1, 0]);
    }

    #[test]
    fn exhaustion_propagates_when_all_children_done() {
        let mut t = SearchTree::new();
        t.set_expanded(0);
        t.backpropagate(&[0], vec![(s("a"), 0.5), (s("b"), 0.5)]);
        t.mark_exhausted(1);
        assert!(!t.node(0).exhausted);
        t.mark_exhausted(2);
        assert!(t.node(0).exhausted);
    }
}
