//! Flat per-node trace records and an offline checker for them.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tree::SearchTree;
use crate::hash::content_hash;
use crate::types::ActionKind;

/// One line of a search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub problem_id: String,
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub action: Option<ActionKind>,
    pub producer_id: Option<String>,
    pub content_hash: Option<String>,
    pub reward: f64,
    pub value: f64,
    pub visits: u64,
    pub exhausted: bool,
}

pub fn trace_records(problem_id: &str, tree: &SearchTree) -> Vec<TraceRecord> {
    tree.nodes()
        .iter()
        .map(|n| TraceRecord {
            problem_id: problem_id.into(),
            id: n.id,
            parent: n.parent,
            depth: n.depth,
            action: n.action(),
            producer_id: n.step.as_ref().map(|s| s.producer_id.clone()),
            content_hash: n.step.as_ref().map(|s| content_hash(&s.content)),
            reward: n.reward,
            value: n.value,
            visits: n.visits,
            exhausted: n.exhausted,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceCheck {
    pub nodes: usize,
    pub violations: Vec<String>,
}

impl TraceCheck {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-derives visit counts and values from the node list alone.
///
/// Every non-root node contributes its creation reward to itself and to
/// all ancestors, so `N(s)` must equal the number of non-root nodes in the
/// subtree of `s` (including `s`) and `V(s)` their mean reward. With `tau`
/// given, no non-root node may carry a reward below it.
pub fn verify_trace(records: &[TraceRecord], tau: Option<f64>, tolerance: f64) -> TraceCheck {
    let mut check = TraceCheck { nodes: records.len(), violations: Vec::new() };
    let n = records.len();
    for (i, r) in records.iter().enumerate() {
        if r.id != i {
            check.violations.push(format!("record {i} has id {}", r.id));
            return check;
        }
        if let Some(p) = r.parent {
            if p >= i {
                check.violations.push(format!("node {i} has parent {p} created after it"));
                return check;
            }
        } else if i != 0 {
            check.violations.push(format!("node {i} has no parent"));
            return check;
        }
    }
    let mut count = vec![0u64; n];
    let mut sum = vec![0.0f64; n];
    // children have larger ids, so one reverse pass accumulates subtrees
    for i in (0..n).rev() {
        let r = &records[i];
        if r.parent.is_some() {
            count[i] += 1;
            sum[i] += r.reward;
        }
        if let Some(p) = r.parent {
            count[p] += count[i];
            sum[p] += sum[i];
        }
    }
    for (i, r) in records.iter().enumerate() {
        if r.visits != count[i] {
            check
                .violations
                .push(format!("node {i}: visits {} but subtree holds {}", r.visits, count[i]));
        }
        if count[i] > 0 {
            let mean = sum[i] / count[i] as f64;
            if (r.value - mean).abs() > tolerance {
                check
                    .violations
                    .push(format!("node {i}: value {} but routed mean {}", r.value, mean));
            }
            if !(0.0..=1.0).contains(&r.value) {
                check.violations.push(format!("node {i}: value {} outside [0, 1]", r.value));
            }
        }
        if r.parent.is_some() {
            if !(0.0..=1.0).contains(&r.reward) {
                check.violations.push(format!("node {i}: reward {} outside [0, 1]", r.reward));
            }
            if let Some(t) = tau {
                if r.reward < t {
                    check.violations.push(format!("node {i}: reward {} below tau {t}", r.reward));
                }
            }
        }
    }
    check
}
