use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CurriculumStage, DatasetRecord};
use crate::hash::StableHasher;
use crate::types::StepLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    /// Largest share of a batch any single error type may hold.
    pub max_error_share: f64,
    /// Records per error type always allowed regardless of batch size.
    pub min_per_type: usize,
    pub seed: u64,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig { max_error_share: 0.4, min_per_type: 4, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcRule {
    Format,
    AnnotationConsistency,
    ErrorCoverage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub record_id: String,
    pub problem_id: String,
    pub rule: QcRule,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcReport {
    pub input: usize,
    pub retained: usize,
    pub rejections: Vec<Rejection>,
}

impl QcReport {
    pub fn count(&self, rule: QcRule) -> usize {
        self.rejections.iter().filter(|r| r.rule == rule).count()
    }
}

fn format_problem(r: &DatasetRecord) -> Option<String> {
    if r.steps.is_empty() {
        return Some("no steps".into());
    }
    if r.steps.len() != r.source_steps.len() {
        return Some(format!("{} steps but {} quadruples", r.source_steps.len(), r.steps.len()));
    }
    if r.curriculum_stage != CurriculumStage::for_format(r.format) {
        return Some(format!("stage {:?} does not match format {:?}", r.curriculum_stage, r.format));
    }
    for (i, (c, s)) in r.steps.iter().zip(&r.source_steps).enumerate() {
        if c.content.trim().is_empty() || c.content.trim() != s.trim() {
            return Some(format!("quadruple {i} does not match its step text"));
        }
        if !(0.0..=1.0).contains(&c.score) {
            return Some(format!("quadruple {i} score {} outside [0, 1]", c.score));
        }
    }
    None
}

fn annotation_problem(r: &DatasetRecord, second: &[StepLabel]) -> Option<String> {
    if second.len() != r.steps.len() {
        return Some(format!("second pass has {} labels for {} steps", second.len(), r.steps.len()));
    }
    r.steps
        .iter()
        .zip(second)
        .position(|(c, l)| c.label != *l)
        .map(|i| format!("step {i}: {} vs {}", r.steps[i].label, second[i]))
}

/// Per-type caps: the greatest fixed point of
/// `k_e = min(c_e, max(floor(share * K), min_per_type))` where `K` is the
/// retained batch size, so that re-running on the output keeps everything.
fn coverage_caps(counts: &BTreeMap<StepLabel, usize>, clean: usize, config: &QcConfig) -> BTreeMap<StepLabel, usize> {
    let mut kept = counts.clone();
    loop {
        let total = clean + kept.values().sum::<usize>();
        let cap = (libm::floor(config.max_error_share * total as f64 + 1e-9) as usize).max(config.min_per_type);
        let next: BTreeMap<StepLabel, usize> = counts.iter().map(|(l, c)| (*l, (*c).min(cap))).collect();
        if next == kept {
            return kept;
        }
        kept = next;
    }
}

/// Format, annotation-consistency and error-coverage gates.
///
/// Rules apply in that order; coverage only sees records that passed the
/// first two. A record's error type is its first non-correct label;
/// records without one are never down-sampled. Over-represented types are
/// down-sampled with a seeded shuffle and survivors keep input order.
/// Applying the filter to its own output retains everything.
pub fn qc_filters(
    records: &[DatasetRecord],
    duplicate_annotations: Option<&BTreeMap<String, Vec<StepLabel>>>,
    config: &QcConfig,
) -> (Vec<DatasetRecord>, QcReport) {
    let mut report = QcReport { input: records.len(), ..QcReport::default() };
    let mut reject = |r: &DatasetRecord, rule: QcRule, detail: String| {
        report.rejections.push(Rejection {
            record_id: r.record_id.clone(),
            problem_id: r.problem_id.clone(),
            rule,
            detail,
        });
    };

    let mut passing: Vec<&DatasetRecord> = Vec::new();
    for r in records {
        if let Some(detail) = format_problem(r) {
            reject(r, QcRule::Format, detail);
            continue;
        }
        if let Some(second) = duplicate_annotations.and_then(|d| d.get(&r.record_id)) {
            if let Some(detail) = annotation_problem(r, second) {
                reject(r, QcRule::AnnotationConsistency, detail);
                continue;
            }
        }
        passing.push(r);
    }

    let mut by_type: BTreeMap<StepLabel, Vec<usize>> = BTreeMap::new();
    let mut clean = 0;
    for (i, r) in passing.iter().enumerate() {
        match r.error_type() {
            Some(l) => by_type.entry(l).or_default().push(i),
            None => clean += 1,
        }
    }
    let counts: BTreeMap<StepLabel, usize> = by_type.iter().map(|(l, v)| (*l, v.len())).collect();
    let caps = coverage_caps(&counts, clean, config);
    let mut dropped = alloc::vec![false; passing.len()];
    for (label, mut idx) in by_type {
        let cap = caps[&label];
        if idx.len() <= cap {
            continue;
        }
        let stream = StableHasher::new().u64(config.seed).str(label.as_str()).finish();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(stream));
        for &i in &idx[cap..] {
            dropped[i] = true;
        }
    }

    let mut retained = Vec::new();
    for (i, r) in passing.into_iter().enumerate() {
        if dropped[i] {
            let label = r.error_type().map(|l| l.as_str()).unwrap_or("");
            reject(r, QcRule::ErrorCoverage, format!("{label} over {} share cap", config.max_error_share));
        } else {
            retained.push(r.clone());
        }
    }
    report.retained = retained.len();
    (retained, report)
}
