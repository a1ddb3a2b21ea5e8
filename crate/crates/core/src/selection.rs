//! Sample selection: reward-variance prioritisation, difficulty filtering
//! and stratified quotas over (subject, grade) cells.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Grade, Subject};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("need at least 2 solutions, got {0}")]
    InsufficientSamples(usize),
    #[error("solution {0} has no step scores")]
    EmptySolution(usize),
    #[error("empty corpus: no problems or every cell count is zero")]
    EmptyCorpus,
    #[error("top_fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("accuracy {accuracy} for {problem_id} outside [0, 1]")]
    InvalidAccuracy { problem_id: String, accuracy: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub subject: Subject,
    pub grade: Grade,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub problem_id: String,
    pub variance: f64,
    pub mean_reward: f64,
    pub prioritized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardStats {
    pub mean: f64,
    pub variance: f64,
}

/// Population mean and variance of per-solution mean step scores.
pub fn reward_variance(step_scores_per_solution: &[Vec<f64>]) -> Result<RewardStats, SelectionError> {
    let n = step_scores_per_solution.len();
    if n < 2 {
        return Err(SelectionError::InsufficientSamples(n));
    }
    let mut aggregates = Vec::with_capacity(n);
    for (i, scores) in step_scores_per_solution.iter().enumerate() {
        if scores.is_empty() {
            return Err(SelectionError::EmptySolution(i));
        }
        aggregates.push(scores.iter().sum::<f64>() / scores.len() as f64);
    }
    let mean = aggregates.iter().sum::<f64>() / n as f64;
    let variance = aggregates.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    Ok(RewardStats { mean, variance })
}

pub fn report_for(problem_id: impl Into<String>, step_scores_per_solution: &[Vec<f64>]) -> Result<SelectionReport, SelectionError> {
    let stats = reward_variance(step_scores_per_solution)?;
    Ok(SelectionReport {
        problem_id: problem_id.into(),
        variance: stats.variance,
        mean_reward: stats.mean,
        prioritized: false,
    })
}

/// Ids of the top `ceil(top_fraction * n)` reports by variance, highest
/// first; equal variances are ordered by id.
pub fn select_samples(reports: &[SelectionReport], top_fraction: f64) -> Result<Vec<String>, SelectionError> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(SelectionError::InvalidFraction(top_fraction));
    }
    let take = libm::ceil(top_fraction * reports.len() as f64 - 1e-9) as usize;
    let mut order: Vec<&SelectionReport> = reports.iter().collect();
    order.sort_by(|a, b| {
        b.variance
            .total_cmp(&a.variance)
            .then_with(|| a.problem_id.cmp(&b.problem_id))
    });
    Ok(order.into_iter().take(take).map(|r| r.problem_id.clone()).collect())
}

/// Marks the reports whose ids were selected.
pub fn mark_prioritized(reports: &mut [SelectionReport], selected: &[String]) {
    for r in reports.iter_mut() {
        r.prioritized = selected.contains(&r.problem_id);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemStat {
    pub problem_id: String,
    pub model_accuracy: f64,
    pub text_only_solvable: bool,
}

/// Accuracy above which a problem is considered too easy.
pub const MAX_MODEL_ACCURACY: f64 = 0.70;

/// Keeps problems models solve at most 70% of the time and that need the image.
pub fn difficulty_filter(stats: &[ProblemStat]) -> Result<Vec<String>, SelectionError> {
    let mut kept = Vec::new();
    for s in stats {
        if !(0.0..=1.0).contains(&s.model_accuracy) {
            return Err(SelectionError::InvalidAccuracy {
                problem_id: s.problem_id.clone(),
                accuracy: s.model_accuracy,
            });
        }
        if s.model_accuracy <= MAX_MODEL_ACCURACY && !s.text_only_solvable {
            kept.push(s.problem_id.clone());
        }
    }
    Ok(kept)
}

pub type Quotas = BTreeMap<(Subject, Grade), u64>;

/// Allocates `total` samples across cells in proportion to their counts.
///
/// Each unrounded share `N_cell / ΣN × total` is rounded half-to-even; the
/// rounding residual is then settled one unit at a time on the cells with
/// the largest (or, when over-allocated, smallest) remainders, ties going
/// to the earlier cell in (subject, grade) order. Quotas sum to `total`
/// exactly and each lies within 1 of its unrounded share. Repeated cells
/// are merged.
pub fn stratified_quotas(counts: &[CellCount], total: u64) -> Result<Quotas, SelectionError> {
    let mut merged: BTreeMap<(Subject, Grade), u128> = BTreeMap::new();
    for c in counts {
        *merged.entry((c.subject, c.grade)).or_default() += u128::from(c.count);
    }
    let sum: u128 = merged.values().sum();
    if sum == 0 {
        return Err(SelectionError::EmptyCorpus);
    }
    let t = u128::from(total);
    // (cell, quota, numerator - quota * sum), remainders in units of 1/sum
    let mut cells: Vec<((Subject, Grade), u128, i128)> = merged
        .into_iter()
        .map(|(cell, n)| {
            let num = n * t;
            let floor = num / sum;
            let rem = num % sum;
            let q = match (2 * rem).cmp(&sum) {
                core::cmp::Ordering::Greater => floor + 1,
                core::cmp::Ordering::Equal => floor + (floor & 1),
                core::cmp::Ordering::Less => floor,
            };
            (cell, q, num as i128 - (q * sum) as i128)
        })
        .collect();

    let allocated: u128 = cells.iter().map(|c| c.1).sum();
    let mut residual = t as i128 - allocated as i128;
    if residual != 0 {
        let mut order: Vec<usize> = (0..cells.len()).collect();
        if residual > 0 {
            order.sort_by(|&a, &b| cells[b].2.cmp(&cells[a].2).then(a.cmp(&b)));
        } else {
            order.sort_by(|&a, &b| cells[a].2.cmp(&cells[b].2).then(a.cmp(&b)));
        }
        let mut k = 0;
        while residual != 0 {
            let i = order[k % order.len()];
            if residual > 0 {
                cells[i].1 += 1;
                cells[i].2 -= sum as i128;
                residual -= 1;
            } else if cells[i].1 > 0 {
                cells[i].1 -= 1;
                cells[i].2 += sum as i128;
                residual += 1;
            }
            k += 1;
        }
    }
    Ok(cells.into_iter().map(|(cell, q, _)| (cell, q as u64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn report(id: &str, variance: f64) -> SelectionReport {
        SelectionReport { problem_id: id.into(), variance, mean_reward: 0.5, prioritized: false }
    }

    #[test]
    fn variance_examples() {
        let s = reward_variance(&[vec![0.5], vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap();
        assert_eq!((s.mean, s.variance), (0.5, 0.0));
        let s = reward_variance(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!((s.mean, s.variance), (0.5, 0.25));
        assert_eq!(reward_variance(&[vec![1.0]]), Err(SelectionError::InsufficientSamples(1)));
        assert_eq!(reward_variance(&[vec![1.0], vec![]]), Err(SelectionError::EmptySolution(1)));
    }

    #[test]
    fn variance_matches_textbook_formula() {
        let solutions = vec![
            vec![0.9, 0.8, 0.7],
            vec![0.1, 0.3],
            vec![0.5],
            vec![0.6, 0.6, 0.9, 0.3],
            vec![0.2, 0.25],
        ];
        // E[x^2] - E[x]^2 over the per-solution means
        let aggs: Vec<f64> = solutions.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
        let n = aggs.len() as f64;
        let ex = aggs.iter().sum::<f64>() / n;
        let ex2 = aggs.iter().map(|a| a * a).sum::<f64>() / n;
        let s = reward_variance(&solutions).unwrap();
        assert!((s.mean - ex).abs() < 1e-12);
        assert!((s.variance - (ex2 - ex * ex)).abs() < 1e-12);
    }

    #[test]
    fn select_examples() {
        let reports = vec![report("a", 0.3), report("b", 0.1), report("c", 0.2)];
        assert_eq!(select_samples(&reports, 1.0).unwrap(), vec!["a", "c", "b"]);
        assert_eq!(select_samples(&reports, 1.0 / 3.0).unwrap(), vec!["a"]);
        assert!(select_samples(&reports, 0.0).is_err());
        let tied = vec![report("z", 0.2), report("m", 0.2)];
        assert_eq!(select_samples(&tied, 0.5).unwrap(), vec!["m"]);
    }

    #[test]
    fn select_matches_sort_then_slice() {
        let mut h = 7u64;
        let reports: Vec<SelectionReport> = (0..100)
            .map(|i| {
                h = crate::hash::splitmix64(h);
                report(&alloc::format!("p{i:03}"), (h % 50) as f64 / 100.0)
            })
            .collect();
        let mut sorted = reports.clone();
        sorted.sort_by(|a, b| b.variance.partial_cmp(&a.variance).unwrap().then(a.problem_id.cmp(&b.problem_id)));
        let expected: Vec<String> = sorted[..25].iter().map(|r| r.problem_id.clone()).collect();
        assert_eq!(select_samples(&reports, 0.25).unwrap(), expected);
    }

    #[test]
    fn difficulty_examples() {
        let stat = |id: &str, a: f64, t: bool| ProblemStat { problem_id: id.into(), model_accuracy: a, text_only_solvable: t };
        let kept = difficulty_filter(&[stat("a", 0.71, false), stat("b", 0.70, false), stat("c", 0.10, true)]).unwrap();
        assert_eq!(kept, vec!["b"]);
        assert!(difficulty_filter(&[stat("x", 1.2, false)]).is_err());
    }

    fn cell(s: Subject, g: u8, count: u64) -> CellCount {
        CellCount { subject: s, grade: Grade::new(g).unwrap(), count }
    }

    #[test]
    fn quota_examples() {
        let q = stratified_quotas(&[cell(Subject::Math, 7, 5), cell(Subject::Physics, 7, 5)], 10).unwrap();
        assert_eq!(q.values().copied().collect::<Vec<_>>(), vec![5, 5]);
        let q = stratified_quotas(&[cell(Subject::Math, 7, 30), cell(Subject::Math, 8, 10)], 4).unwrap();
        assert_eq!(q.values().copied().collect::<Vec<_>>(), vec![3, 1]);
        assert_eq!(stratified_quotas(&[cell(Subject::Math, 7, 0)], 4), Err(SelectionError::EmptyCorpus));
        assert_eq!(stratified_quotas(&[], 4), Err(SelectionError::EmptyCorpus));
    }

    #[test]
    fn quota_rounding_residual() {
        // three equal cells, 10 units: 3.33 each rounds to 3, one extra goes to the first cell
        let q = stratified_quotas(
            &[cell(Subject::Math, 7, 1), cell(Subject::Math, 8, 1), cell(Subject::Math, 9, 1)],
            10,
        )
        .unwrap();
        assert_eq!(q.values().copied().collect::<Vec<_>>(), vec![4, 3, 3]);
        // half-even: 2.5 -> 2, 1.5 -> 2 with total 4
        let q = stratified_quotas(&[cell(Subject::Math, 7, 5), cell(Subject::Math, 8, 3)], 4).unwrap();
        assert_eq!(q.values().sum::<u64>(), 4);
    }

    fn cells() -> impl Strategy<Value = Vec<CellCount>> {
        proptest::collection::vec((0usize..5, 7u8..=12, 0u64..5000), 1..30).prop_map(|v| {
            v.into_iter().map(|(s, g, c)| cell(Subject::ALL[s], g, c)).collect()
        })
    }

    proptest! {
        #[test]
        fn quotas_conserve_total_and_stay_within_one(counts in cells(), total in 1u64..200_000) {
            prop_assume!(counts.iter().any(|c| c.count > 0));
            let q = stratified_quotas(&counts, total).unwrap();
            prop_assert_eq!(q.values().sum::<u64>(), total);
            let mut merged: BTreeMap<(Subject, Grade), u64> = BTreeMap::new();
            for c in &counts {
                *merged.entry((c.subject, c.grade)).or_default() += c.count;
            }
            let sum: u64 = merged.values().sum();
            for (k, n) in merged {
                let w = n as f64 * total as f64 / sum as f64;
                prop_assert!((q[&k] as f64 - w).abs() < 1.0 + 1e-9);
            }
        }

        #[test]
        fn quota_monotone_in_own_count(counts in cells(), total in 1u64..10_000, idx in 0usize..30, bump in 1u64..500) {
            prop_assume!(counts.iter().any(|c| c.count > 0));
            let i = idx % counts.len();
            let key = (counts[i].subject, counts[i].grade);
            let before = stratified_quotas(&counts, total).unwrap()[&key];
            let mut more = counts.clone();
            more[i].count += bump;
            let after = stratified_quotas(&more, total).unwrap()[&key];
            prop_assert!(after >= before, "{} -> {}", before, after);
        }

        #[test]
        fn variance_nonnegative_and_zero_iff_constant(aggs in proptest::collection::vec(0u32..=100, 2..12)) {
            let solutions: Vec<Vec<f64>> = aggs.iter().map(|a| vec![*a as f64 / 100.0]).collect();
            let s = reward_variance(&solutions).unwrap();
            prop_assert!(s.variance >= 0.0);
            let constant = aggs.iter().all(|a| *a == aggs[0]);
            prop_assert_eq!(s.variance == 0.0, constant);
        }
    }
}
