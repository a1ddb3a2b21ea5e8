//! Best-of-N sampling and reranking.
//!
//! [`sample_candidates`] draws `n` free-form solutions at seeded
//! temperatures and parses them into typed steps; [`bon_select`] picks one
//! by a [`Strategy`]; [`evaluate_suite`] scores strategies against gold
//! answers.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{canonicalize_answer, self_consistency_vote};
use crate::hash::StableHasher;
use crate::model::{ActorModel, ModelError, RewardModel};
use crate::types::{ActionKind, Problem, ReasoningStep, StepCritique, Trajectory};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    SelfConsistency,
    #[default]
    PrmAccumulated,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::SelfConsistency, Strategy::PrmAccumulated];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::SelfConsistency => "self_consistency",
            Strategy::PrmAccumulated => "prm_accumulated",
        }
    }
}

/// How step scores combine into a candidate score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BonConfig {
    pub n: usize,
    pub strategy: Strategy,
    pub temperature_low: f64,
    pub temperature_high: f64,
    pub seed: u64,
    pub aggregate: Aggregate,
}

impl Default for BonConfig {
    fn default() -> Self {
        BonConfig {
            n: 8,
            strategy: Strategy::PrmAccumulated,
            temperature_low: 1.1,
            temperature_high: 1.3,
            seed: 0,
            aggregate: Aggregate::Sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BonError {
    #[error("n must be at least 1")]
    ZeroCandidates,
    #[error("temperature range [{0}, {1}] is empty or not finite")]
    TemperatureRange(f64, f64),
    #[error("all {n} candidates failed")]
    Sampling { n: usize, failures: Vec<(u32, ModelError)> },
    #[error("problem {0} has no gold answer")]
    MissingGold(String),
}

impl BonConfig {
    pub fn validate(&self) -> Result<(), BonError> {
        if self.n == 0 {
            return Err(BonError::ZeroCandidates);
        }
        let (lo, hi) = (self.temperature_low, self.temperature_high);
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
            return Err(BonError::TemperatureRange(lo, hi));
        }
        Ok(())
    }
}

fn stream(seed: u64, problem_id: &str, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(StableHasher::new().u64(seed).str(problem_id).str(purpose).finish())
}

/// The `n` per-slot temperatures for `problem_id`. The first `k` values do
/// not depend on `n`.
pub fn candidate_temperatures(config: &BonConfig, problem_id: &str) -> Vec<f64> {
    let mut rng = stream(config.seed, problem_id, "temperature");
    (0..config.n)
        .map(|_| {
            if config.temperature_low == config.temperature_high {
                config.temperature_low
            } else {
                rng.random_range(config.temperature_low..=config.temperature_high)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub slot: u32,
    pub temperature: f64,
    /// False when the text had no usable action tags and fell back to a
    /// thinking step plus its last line as the answer.
    pub parsed: bool,
    pub trajectory: Trajectory,
}

/// Parses `<caption>…</caption><thinking>…</thinking>…<answer>…</answer>`
/// into typed steps. Text outside known tags is ignored.
pub fn parse_tagged(problem_id: &str, text: &str, producer: &str) -> Option<Trajectory> {
    let mut steps = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('<') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('>') else { break };
        let name = after[..close].trim();
        let body = &after[close + 1..];
        match ActionKind::parse(name) {
            Some(action) => {
                let end_tag = alloc::format!("</{name}>");
                let Some(end) = body.find(&end_tag) else { break };
                if let Ok(step) = ReasoningStep::new(action, body[..end].trim(), producer) {
                    steps.push(step);
                }
                rest = &body[end + end_tag.len()..];
            }
            None => rest = after,
        }
    }
    if steps.is_empty() {
        return None;
    }
    Trajectory::new(problem_id, steps).ok()
}

/// Thinking step holding the whole text, answer step holding its last
/// non-empty line.
fn fallback(problem_id: &str, text: &str, producer: &str) -> Option<Trajectory> {
    let last = text.lines().rev().map(str::trim).find(|l| !l.is_empty())?;
    let steps = alloc::vec![
        ReasoningStep::new(ActionKind::Thinking, text.trim(), producer).ok()?,
        ReasoningStep::new(ActionKind::Answer, last, producer).ok()?,
    ];
    Trajectory::new(problem_id, steps).ok()
}

pub fn parse_candidate(problem_id: &str, text: &str, producer: &str) -> Option<(Trajectory, bool)> {
    match parse_tagged(problem_id, text, producer) {
        Some(t) => Some((t, true)),
        None => fallback(problem_id, text, producer).map(|t| (t, false)),
    }
}

/// Draws `config.n` solutions from `actor`, one per slot.
///
/// Failed or empty slots are dropped with a warning; only when every slot
/// fails is this an error.
pub fn sample_candidates<A: ActorModel + ?Sized>(
    actor: &A,
    problem: &Problem,
    config: &BonConfig,
) -> Result<Vec<Candidate>, BonError> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.n);
    let mut failures = Vec::new();
    for (slot, temperature) in candidate_temperatures(config, &problem.id).into_iter().enumerate() {
        let slot = slot as u32;
        match actor.solve(problem, temperature, slot) {
            Ok(text) => match parse_candidate(&problem.id, &text, actor.id()) {
                Some((trajectory, parsed)) => out.push(Candidate { slot, temperature, parsed, trajectory }),
                None => {
                    log::warn!("{}: candidate {slot} is empty, dropped", problem.id);
                    failures.push((slot, ModelError::Protocol("empty candidate".into())));
                }
            },
            Err(e) => {
                log::warn!("{}: candidate {slot} failed: {e}", problem.id);
                failures.push((slot, e));
            }
        }
    }
    if out.is_empty() {
        return Err(BonError::Sampling { n: config.n, failures });
    }
    Ok(out)
}

pub fn accumulated_reward(critiques: &[StepCritique], aggregate: Aggregate) -> f64 {
    let sum: f64 = critiques.iter().map(|c| c.score).sum();
    match aggregate {
        Aggregate::Sum => sum,
        Aggregate::Mean if critiques.is_empty() => 0.0,
        Aggregate::Mean => sum / critiques.len() as f64,
    }
}

/// Relative slack under which two accumulated rewards count as tied, so
/// summation rounding cannot break a tie against the earlier candidate.
const TIE_EPSILON: f64 = 1e-12;

fn argmax(scores: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        if best.is_none_or(|(_, b)| s > b + TIE_EPSILON * b.abs().max(1.0)) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Index of the selected candidate; `None` only for an empty slice.
///
/// `Random` draws uniformly from a stream keyed by the seed and problem id.
/// `SelfConsistency` takes the majority canonical answer, then the best
/// accumulated reward within that class, falling back to `PrmAccumulated`
/// when no candidate has an answer. `PrmAccumulated` maximises the
/// accumulated step reward. Ties go to the earliest candidate.
pub fn bon_select(candidates: &[(Trajectory, Vec<StepCritique>)], config: &BonConfig) -> Option<usize> {
    if candidates.is_empty() {
        return None;
    }
    let score = |i: usize| accumulated_reward(&candidates[i].1, config.aggregate);
    let by_reward = || argmax((0..candidates.len()).map(|i| (i, score(i))));
    match config.strategy {
        Strategy::Random => {
            let mut rng = stream(config.seed, &candidates[0].0.problem_id, "random");
            Some(rng.random_range(0..candidates.len()))
        }
        Strategy::PrmAccumulated => by_reward(),
        Strategy::SelfConsistency => {
            let answers: Vec<(usize, String)> = candidates
                .iter()
                .enumerate()
                .filter_map(|(i, (t, _))| t.final_answer.as_ref().map(|a| (i, canonicalize_answer(a))))
                .collect();
            let texts: Vec<&str> = answers.iter().map(|(_, a)| a.as_str()).collect();
            match self_consistency_vote(&texts) {
                Some((winner, _)) => argmax(
                    answers
                        .iter()
                        .filter(|(_, a)| *a == winner)
                        .map(|(i, _)| (*i, score(*i))),
                ),
                None => by_reward(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub config_index: usize,
    pub problem_id: String,
    pub slot: u32,
    pub temperature: f64,
    pub parsed: bool,
    pub final_answer: Option<String>,
    pub score: f64,
    pub selected: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemOutcome {
    pub problem_id: String,
    pub correct: bool,
    pub audit: Vec<AuditRecord>,
}

/// Samples, critiques and selects for one problem under one config.
///
/// Candidates whose critique fails are dropped; a problem with no
/// surviving candidate counts as incorrect.
pub fn evaluate_problem<A: ActorModel + ?Sized, R: RewardModel + ?Sized>(
    problem: &Problem,
    actor: &A,
    prm: &R,
    config: &BonConfig,
    config_index: usize,
) -> Result<ProblemOutcome, BonError> {
    let gold = problem
        .ground_truth
        .as_deref()
        .ok_or_else(|| BonError::MissingGold(problem.id.clone()))?;
    let gold = canonicalize_answer(gold);
    let candidates = match sample_candidates(actor, problem, config) {
        Ok(c) => c,
        Err(BonError::Sampling { .. }) => {
            log::warn!("{}: no candidates, counted incorrect", problem.id);
            return Ok(ProblemOutcome { problem_id: problem.id.clone(), correct: false, audit: Vec::new() });
        }
        Err(e) => return Err(e),
    };
    let mut scored = Vec::with_capacity(candidates.len());
    let mut kept = Vec::with_capacity(candidates.len());
    for c in candidates {
        match prm.critique_full(problem, &c.trajectory) {
            Ok(critiques) => {
                scored.push((c.trajectory.clone(), critiques));
                kept.push(c);
            }
            Err(e) => log::warn!("{}: critique of candidate {} failed: {e}", problem.id, c.slot),
        }
    }
    let selected = bon_select(&scored, config);
    let is_correct = |t: &Trajectory| t.final_answer.as_deref().map(canonicalize_answer).as_deref() == Some(gold.as_str());
    let audit = kept
        .iter()
        .zip(&scored)
        .enumerate()
        .map(|(i, (c, (t, critiques)))| AuditRecord {
            config_index,
            problem_id: problem.id.clone(),
            slot: c.slot,
            temperature: c.temperature,
            parsed: c.parsed,
            final_answer: t.final_answer.clone(),
            score: accumulated_reward(critiques, config.aggregate),
            selected: selected == Some(i),
            correct: is_correct(t),
        })
        .collect();
    Ok(ProblemOutcome {
        problem_id: problem.id.clone(),
        correct: selected.is_some_and(|i| is_correct(&scored[i].0)),
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub n: usize,
    pub strategy: Strategy,
    pub aggregate: Aggregate,
    pub seed: u64,
    pub problems: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl AccuracyRow {
    pub fn from_outcomes(config: &BonConfig, outcomes: &[ProblemOutcome]) -> Self {
        let correct = outcomes.iter().filter(|o| o.correct).count();
        AccuracyRow {
            n: config.n,
            strategy: config.strategy,
            aggregate: config.aggregate,
            seed: config.seed,
            problems: outcomes.len(),
            correct,
            accuracy: if outcomes.is_empty() { 0.0 } else { correct as f64 / outcomes.len() as f64 },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<AccuracyRow>,
    pub audit: Vec<AuditRecord>,
}

/// Accuracy of each config over `problems`, which must all carry gold
/// answers.
pub fn evaluate_suite<A: ActorModel + ?Sized, R: RewardModel + ?Sized>(
    problems: &[Problem],
    actor: &A,
    prm: &R,
    configs: &[BonConfig],
) -> Result<EvalReport, BonError> {
    if let Some(p) = problems.iter().find(|p| p.ground_truth.is_none()) {
        return Err(BonError::MissingGold(p.id.to_string()));
    }
    let mut report = EvalReport::default();
    for (ci, config) in configs.iter().enumerate() {
        config.validate()?;
        let mut outcomes = Vec::with_capacity(problems.len());
        for p in problems {
            outcomes.push(evaluate_problem(p, actor, prm, config, ci)?);
        }
        report.rows.push(AccuracyRow::from_outcomes(config, &outcomes));
        report.audit.extend(outcomes.into_iter().flat_map(|o| o.audit));
    }
    Ok(report)
}
