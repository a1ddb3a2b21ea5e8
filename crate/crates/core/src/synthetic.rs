//! Scripted problem suites with known answers.
//!
//! Each builder returns problems together with scripted actors and an
//! oracle reward model whose scores are 1 exactly on the planted
//! (gold-consistent) steps and 0 elsewhere. They drive offline evaluation
//! of search, reranking and the data gates without any remote model.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::hash::{splitmix64, StableHasher};
use crate::inference::parse_tagged;
use crate::mcts::{Schedule, SearchConfig};
use crate::model::ActorModel;
use crate::mock::{
    ActorOutcome, CritiqueOutcome, DefaultActor, DefaultCritique, OutcomeTable, ScriptedActor, ScriptedReward,
};
use crate::types::{ActionKind, Grade, Problem, ReasoningStep, StepLabel, Subject};

/// The canonical action order used for planted paths.
pub const PLANTED_ACTIONS: [ActionKind; 6] = [
    ActionKind::Caption,
    ActionKind::Summary,
    ActionKind::SubTask,
    ActionKind::Thinking,
    ActionKind::SelfReflection,
    ActionKind::Answer,
];

/// Reward model that scores 0 with a reasoning-error label unless scripted.
pub fn oracle_reward(id: &str) -> ScriptedReward {
    ScriptedReward::new(
        id,
        0,
        DefaultCritique::Constant { label: StepLabel::LogicalReasoningError, score: 0.0 },
    )
}

/// Scripts `prm` to score every prefix of `path` at 1 with a correct label.
pub fn plant_path(prm: &mut ScriptedReward, problem_id: &str, path: &[ReasoningStep]) {
    for i in 0..path.len() {
        prm.script(problem_id, &path[..=i], OutcomeTable::single(CritiqueOutcome::correct(1.0)));
    }
}

fn synthetic_problem(index: usize, seed: u64) -> Problem {
    let subject = Subject::ALL[index % Subject::ALL.len()];
    let grade = Grade::new(7 + (index / Subject::ALL.len() % 6) as u8).expect("grade in 7..=12");
    let answer = splitmix64(StableHasher::new().u64(seed).u64(index as u64).finish()) % 10_000;
    Problem::new(
        format!("syn-{index:04}"),
        format!("Synthetic {} problem {index}: find the hidden value.", subject.as_str()),
        subject,
        grade,
    )
    .with_ground_truth(answer.to_string())
}

/// A planted-path search suite.
#[derive(Debug, Clone)]
pub struct PlantedSuite {
    pub problems: Vec<Problem>,
    pub actors: Vec<ScriptedActor>,
    pub oracle: ScriptedReward,
    /// Correct path per problem, same order as `problems`.
    pub planted: Vec<Vec<ReasoningStep>>,
}

/// Problems with a unique correct path through [`PLANTED_ACTIONS`].
///
/// At each planted prefix, each actor asked for the planted next action
/// emits the planted step with probability `p_correct` and an actor-specific
/// wrong step otherwise. Off the planted path actors emit seeded filler.
/// The oracle scores planted prefixes 1 and everything else 0.
pub fn planted_suite(n_problems: usize, n_actors: usize, p_correct: f64, seed: u64) -> PlantedSuite {
    let mut actors: Vec<ScriptedActor> = (0..n_actors)
        .map(|j| ScriptedActor::new(format!("actor-{j}"), seed.wrapping_add(j as u64)).with_default(DefaultActor::Filler))
        .collect();
    let mut oracle = oracle_reward("oracle");
    let mut problems = Vec::with_capacity(n_problems);
    let mut planted = Vec::with_capacity(n_problems);
    for i in 0..n_problems {
        let problem = synthetic_problem(i, seed);
        let gold = problem.ground_truth.clone().unwrap_or_default();
        let path: Vec<ReasoningStep> = PLANTED_ACTIONS
            .iter()
            .map(|a| {
                let content = match a {
                    ActionKind::Answer => gold.clone(),
                    _ => format!("{} for {}: planted", a.as_str(), problem.id),
                };
                ReasoningStep::new(*a, content, "planted").expect("non-empty content")
            })
            .collect();
        for (k, step) in path.iter().enumerate() {
            for actor in actors.iter_mut() {
                let wrong = match step.action {
                    ActionKind::Answer => format!("{}", gold.parse::<u64>().unwrap_or(0) + 1 + k as u64),
                    a => format!("{} for {}: slip by {}", a.as_str(), problem.id, ActorModel::id(actor)),
                };
                actor.script_step(
                    &problem.id,
                    &path[..k],
                    step.action,
                    OutcomeTable::weighted([
                        (p_correct, ActorOutcome::Emit(step.content.clone())),
                        (1.0 - p_correct, ActorOutcome::Emit(wrong)),
                    ]),
                );
            }
        }
        plant_path(&mut oracle, &problem.id, &path);
        problems.push(problem);
        planted.push(path);
    }
    PlantedSuite { problems, actors, oracle, planted }
}

/// A problem whose greedy first step looks best but leads nowhere.
#[derive(Debug, Clone)]
pub struct DeceptiveInstance {
    pub problem: Problem,
    pub actors: Vec<ScriptedActor>,
    pub prm: ScriptedReward,
    pub config: SearchConfig,
}

/// Two caption candidates: the greedy one scores 0.6 but every follow-up
/// scores 0.2 (below `tau` = 0.5); the alternative scores 0.55 and every
/// step after it 0.9. One rollout spends itself on the greedy branch.
pub fn deceptive_instance(rollouts: usize) -> DeceptiveInstance {
    let problem = Problem::new("deceptive", "Which region of the diagram is shaded?", Subject::Math, Grade::new(9).expect("valid grade"))
        .with_ground_truth("B");
    let step = |a: ActionKind, c: &str| ReasoningStep::new(a, c, "script").expect("non-empty");
    let greedy = step(ActionKind::Caption, "The shaded region is obviously the triangle.");
    let careful = step(ActionKind::Caption, "The figure shows two overlapping regions, one shaded.");

    let mut actors = vec![
        ScriptedActor::new("greedy", 1).with_default(DefaultActor::Filler),
        ScriptedActor::new("careful", 2).with_default(DefaultActor::Filler),
    ];
    actors[0].script_step(&problem.id, &[], ActionKind::Caption, OutcomeTable::single(ActorOutcome::Emit(greedy.content.clone())));
    actors[1].script_step(&problem.id, &[], ActionKind::Caption, OutcomeTable::single(ActorOutcome::Emit(careful.content.clone())));
    for (j, actor) in actors.iter_mut().enumerate() {
        actor.script_step(
            &problem.id,
            core::slice::from_ref(&greedy),
            ActionKind::Summary,
            OutcomeTable::single(ActorOutcome::Emit(format!("Dead end {j}: the triangle has no label."))),
        );
    }

    let mut prm = ScriptedReward::new("deceptive-prm", 0, DefaultCritique::Constant { label: StepLabel::CorrectStep, score: 0.9 });
    prm.script(&problem.id, core::slice::from_ref(&greedy), OutcomeTable::single(CritiqueOutcome::correct(0.6)));
    prm.script(&problem.id, core::slice::from_ref(&careful), OutcomeTable::single(CritiqueOutcome::correct(0.55)));
    for j in 0..2 {
        let dead = step(ActionKind::Summary, &format!("Dead end {j}: the triangle has no label."));
        prm.script(
            &problem.id,
            &[greedy.clone(), dead],
            OutcomeTable::single(CritiqueOutcome::error(StepLabel::VisualMisunderstanding, "no triangle is shaded", 0.2)),
        );
    }

    let config = SearchConfig {
        k_actors: 2,
        tau: 0.5,
        rollouts,
        schedule: Schedule::Linear,
        ..SearchConfig::default()
    };
    DeceptiveInstance { problem, actors, prm, config }
}

/// A Best-of-N suite with a known per-slot success probability.
#[derive(Debug, Clone)]
pub struct BonSuite {
    pub problems: Vec<Problem>,
    pub actor: ScriptedActor,
    pub oracle: ScriptedReward,
}

fn tagged_solution(problem: &Problem, answer: &str, correct: bool) -> String {
    let mood = if correct { "carefully" } else { "hastily" };
    format!(
        "<caption>{id}: figure read {mood}</caption><thinking>{id}: computed {mood}</thinking>\
         <self_reflection>{id}: checked {mood}</self_reflection><answer>{answer}</answer>",
        id = problem.id
    )
}

/// Every slot independently yields the correct solution with probability
/// `p_correct` and a wrong one otherwise; the oracle scores the correct
/// solution's steps 1 and the wrong one's 0.
pub fn bon_suite(n_problems: usize, p_correct: f64, seed: u64) -> BonSuite {
    let mut actor = ScriptedActor::new("bon-actor", seed);
    let mut oracle = oracle_reward("oracle");
    let mut problems = Vec::with_capacity(n_problems);
    for i in 0..n_problems {
        let problem = synthetic_problem(i, seed);
        let gold = problem.ground_truth.clone().unwrap_or_default();
        let wrong = format!("{}", gold.parse::<u64>().unwrap_or(0) + 1);
        let good = tagged_solution(&problem, &gold, true);
        actor.script_solution(
            &problem.id,
            OutcomeTable::weighted([
                (p_correct, ActorOutcome::Emit(good.clone())),
                (1.0 - p_correct, ActorOutcome::Emit(tagged_solution(&problem, &wrong, false))),
            ]),
        );
        if let Some(t) = parse_tagged(&problem.id, &good, "bon-actor") {
            plant_path(&mut oracle, &problem.id, &t.steps);
        }
        problems.push(problem);
    }
    BonSuite { problems, actor, oracle }
}

/// A reference solution of `len` steps for error injection.
pub fn reference_steps(problem: &Problem, len: usize) -> Vec<String> {
    (0..len)
        .map(|i| format!("{}: step {i} of the reference solution.", problem.id))
        .collect()
}

/// Problems for a small end-to-end corpus.
pub fn demo_problems(n: usize, seed: u64) -> Vec<Problem> {
    (0..n).map(|i| synthetic_problem(i, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcts::search;
    use crate::model::RewardModel;

    #[test]
    fn planted_path_scores_one_and_slips_zero() {
        let suite = planted_suite(2, 3, 0.7, 5);
        let p = &suite.problems[0];
        let path = &suite.planted[0];
        for i in 0..path.len() {
            assert_eq!(suite.oracle.critique(p, &path[..i], &path[i]).unwrap().score, 1.0);
        }
        let slip = ReasoningStep::new(ActionKind::Summary, "something else", "x").unwrap();
        assert_eq!(suite.oracle.critique(p, &path[..1], &slip).unwrap().score, 0.0);
    }

    #[test]
    fn full_search_finds_planted_path_with_perfect_actors() {
        let suite = planted_suite(3, 3, 1.0, 9);
        let config = SearchConfig { schedule: Schedule::Linear, ..SearchConfig::default() };
        for (p, path) in suite.problems.iter().zip(&suite.planted) {
            let r = search(p, &suite.actors, &suite.oracle, &config).unwrap();
            assert_eq!(r.trajectories.len(), 1);
            let got: Vec<(ActionKind, &str)> = r.trajectories[0].trajectory.steps.iter().map(|s| (s.action, s.content.as_str())).collect();
            let want: Vec<(ActionKind, &str)> = path.iter().map(|s| (s.action, s.content.as_str())).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn deceptive_needs_more_than_one_rollout() {
        let one = deceptive_instance(1);
        let r1 = search(&one.problem, &one.actors, &one.prm, &one.config).unwrap();
        assert!(r1.trajectories.is_empty());
        let four = deceptive_instance(4);
        let r4 = search(&four.problem, &four.actors, &four.prm, &four.config).unwrap();
        assert!(!r4.trajectories.is_empty());
        assert_eq!(r4.trajectories[0].trajectory.steps[0].content, "The figure shows two overlapping regions, one shaded.");
    }
}
