use std::collections::BTreeMap;

use stepsearch_core::datagen::{
    filter_trajectories, inject_error, qc_filters, record_from_trajectory, rejection_sample, Format, InjectionSpec, QcConfig,
};
use stepsearch_core::inference::{evaluate_suite, Aggregate, BonConfig, Strategy};
use stepsearch_core::mcts::{search, Schedule, SearchConfig};
use stepsearch_core::mock::{CritiqueOutcome, DefaultCritique, OutcomeTable, ScriptedActor, ScriptedReward};
use stepsearch_core::model::InvertedReward;
use stepsearch_core::synthetic::{bon_suite, planted_suite, reference_steps};
use stepsearch_core::{
    prm_step_score, ActionKind, Grade, Problem, ReasoningStep, RewardModel, StepCritique, StepLabel, Subject, Trajectory,
};

fn problem() -> Problem {
    Problem::new("arith", "Compute 2+2.", Subject::Math, Grade::new(7).unwrap()).with_ground_truth("4")
}

#[test]
fn averaged_reward_over_a_cycled_table() {
    let p = problem();
    let step = ReasoningStep::new(ActionKind::Thinking, "2+2=4", "a").unwrap();
    let table = [0.2, 0.4, 0.6, 0.8];
    let mut prm = ScriptedReward::new("prm", 1, DefaultCritique::Fail);
    prm.script(&p.id, std::slice::from_ref(&step), OutcomeTable::cycle(table.map(CritiqueOutcome::correct)));
    let oracle = table.iter().sum::<f64>() / table.len() as f64;
    let got = prm_step_score(&prm, &p, &[], &step, 4).unwrap();
    assert!((got - oracle).abs() < 1e-12);
    assert!((got - 0.5).abs() < 1e-12);
}

#[test]
fn injected_step_scores_zero_under_scripted_prm() {
    let p = problem();
    let reference = vec!["We add the two numbers.".to_string(), "2+2=4".to_string(), "So the answer is 4.".to_string()];
    let mut actor = ScriptedActor::new("rewriter", 0);
    actor.script_rewrite("2+2=4", OutcomeTable::single(stepsearch_core::mock::ActorOutcome::Emit("2+2=5".into())));
    let spec = InjectionSpec::new(1, StepLabel::ComputationalError, "rewriter").unwrap();
    let inj = inject_error(&p, &reference, &spec, &actor).unwrap();
    assert_eq!(inj.steps[1], "2+2=5");

    let steps: Vec<ReasoningStep> =
        inj.steps.iter().map(|s| ReasoningStep::new(ActionKind::Thinking, s.clone(), "x").unwrap()).collect();
    let mut prm = ScriptedReward::new("prm", 0, DefaultCritique::Constant { label: StepLabel::CorrectStep, score: 1.0 });
    prm.script(
        &p.id,
        &steps[..2],
        OutcomeTable::single(CritiqueOutcome::error(StepLabel::ComputationalError, "2+2 is 4", 0.0)),
    );
    let t = Trajectory::new(&p.id, steps).unwrap();
    let scored = prm.critique_full(&p, &t).unwrap();
    for (gold, judged) in inj.gold.iter().zip(&scored) {
        assert_eq!((gold.label, gold.score), (judged.label, judged.score));
    }
}

#[test]
fn stage_one_gate_rejects_every_injected_trajectory() {
    // the oracle scores planted steps 1 and anything else 0 with an error label
    let suite = planted_suite(40, 2, 1.0, 3);
    let config = SearchConfig { schedule: Schedule::Linear, ..SearchConfig::default() };
    let mut checked = 0;
    for (p, planted) in suite.problems.iter().zip(&suite.planted) {
        let clean = Trajectory::new(&p.id, planted.clone()).unwrap();
        let errors: Vec<StepLabel> = StepLabel::errors().collect();
        for i in 0..planted.len() {
            let mut steps = planted.clone();
            steps[i] = ReasoningStep::new(steps[i].action, format!("{} [{}]", steps[i].content, errors[i % 8]), "inj").unwrap();
            let t = Trajectory::new(&p.id, steps).unwrap();
            let c = suite.oracle.critique_full(p, &t).unwrap();
            assert!(filter_trajectories(&[(t, c)], 0.6).unwrap().is_empty());
            checked += 1;
        }
        let c = suite.oracle.critique_full(p, &clean).unwrap();
        assert_eq!(filter_trajectories(&[(clean, c)], 0.6).unwrap().len(), 1);
        let found = search(p, &suite.actors, &suite.oracle, &config).unwrap();
        let kept: Vec<Trajectory> = found.trajectories.iter().map(|s| s.trajectory.clone()).collect();
        assert_eq!(rejection_sample(&kept, p.ground_truth.as_deref().unwrap()).len(), 1);
    }
    assert_eq!(checked, 40 * 6);
}

#[test]
fn qc_keeps_output_of_a_mixed_pipeline_batch() {
    let suite = planted_suite(8, 2, 1.0, 5);
    let actor = &suite.actors[0];
    let mut records = Vec::new();
    for (k, (p, planted)) in suite.problems.iter().zip(&suite.planted).enumerate() {
        let t = Trajectory::new(&p.id, planted.clone()).unwrap();
        let c = suite.oracle.critique_full(p, &t).unwrap();
        records.push(record_from_trajectory(&t, &c, Format::Stepwise).unwrap());
        let refs = reference_steps(p, 4);
        for e in 0..3 {
            let label = StepLabel::errors().nth((k + e) % 8).unwrap();
            let spec = InjectionSpec::new(e % 4, label, actor_id(actor)).unwrap();
            records.push(inject_error(p, &refs, &spec, actor).unwrap().into_record(p.id.clone()).unwrap());
        }
    }
    let config = QcConfig { max_error_share: 0.2, min_per_type: 1, seed: 9 };
    let (kept, report) = qc_filters(&records, None, &config);
    assert_eq!(report.input, records.len());
    let (again, second) = qc_filters(&kept, None, &config);
    assert_eq!(again, kept);
    assert!(second.rejections.is_empty());
    let dup: BTreeMap<String, Vec<StepLabel>> = kept.iter().map(|r| (r.record_id.clone(), r.labels())).collect();
    assert_eq!(qc_filters(&kept, Some(&dup), &config).0, kept);
}

fn actor_id(a: &ScriptedActor) -> String {
    stepsearch_core::ActorModel::id(a).to_string()
}

fn bon(n: usize, strategy: Strategy) -> BonConfig {
    BonConfig { n, strategy, seed: 21, aggregate: Aggregate::Sum, ..BonConfig::default() }
}

#[test]
fn oracle_reranking_improves_with_n_and_anti_oracle_does_not_beat_random() {
    let suite = bon_suite(300, 0.5, 11);
    let configs: Vec<BonConfig> = [1, 2, 4, 8].map(|n| bon(n, Strategy::PrmAccumulated)).to_vec();
    let report = evaluate_suite(&suite.problems, &suite.actor, &suite.oracle, &configs).unwrap();
    let acc: Vec<f64> = report.rows.iter().map(|r| r.accuracy).collect();
    assert!(acc.windows(2).all(|w| w[0] <= w[1]), "{acc:?}");
    for (a, n) in acc.iter().zip([1, 2, 4, 8]) {
        let analytic = 1.0 - 0.5f64.powi(n);
        assert!((a - analytic).abs() < 0.08, "n={n}: {a} vs {analytic}");
    }

    let inverted = InvertedReward::new(suite.oracle.clone());
    let anti = evaluate_suite(&suite.problems, &suite.actor, &inverted, &[bon(8, Strategy::PrmAccumulated)]).unwrap();
    let random = evaluate_suite(&suite.problems, &suite.actor, &suite.oracle, &[bon(8, Strategy::Random)]).unwrap();
    assert!(anti.rows[0].accuracy <= random.rows[0].accuracy);
    // inverted scores pick a wrong candidate whenever one exists
    let all_correct = suite
        .problems
        .iter()
        .filter(|p| {
            let slots: Vec<_> = report.audit.iter().filter(|a| a.config_index == 3 && a.problem_id == p.id).collect();
            slots.len() == 8 && slots.iter().all(|a| a.correct)
        })
        .count();
    assert_eq!(anti.rows[0].correct, all_correct);
}

#[test]
fn single_candidate_strategies_agree() {
    let suite = bon_suite(50, 0.5, 2);
    let configs: Vec<BonConfig> = Strategy::ALL.iter().map(|s| bon(1, *s)).collect();
    let report = evaluate_suite(&suite.problems, &suite.actor, &suite.oracle, &configs).unwrap();
    assert!(report.rows.windows(2).all(|w| w[0].correct == w[1].correct));
}

#[test]
fn critique_round_trips_through_json() {
    let c = StepCritique::new("x", StepLabel::Hallucination, "made up", 0.1234567).unwrap();
    let s = serde_json::to_string(&c).unwrap();
    assert!(s.contains("0.123457"));
    let back: StepCritique = serde_json::from_str(&s).unwrap();
    assert_eq!(back.label, StepLabel::Hallucination);
    assert!(serde_json::from_str::<StepCritique>(&s.replace("0.123457", "1.5")).is_err());
}
