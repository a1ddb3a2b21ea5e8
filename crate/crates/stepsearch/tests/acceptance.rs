//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. Criterion 10 needs `STEPSEARCH_LIVE_ENDPOINT` (a chat
//! completions URL); `STEPSEARCH_LIVE_MODEL` and `STEPSEARCH_LIVE_KEY_ENV`
//! are optional.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use stepsearch::commands::{
    self, rerank::RerankOptions, search::SearchOptions, select::SelectOptions, synth::SynthOptions,
};
use stepsearch::config::{Overrides, RunConfig};
use stepsearch::io::sha256_file;
use stepsearch::remote::{ChatClient, EndpointConfig, RemoteActor, RemoteReward};
use stepsearch_core::datagen::{
    canonicalize_answer, filter_trajectories, inject_error, qc_filters, InjectionSpec, QcConfig,
};
use stepsearch_core::grammar::GrammarRules;
use stepsearch_core::hash::splitmix64;
use stepsearch_core::inference::{evaluate_suite, Aggregate, BonConfig, Strategy};
use stepsearch_core::mcts::{
    search, search_with_tree, select_index, trace_records, verify_trace, Schedule, SearchConfig, SearchResult, SearchTree,
};
use stepsearch_core::mock::{DefaultCritique, ScriptedActor, ScriptedReward};
use stepsearch_core::selection::{stratified_quotas, CellCount};
use stepsearch_core::synthetic::{bon_suite, deceptive_instance, demo_problems, planted_suite, PlantedSuite};
use stepsearch_core::{
    ActorModel, Grade, Problem, ReasoningStep, RewardModel, StepLabel, Subject, Trajectory,
};

type Criterion = (&'static str, fn() -> Verdict, Duration);

enum Verdict {
    Pass(String),
    Fail(String),
    Skipped(String),
}

use Verdict::{Fail, Pass, Skipped};

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn within(verdict: Verdict, elapsed: Duration, limit: Duration) -> Verdict {
    match verdict {
        Pass(d) if elapsed > limit => Fail(format!("{d}; took {elapsed:.1?}, limit {limit:?}")),
        v => v,
    }
}

/// Small deterministic stream for random inputs.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        splitmix64(self.0)
    }
    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }
    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

fn problem(id: &str) -> Problem {
    Problem::new(id, "Find the shaded area.", Subject::Math, Grade::new(8).unwrap())
}

struct RandomSearch {
    problem: Problem,
    actors: Vec<ScriptedActor>,
    prm: ScriptedReward,
    config: SearchConfig,
}

fn random_search(rng: &mut Rng, i: usize) -> RandomSearch {
    let seed = rng.next();
    let k = 1 + rng.below(3) as usize;
    let config = SearchConfig {
        k_actors: k,
        tau: rng.unit() * 0.9,
        rollouts: 1 + rng.below(9) as usize,
        max_depth: 4 + rng.below(8) as usize,
        c_explore: rng.unit() * 2.0,
        seed,
        schedule: if rng.below(2) == 0 { Schedule::Linear } else { Schedule::GrammarLegal },
        ..SearchConfig::default()
    };
    let low = rng.unit() * 0.6;
    RandomSearch {
        problem: problem(&format!("rand-{i}")),
        actors: (0..k).map(|j| ScriptedActor::new(format!("a{j}"), seed ^ j as u64)).collect(),
        prm: ScriptedReward::new("prm", seed, DefaultCritique::Uniform { low, high: 1.0 }),
        config,
    }
}

fn c1_backprop() -> Verdict {
    let mut rng = Rng(1);
    let mut nodes = 0;
    for i in 0..1000 {
        let s = random_search(&mut rng, i);
        let (_, tree) = search_with_tree(&s.problem, &s.actors, &s.prm, &s.config).unwrap();
        let trace = trace_records(&s.problem.id, &tree);
        let c = verify_trace(&trace, None, 1e-9);
        if !c.is_ok() {
            return Fail(format!("search {i}: {}", c.violations[0]));
        }
        if tree.node(SearchTree::ROOT).visits as usize != tree.len() - 1 {
            return Fail(format!("search {i}: root visits do not match node count"));
        }
        nodes += c.nodes;
    }
    Pass(format!("1000 searches, {nodes} nodes checked"))
}

fn ucb_oracle(children: &[(f64, u64)], parent: u64, c: f64) -> Option<usize> {
    let scores: Vec<f64> =
        children.iter().map(|(v, n)| v + c * ((parent.max(1) as f64).ln() / (1.0 + *n as f64)).sqrt()).collect();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|s| *s == best)
}

fn c2_ucb() -> Verdict {
    let mut rng = Rng(2);
    let mut edge = 0;
    for i in 0..10_000 {
        let len = 1 + rng.below(12) as usize;
        // coarse values force ties
        let children: Vec<(f64, u64)> = (0..len).map(|_| (rng.below(11) as f64 / 10.0, rng.below(20))).collect();
        let parent = match i % 4 {
            0 => 0,
            1 => 1,
            _ => rng.below(1000),
        };
        edge += usize::from(parent <= 1);
        let c = [0.0, 1.0, std::f64::consts::SQRT_2, rng.unit() * 3.0][i % 4];
        let (got, want) = (select_index(&children, parent, c), ucb_oracle(&children, parent, c));
        if got != want {
            return Fail(format!("case {i}: select {got:?}, brute force {want:?}"));
        }
    }
    Pass(format!("10000 child sets, {edge} with parent visits 0 or 1"))
}

fn c3_filter() -> Verdict {
    let mut rng = Rng(3);
    let mut pruned = 0;
    for i in 0..500 {
        let s = random_search(&mut rng, i);
        let (result, tree) = search_with_tree(&s.problem, &s.actors, &s.prm, &s.config).unwrap();
        if let Some(n) = tree.nodes().iter().skip(1).find(|n| n.reward < s.config.tau) {
            return Fail(format!("search {i}: node {} reward {} below tau {}", n.id, n.reward, s.config.tau));
        }
        let st = &result.tree_stats;
        if st.scored != st.pruned + tree.len() - 1 || st.node_count != tree.len() {
            return Fail(format!("search {i}: scored {} pruned {} nodes {}", st.scored, st.pruned, tree.len()));
        }
        if result.trajectories.iter().any(|t| t.step_rewards.iter().any(|r| *r < s.config.tau)) {
            return Fail(format!("search {i}: returned step below tau"));
        }
        pruned += st.pruned;
    }
    Pass(format!("500 searches, {pruned} candidates pruned, recount matches"))
}

/// Best trajectory by mean step reward (earliest on ties) has the gold answer.
fn solved(result: &SearchResult, gold: &str) -> bool {
    let mut best: Option<(f64, &Trajectory)> = None;
    for t in &result.trajectories {
        let mean = t.step_rewards.iter().sum::<f64>() / t.step_rewards.len().max(1) as f64;
        if best.is_none_or(|(m, _)| mean > m) {
            best = Some((mean, &t.trajectory));
        }
    }
    best.and_then(|(_, t)| t.steps.last()).is_some_and(|s| canonicalize_answer(&s.content) == canonicalize_answer(gold))
}

fn success_count(suite: &PlantedSuite, prm: &dyn RewardModel, config: &SearchConfig) -> usize {
    suite
        .problems
        .iter()
        .filter(|p| {
            let r = search(p, &suite.actors, prm, config).unwrap();
            solved(&r, p.ground_truth.as_deref().unwrap())
        })
        .count()
}

fn c4_ablation() -> Verdict {
    let suite = planted_suite(200, 3, 0.7, 17);
    let constant = ScriptedReward::new("constant", 0, DefaultCritique::Constant { label: StepLabel::CorrectStep, score: 0.5 });
    let flat_cfg = SearchConfig { schedule: Schedule::GrammarLegal, grammar: GrammarRules::unconstrained(), ..SearchConfig::default() };
    let linear = SearchConfig { schedule: Schedule::Linear, ..SearchConfig::default() };
    let flat = success_count(&suite, &constant, &flat_cfg);
    let grammar = success_count(&suite, &constant, &linear);
    let full = success_count(&suite, &suite.oracle, &linear);
    let pct = |n: usize| 100.0 * n as f64 / 200.0;
    check(
        flat < grammar && grammar < full && pct(full) >= pct(flat) + 15.0,
        format!("flat {:.1}% < grammar {:.1}% < grammar+oracle {:.1}%", pct(flat), pct(grammar), pct(full)),
    )
}

fn c5_bon() -> Verdict {
    let suite = bon_suite(2000, 0.5, 23);
    let configs: Vec<BonConfig> = [1, 2, 4, 8]
        .map(|n| BonConfig { n, strategy: Strategy::PrmAccumulated, aggregate: Aggregate::Sum, seed: 31, ..BonConfig::default() })
        .to_vec();
    let report = evaluate_suite(&suite.problems, &suite.actor, &suite.oracle, &configs).unwrap();
    let acc: Vec<f64> = report.rows.iter().map(|r| 100.0 * r.accuracy).collect();
    let analytic: Vec<f64> = [1, 2, 4, 8].iter().map(|n| 100.0 * (1.0 - 0.5f64.powi(*n))).collect();
    let close = acc.iter().zip(&analytic).all(|(a, e)| (a - e).abs() <= 3.0);
    let monotone = acc.windows(2).all(|w| w[0] <= w[1]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(" ");
    check(close && monotone, format!("n=1,2,4,8: measured {} vs analytic {}", fmt(&acc), fmt(&analytic)))
}

fn c6_rollouts() -> Verdict {
    let completion = |rollouts| {
        let d = deceptive_instance(rollouts);
        let r = search(&d.problem, &d.actors, &d.prm, &d.config).unwrap();
        (r.tree_stats.completed, r.tree_stats.rollouts)
    };
    let (c1, r1) = completion(1);
    let (c4, r4) = completion(4);
    let rate = |c: usize, r: usize| c as f64 / r.max(1) as f64;
    check(rate(c4, r4) > rate(c1, r1), format!("rollouts=1: {c1}/{r1} completed, rollouts=4: {c4}/{r4}"))
}

fn c7_quotas() -> Verdict {
    const T: u64 = 160_000;
    let mut rng = Rng(7);
    for i in 0..500 {
        let cells = 1 + rng.below(36) as usize;
        let mut counts = Vec::new();
        for c in 0..cells {
            let count = match rng.below(5) {
                0 => 0,
                1 => 1 + rng.below(3),
                _ => rng.below(100_000),
            };
            let subject = Subject::ALL[c % Subject::ALL.len()];
            let grade = Grade::new(7 + (c / Subject::ALL.len() % 6) as u8).unwrap();
            counts.push(CellCount { subject, grade, count });
        }
        if counts.iter().all(|c| c.count == 0) {
            counts[0].count = 1;
        }
        let quotas = stratified_quotas(&counts, T).unwrap();
        let mut merged: BTreeMap<(Subject, Grade), u128> = BTreeMap::new();
        for c in &counts {
            *merged.entry((c.subject, c.grade)).or_default() += c.count as u128;
        }
        let sum: u128 = merged.values().sum();
        if quotas.values().sum::<u64>() != T {
            return Fail(format!("table {i}: quotas sum to {}", quotas.values().sum::<u64>()));
        }
        for (cell, n) in &merged {
            // |q - n*T/sum| <= 1, in exact integers
            let q = *quotas.get(cell).unwrap_or(&0) as i128;
            if (q * sum as i128 - (*n * T as u128) as i128).abs() > sum as i128 {
                return Fail(format!("table {i}: cell {cell:?} quota {q} too far from its share"));
            }
        }
    }
    Pass("500 tables, sums exact, every quota within 1 of its share".into())
}

fn c8_gates() -> Verdict {
    let suite = planted_suite(200, 3, 1.0, 41);
    let actor = &suite.actors[0];
    let errors: Vec<StepLabel> = StepLabel::errors().collect();
    let mut injected = 0;
    let mut retained = 0;
    let mut records = Vec::new();
    for (p, planted) in suite.problems.iter().zip(&suite.planted) {
        let reference: Vec<String> = planted.iter().map(|s| s.content.clone()).collect();
        for i in 0..5 {
            let spec = InjectionSpec::new(i, errors[(injected + i) % errors.len()], actor.id()).unwrap();
            let inj = inject_error(p, &reference, &spec, actor).unwrap();
            let steps: Vec<ReasoningStep> = planted
                .iter()
                .zip(&inj.steps)
                .map(|(s, text)| ReasoningStep::new(s.action, text.clone(), actor.id()).unwrap())
                .collect();
            let t = Trajectory::new(&p.id, steps).unwrap();
            let critiques = suite.oracle.critique_full(p, &t).unwrap();
            retained += filter_trajectories(&[(t, critiques)], 0.6).unwrap().len();
            records.push(inj.into_record(p.id.clone()).unwrap());
            injected += 1;
        }
    }
    let config = QcConfig::default();
    let (kept, _) = qc_filters(&records, None, &config);
    let (again, second) = qc_filters(&kept, None, &config);
    let idempotent = again == kept && second.rejections.is_empty();
    check(
        injected == 1000 && retained == 0 && idempotent,
        format!("{injected} injected, {retained} retained; qc kept {} of {}, idempotent: {idempotent}", kept.len(), records.len()),
    )
}

fn digest_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
    let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            digest_tree(root, &p, out);
        } else {
            out.insert(p.strip_prefix(root).unwrap().display().to_string(), sha256_file(&p).unwrap());
        }
    }
}

fn pipeline(dir: &Path) -> Result<BTreeMap<String, String>, String> {
    let synth = SynthOptions { problems: 24, seed: 13, ..SynthOptions::default() };
    commands::cmd_synth(dir, &synth).map_err(|e| e.to_string())?;
    let config = RunConfig::load_with(&dir.join("config.toml"), &Overrides { workers: Some(4), ..Overrides::default() })
        .map_err(|e| e.to_string())?;
    let steps = [
        commands::cmd_select(&config, &SelectOptions { top_fraction: None }),
        commands::cmd_search(&config, &SearchOptions { ids: None, tau: None, rollouts: None }),
        commands::cmd_build_data(&config),
        commands::cmd_rerank(&config, &RerankOptions { ids: None, ns: None }),
    ];
    for s in steps {
        let outcome = s.map_err(|e| e.to_string())?;
        if !outcome.ok() {
            return Err(format!("{} item failures", outcome.failures.len()));
        }
    }
    let mut digests = BTreeMap::new();
    let out = dir.join("out");
    digest_tree(&out, &out, &mut digests);
    Ok(digests)
}

fn c9_determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = match pipeline(a.path()) {
        Ok(d) => d,
        Err(e) => return Fail(format!("first run: {e}")),
    };
    let second = match pipeline(b.path()) {
        Ok(d) => d,
        Err(e) => return Fail(format!("second run: {e}")),
    };
    let has = |prefix: &str| first.keys().any(|k| k.starts_with(prefix));
    let covered = has("search/traces/") && has("dataset/") && has("rerank/") && has("build/");
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    check(
        covered && differing.is_empty() && first.len() == second.len(),
        format!("{} output files, {} differ", first.len(), differing.len()),
    )
}

fn c10_live() -> Verdict {
    let Ok(url) = std::env::var("STEPSEARCH_LIVE_ENDPOINT") else {
        return Skipped("STEPSEARCH_LIVE_ENDPOINT not set".into());
    };
    let model = std::env::var("STEPSEARCH_LIVE_MODEL").unwrap_or_else(|_| "default".into());
    let endpoint = EndpointConfig { api_key_env: std::env::var("STEPSEARCH_LIVE_KEY_ENV").ok(), ..EndpointConfig::new(url, model) };
    let client = || ChatClient::new(endpoint.clone()).map_err(|e| e.to_string());
    let run = || -> Result<String, String> {
        let actors = vec![RemoteActor::new("live-actor", client()?)];
        let prm = RemoteReward::new("live-prm", client()?);
        let p = demo_problems(1, 3).remove(0);
        let config = SearchConfig { k_actors: 1, rollouts: 1, tau: 0.0, ..SearchConfig::default() };
        let r = search(&p, &actors, &prm, &config).map_err(|e| format!("search: {e}"))?;
        let bon = BonConfig { n: 2, strategy: Strategy::PrmAccumulated, ..BonConfig::default() };
        evaluate_suite(std::slice::from_ref(&p), &actors[0], &prm, &[bon]).map_err(|e| format!("rerank: {e}"))?;
        Ok(format!("search scored {} candidates, rerank completed", r.tree_stats.scored))
    };
    match run() {
        Ok(d) => Pass(d),
        Err(e) => Fail(e),
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("visit and value bookkeeping", c1_backprop, Duration::from_secs(60)),
        ("selection matches brute-force UCB", c2_ucb, Duration::from_secs(10)),
        ("threshold filter soundness", c3_filter, Duration::MAX),
        ("search success-rate ablation", c4_ablation, Duration::from_secs(300)),
        ("best-of-n scaling", c5_bon, Duration::from_secs(120)),
        ("rollout ablation", c6_rollouts, Duration::MAX),
        ("stratified quotas", c7_quotas, Duration::from_secs(5)),
        ("data gates", c8_gates, Duration::MAX),
        ("pipeline determinism", c9_determinism, Duration::MAX),
        ("live endpoint smoke", c10_live, Duration::MAX),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let verdict = run();
        let elapsed = start.elapsed();
        let (tag, detail) = match within(verdict, elapsed, limit) {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skipped(d) => ("SKIPPED", d),
        };
        println!("criterion {:>2} {tag:<7} {name} [{elapsed:.2?}]: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
