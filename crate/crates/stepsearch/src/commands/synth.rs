use std::path::Path;

use stepsearch_core::hash::{unit_interval, StableHasher};
use stepsearch_core::mock::ScriptedActor;
use stepsearch_core::synthetic::{bon_suite, planted_suite};
use stepsearch_core::types::quantize_score;

use super::select::RolloutScores;
use super::{CommandError, Outcome};
use crate::io::{write_atomic, write_json, write_jsonl};

pub const CONFIG_FILE: &str = "config.toml";

/// Options for a synthetic demo workspace.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub problems: usize,
    pub actors: usize,
    pub seed: u64,
    /// Chance that an actor emits the planted step.
    pub p_step: f64,
    /// Chance that a whole solution is correct.
    pub p_solution: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { problems: 12, actors: 3, seed: 7, p_step: 0.7, p_solution: 0.5 }
    }
}

fn rollout_scores(problem_id: &str, seed: u64) -> RolloutScores {
    let solutions = (0..4u64)
        .map(|s| {
            (0..5u64)
                .map(|k| {
                    let h = StableHasher::new().str("rollout").u64(seed).str(problem_id).u64(s).u64(k).finish();
                    quantize_score(unit_interval(h))
                })
                .collect()
        })
        .collect();
    RolloutScores { problem_id: problem_id.to_string(), solutions }
}

fn config_text(actors: usize, seed: u64) -> String {
    let mut t = format!(
        "# Synthetic demo run: scripted actors and an oracle reward model.\n\
         seed = {seed}\n\
         workers = 0\n\n\
         [paths]\n\
         corpus = \"corpus.jsonl\"\n\
         rollout_scores = \"rollout_scores.jsonl\"\n\
         out = \"out\"\n\n"
    );
    for j in 0..actors {
        t.push_str(&format!("[[models.actors]]\nkind = \"scripted\"\nscript = \"models/actor-{j}.json\"\n\n"));
    }
    t.push_str(
        "[models.prm]\n\
         kind = \"scripted\"\n\
         script = \"models/oracle.json\"\n\n\
         [search]\n\
         schedule = \"linear\"\n\
         rollouts = 4\n\
         tau = 0.5\n\n\
         [bon]\n\
         ns = [1, 2, 4, 8]\n\
         strategies = [\"random\", \"self_consistency\", \"prm_accumulated\"]\n\n\
         [selection]\n\
         top_fraction = 0.5\n\
         total_quota = 160000\n\n\
         [datagen]\n\
         confidence_floor = 0.6\n\
         injections_per_reference = 2\n",
    );
    t
}

/// Writes a self-contained workspace: corpus, prior rollout scores,
/// scripted model files and a config that runs every command offline.
pub fn cmd_synth(dir: &Path, options: &SynthOptions) -> Result<Outcome, CommandError> {
    let seed = options.seed;
    let mut suite = planted_suite(options.problems, options.actors.max(1), options.p_step, seed);
    let bon = bon_suite(options.problems, options.p_solution, seed);
    let mut problems = suite.problems.clone();
    for (i, p) in problems.iter_mut().enumerate() {
        p.concept_ids = vec![format!("concept-{}", i % 3)];
    }
    // the first actor also writes whole solutions for reranking
    let solver: ScriptedActor = bon.actor;
    suite.actors[0].absorb(solver);
    suite.oracle.absorb(bon.oracle);

    write_jsonl(&dir.join("corpus.jsonl"), &problems)?;
    write_jsonl(&dir.join("rollout_scores.jsonl"), problems.iter().map(|p| rollout_scores(&p.id, seed)))?;
    for (j, a) in suite.actors.iter().enumerate() {
        write_json(&dir.join(format!("models/actor-{j}.json")), a)?;
    }
    write_json(&dir.join("models/oracle.json"), &suite.oracle)?;
    write_atomic(&dir.join(CONFIG_FILE), config_text(suite.actors.len(), seed).as_bytes())?;
    Ok(Outcome {
        summary: vec![format!(
            "wrote {} problems and {} scripted actors to {}",
            problems.len(),
            suite.actors.len(),
            dir.display()
        )],
        failures: Vec::new(),
    })
}
