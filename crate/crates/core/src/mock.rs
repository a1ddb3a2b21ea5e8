//! Deterministic scripted actors and reward models.
//!
//! A script maps `(problem_id, action, prefix_hash)` to an outcome table.
//! For actors the prefix is the steps before the generated one; for reward
//! models it is the prefix followed by the step under review. Keys without
//! a script fall back to a seeded default. All draws are pure functions of
//! the seed and the call's inputs, so mocks are stateless and can be shared
//! freely across threads.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hash::{hex16, prefix_hash, unit_interval, StableHasher};
use crate::model::{split_sentences, ActorModel, ModelError, RewardModel};
use crate::types::{ActionKind, Problem, ReasoningStep, StepCritique, StepLabel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pick {
    /// Weighted draw seeded by the call.
    #[default]
    Draw,
    /// `entries[sample % len]`, ignoring weights.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighted<T> {
    pub weight: f64,
    pub outcome: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable<T> {
    #[serde(default)]
    pub pick: Pick,
    pub entries: Vec<Weighted<T>>,
}

impl<T> OutcomeTable<T> {
    pub fn single(outcome: T) -> Self {
        Self::weighted([(1.0, outcome)])
    }

    pub fn weighted(entries: impl IntoIterator<Item = (f64, T)>) -> Self {
        OutcomeTable {
            pick: Pick::Draw,
            entries: entries
                .into_iter()
                .map(|(weight, outcome)| Weighted { weight, outcome })
                .collect(),
        }
    }

    pub fn cycle(entries: impl IntoIterator<Item = T>) -> Self {
        OutcomeTable {
            pick: Pick::Cycle,
            entries: entries
                .into_iter()
                .map(|outcome| Weighted { weight: 1.0, outcome })
                .collect(),
        }
    }

    /// Picks an entry; `h` seeds weighted draws, `sample` indexes cycles.
    pub fn choose(&self, h: u64, sample: u32) -> Option<&T> {
        if self.entries.is_empty() {
            return None;
        }
        match self.pick {
            Pick::Cycle => Some(&self.entries[sample as usize % self.entries.len()].outcome),
            Pick::Draw => {
                let total: f64 = self.entries.iter().map(|e| e.weight.max(0.0)).sum();
                if total <= 0.0 {
                    return Some(&self.entries[0].outcome);
                }
                let target = unit_interval(h) * total;
                let mut acc = 0.0;
                for e in &self.entries {
                    acc += e.weight.max(0.0);
                    if target < acc {
                        return Some(&e.outcome);
                    }
                }
                self.entries.last().map(|e| &e.outcome)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorOutcome {
    Emit(String),
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScriptKey {
    pub problem_id: String,
    pub action: ActionKind,
    pub prefix_hash: u64,
}

impl ScriptKey {
    pub fn new(problem_id: impl Into<String>, action: ActionKind, prefix: &[ReasoningStep]) -> Self {
        ScriptKey {
            problem_id: problem_id.into(),
            action,
            prefix_hash: prefix_hash(prefix),
        }
    }

    /// Key under which a reward model looks up `step` after `prefix`.
    pub fn for_critique(problem_id: &str, prefix: &[ReasoningStep], step: &ReasoningStep) -> Self {
        ScriptKey {
            problem_id: problem_id.to_string(),
            action: step.action,
            prefix_hash: crate::hash::steps_hash(prefix.iter().chain(core::iter::once(step))),
        }
    }

    fn hash_into(&self, h: StableHasher) -> StableHasher {
        h.str(&self.problem_id).str(self.action.as_str()).u64(self.prefix_hash)
    }
}

/// What an actor does for unscripted keys.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultActor {
    /// Emit seed-dependent filler text that differs across actors and keys.
    #[default]
    Filler,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ActorScriptFile", into = "ActorScriptFile")]
pub struct ScriptedActor {
    id: String,
    seed: u64,
    steps: BTreeMap<ScriptKey, OutcomeTable<ActorOutcome>>,
    solutions: BTreeMap<String, OutcomeTable<ActorOutcome>>,
    rewrites: BTreeMap<String, OutcomeTable<ActorOutcome>>,
    default: DefaultActor,
}

impl ScriptedActor {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        ScriptedActor {
            id: id.into(),
            seed,
            steps: BTreeMap::new(),
            solutions: BTreeMap::new(),
            rewrites: BTreeMap::new(),
            default: DefaultActor::Filler,
        }
    }

    pub fn with_default(mut self, default: DefaultActor) -> Self {
        self.default = default;
        self
    }

    pub fn script_step(
        &mut self,
        problem_id: &str,
        prefix: &[ReasoningStep],
        action: ActionKind,
        table: OutcomeTable<ActorOutcome>,
    ) -> &mut Self {
        self.steps.insert(ScriptKey::new(problem_id, action, prefix), table);
        self
    }

    pub fn script_solution(&mut self, problem_id: &str, table: OutcomeTable<ActorOutcome>) -> &mut Self {
        self.solutions.insert(problem_id.to_string(), table);
        self
    }

    /// Scripts the rewrite of any step whose text equals `original`.
    pub fn script_rewrite(&mut self, original: &str, table: OutcomeTable<ActorOutcome>) -> &mut Self {
        self.rewrites.insert(original.to_string(), table);
        self
    }

    pub fn script_len(&self) -> usize {
        self.steps.len() + self.solutions.len() + self.rewrites.len()
    }

    /// Adds every script entry of `other`; entries already present win.
    pub fn absorb(&mut self, other: ScriptedActor) {
        for (k, t) in other.steps {
            self.steps.entry(k).or_insert(t);
        }
        for (k, t) in other.solutions {
            self.solutions.entry(k).or_insert(t);
        }
        for (k, t) in other.rewrites {
            self.rewrites.entry(k).or_insert(t);
        }
    }

    fn base_hash(&self) -> StableHasher {
        StableHasher::new().str("actor").u64(self.seed).str(&self.id)
    }

    fn resolve(&self, outcome: &ActorOutcome) -> Result<String, ModelError> {
        match outcome {
            ActorOutcome::Emit(text) => Ok(text.clone()),
            ActorOutcome::Fail(why) => Err(ModelError::Failed(why.clone())),
        }
    }

    fn default_or_fail(&self, filler: impl FnOnce() -> String) -> Result<String, ModelError> {
        match self.default {
            DefaultActor::Filler => Ok(filler()),
            DefaultActor::Fail => Err(ModelError::Failed(format!("{}: no script for this input", self.id))),
        }
    }
}

impl ActorModel for ScriptedActor {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(
        &self,
        problem: &Problem,
        prefix: &[ReasoningStep],
        action: ActionKind,
        temperature: f64,
    ) -> Result<ReasoningStep, ModelError> {
        let key = ScriptKey::new(problem.id.as_str(), action, prefix);
        let h = key.hash_into(self.base_hash().str("generate")).u64(temperature.to_bits()).finish();
        let text = match self.steps.get(&key).and_then(|t| t.choose(h, 0)) {
            Some(outcome) => self.resolve(outcome)?,
            None => self.default_or_fail(|| format!("{} by {} #{}", action, self.id, hex16(h)))?,
        };
        ReasoningStep::new(action, text, self.id.clone()).map_err(|e| ModelError::Protocol(e.to_string()))
    }

    fn solve(&self, problem: &Problem, temperature: f64, sample: u32) -> Result<String, ModelError> {
        let h = self
            .base_hash()
            .str("solve")
            .str(&problem.id)
            .u64(u64::from(sample))
            .finish();
        let _ = temperature;
        match self.solutions.get(&problem.id).and_then(|t| t.choose(h, sample)) {
            Some(outcome) => self.resolve(outcome),
            None => self.default_or_fail(|| {
                format!(
                    "<caption>{id} looks at {p}</caption><thinking>guess {g}</thinking><self_reflection>unsure</self_reflection><answer>{a}</answer>",
                    id = self.id,
                    p = problem.id,
                    g = hex16(h),
                    a = h % 1000
                )
            }),
        }
    }

    fn rewrite(
        &self,
        _problem: &Problem,
        steps: &[String],
        index: usize,
        error: StepLabel,
    ) -> Result<String, ModelError> {
        let original = steps
            .get(index)
            .ok_or_else(|| ModelError::Failed(format!("step index {index} out of range")))?;
        let h = self
            .base_hash()
            .str("rewrite")
            .str(original)
            .str(error.as_str())
            .finish();
        match self.rewrites.get(original).and_then(|t| t.choose(h, 0)) {
            Some(outcome) => self.resolve(outcome),
            None => self.default_or_fail(|| format!("{original} [{error} #{}]", hex16(h))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ActorScriptFile {
    id: String,
    seed: u64,
    #[serde(default)]
    steps: Vec<StepScript<ActorOutcome>>,
    #[serde(default)]
    solutions: Vec<KeyedScript<ActorOutcome>>,
    #[serde(default)]
    rewrites: Vec<KeyedScript<ActorOutcome>>,
    #[serde(default)]
    default: DefaultActor,
}

#[derive(Serialize, Deserialize)]
struct StepScript<T> {
    problem_id: String,
    action: ActionKind,
    prefix_hash: String,
    table: OutcomeTable<T>,
}

#[derive(Serialize, Deserialize)]
struct KeyedScript<T> {
    key: String,
    table: OutcomeTable<T>,
}

fn to_step_scripts<T: Clone>(map: &BTreeMap<ScriptKey, OutcomeTable<T>>) -> Vec<StepScript<T>> {
    map.iter()
        .map(|(k, t)| StepScript {
            problem_id: k.problem_id.clone(),
            action: k.action,
            prefix_hash: hex16(k.prefix_hash),
            table: t.clone(),
        })
        .collect()
}

fn from_step_scripts<T>(scripts: Vec<StepScript<T>>) -> BTreeMap<ScriptKey, OutcomeTable<T>> {
    scripts
        .into_iter()
        .filter_map(|s| {
            let hash = u64::from_str_radix(&s.prefix_hash, 16).ok()?;
            Some((
                ScriptKey {
                    problem_id: s.problem_id,
                    action: s.action,
                    prefix_hash: hash,
                },
                s.table,
            ))
        })
        .collect()
}

fn to_keyed<T: Clone>(map: &BTreeMap<String, OutcomeTable<T>>) -> Vec<KeyedScript<T>> {
    map.iter()
        .map(|(k, t)| KeyedScript { key: k.clone(), table: t.clone() })
        .collect()
}

fn from_keyed<T>(v: Vec<KeyedScript<T>>) -> BTreeMap<String, OutcomeTable<T>> {
    v.into_iter().map(|s| (s.key, s.table)).collect()
}

impl From<ActorScriptFile> for ScriptedActor {
    fn from(f: ActorScriptFile) -> Self {
        ScriptedActor {
            id: f.id,
            seed: f.seed,
            steps: from_step_scripts(f.steps),
            solutions: from_keyed(f.solutions),
            rewrites: from_keyed(f.rewrites),
            default: f.default,
        }
    }
}

impl From<ScriptedActor> for ActorScriptFile {
    fn from(a: ScriptedActor) -> Self {
        ActorScriptFile {
            steps: to_step_scripts(&a.steps),
            solutions: to_keyed(&a.solutions),
            rewrites: to_keyed(&a.rewrites),
            id: a.id,
            seed: a.seed,
            default: a.default,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CritiqueOutcome {
    Critique {
        label: StepLabel,
        #[serde(default)]
        explanation: String,
        score: f64,
    },
    Fail(String),
}

impl CritiqueOutcome {
    pub fn correct(score: f64) -> Self {
        CritiqueOutcome::Critique {
            label: StepLabel::CorrectStep,
            explanation: String::new(),
            score,
        }
    }

    pub fn error(label: StepLabel, explanation: impl Into<String>, score: f64) -> Self {
        CritiqueOutcome::Critique {
            label,
            explanation: explanation.into(),
            score,
        }
    }
}

/// What a reward model does for unscripted keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultCritique {
    Constant {
        label: StepLabel,
        score: f64,
    },
    /// Seeded uniform score in `[low, high]`; labelled correct at or above
    /// 0.5, otherwise a logical reasoning error.
    Uniform {
        low: f64,
        high: f64,
    },
    Fail,
}

impl Default for DefaultCritique {
    fn default() -> Self {
        DefaultCritique::Uniform { low: 0.0, high: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RewardScriptFile", into = "RewardScriptFile")]
pub struct ScriptedReward {
    id: String,
    seed: u64,
    steps: BTreeMap<ScriptKey, OutcomeTable<CritiqueOutcome>>,
    segments: BTreeMap<String, Vec<String>>,
    default: DefaultCritique,
}

impl ScriptedReward {
    pub fn new(id: impl Into<String>, seed: u64, default: DefaultCritique) -> Self {
        ScriptedReward {
            id: id.into(),
            seed,
            steps: BTreeMap::new(),
            segments: BTreeMap::new(),
            default,
        }
    }

    /// Constant-score model with no script.
    pub fn constant(id: impl Into<String>, score: f64) -> Self {
        Self::new(id, 0, DefaultCritique::Constant { label: StepLabel::CorrectStep, score })
    }

    /// Scripts the critique of the last element of `path` given the rest.
    pub fn script(&mut self, problem_id: &str, path: &[ReasoningStep], table: OutcomeTable<CritiqueOutcome>) -> &mut Self {
        if let Some((step, prefix)) = path.split_last() {
            self.steps.insert(ScriptKey::for_critique(problem_id, prefix, step), table);
        }
        self
    }

    pub fn script_segments(&mut self, text: &str, steps: Vec<String>) -> &mut Self {
        self.segments.insert(text.to_string(), steps);
        self
    }

    pub fn script_len(&self) -> usize {
        self.steps.len()
    }

    /// Adds every script entry of `other`; entries already present win.
    pub fn absorb(&mut self, other: ScriptedReward) {
        for (k, t) in other.steps {
            self.steps.entry(k).or_insert(t);
        }
        for (k, t) in other.segments {
            self.segments.entry(k).or_insert(t);
        }
    }
}

impl RewardModel for ScriptedReward {
    fn id(&self) -> &str {
        &self.id
    }

    fn critique_sample(
        &self,
        problem: &Problem,
        prefix: &[ReasoningStep],
        step: &ReasoningStep,
        sample: u32,
    ) -> Result<StepCritique, ModelError> {
        let key = ScriptKey::for_critique(&problem.id, prefix, step);
        let h = key
            .hash_into(StableHasher::new().str("critique").u64(self.seed).str(&self.id))
            .u64(u64::from(sample))
            .finish();
        let (label, explanation, score) = match self.steps.get(&key).and_then(|t| t.choose(h, sample)) {
            Some(CritiqueOutcome::Critique { label, explanation, score }) => (*label, explanation.clone(), *score),
            Some(CritiqueOutcome::Fail(why)) => return Err(ModelError::Failed(why.clone())),
            None => match &self.default {
                DefaultCritique::Constant { label, score } => (*label, String::new(), *score),
                DefaultCritique::Uniform { low, high } => {
                    let score = low + (high - low) * unit_interval(h);
                    let label = if score >= 0.5 {
                        StepLabel::CorrectStep
                    } else {
                        StepLabel::LogicalReasoningError
                    };
                    (label, String::new(), score)
                }
                DefaultCritique::Fail => {
                    return Err(ModelError::Failed(format!("{}: no script for this step", self.id)))
                }
            },
        };
        if !(0.0..=1.0).contains(&score) {
            return Err(ModelError::Protocol(format!("scripted score {score} outside [0, 1]")));
        }
        Ok(StepCritique {
            content: step.content.clone(),
            label,
            explanation,
            score,
        })
    }

    fn segment(&self, _problem: &Problem, text: &str) -> Result<Vec<String>, ModelError> {
        Ok(match self.segments.get(text) {
            Some(steps) => steps.clone(),
            None => split_sentences(text),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RewardScriptFile {
    id: String,
    seed: u64,
    #[serde(default)]
    steps: Vec<StepScript<CritiqueOutcome>>,
    #[serde(default)]
    segments: Vec<SegmentScript>,
    #[serde(default)]
    default: DefaultCritique,
}

#[derive(Serialize, Deserialize)]
struct SegmentScript {
    text: String,
    steps: Vec<String>,
}

impl From<RewardScriptFile> for ScriptedReward {
    fn from(f: RewardScriptFile) -> Self {
        ScriptedReward {
            id: f.id,
            seed: f.seed,
            steps: from_step_scripts(f.steps),
            segments: f.segments.into_iter().map(|s| (s.text, s.steps)).collect(),
            default: f.default,
        }
    }
}

impl From<ScriptedReward> for RewardScriptFile {
    fn from(r: ScriptedReward) -> Self {
        RewardScriptFile {
            steps: to_step_scripts(&r.steps),
            segments: r
                .segments
                .into_iter()
                .map(|(text, steps)| SegmentScript { text, steps })
                .collect(),
            id: r.id,
            seed: r.seed,
            default: r.default,
        }
    }
}
