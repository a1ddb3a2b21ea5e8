//! Run configuration: one TOML file, environment overrides, flag overrides.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Precedence is flags, then `STEPSEARCH_*` variables, then the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stepsearch_core::datagen::QcConfig;
use stepsearch_core::inference::{Aggregate, BonConfig, Strategy};
use stepsearch_core::mcts::SearchConfig;
use stepsearch_core::mock::{ScriptedActor, ScriptedReward};
use stepsearch_core::{ActorModel, RewardModel};
use thiserror::Error;

use crate::io::{read_to_string, IoError};
use crate::remote::{ChatClient, EndpointConfig, RemoteActor, RemoteReward};

pub const ENV_SEED: &str = "STEPSEARCH_SEED";
pub const ENV_OUT: &str = "STEPSEARCH_OUT";
pub const ENV_WORKERS: &str = "STEPSEARCH_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("missing input {what}: {path}")]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("{0}")]
    Io(#[from] IoError),
    #[error("a seed is required for this command (config `seed`, {ENV_SEED} or --seed)")]
    SeedRequired,
    #[error("environment variable {name}={value:?}: {message}")]
    Env { name: &'static str, value: String, message: String },
    #[error("model {id}: {message}")]
    Model { id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Problems, one JSON object per line.
    pub corpus: Option<PathBuf>,
    /// Prior rollout step scores: `{problem_id, solutions: [[score, ...], ...]}` per line.
    pub rollout_scores: Option<PathBuf>,
    /// Optional model accuracy statistics for the difficulty filter.
    pub problem_stats: Option<PathBuf>,
    /// Optional reference solutions: `{problem_id, steps: [text, ...]}` per line.
    pub references: Option<PathBuf>,
    /// Optional second-pass labels: `{record_id, labels: [...]}` per line.
    pub duplicate_annotations: Option<PathBuf>,
    /// Root of every output the commands write.
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// A scripted mock loaded from a JSON script file.
    Scripted { script: PathBuf },
    Remote { id: String, endpoint: EndpointConfig },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Models {
    /// Search actor pool.
    pub actors: Vec<ModelSpec>,
    pub prm: Option<ModelSpec>,
    /// Writes whole solutions for reranking and dialogue records; defaults
    /// to the first actor.
    pub solver: Option<ModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BonSection {
    pub ns: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub aggregate: Aggregate,
    pub temperature_low: f64,
    pub temperature_high: f64,
}

impl Default for BonSection {
    fn default() -> Self {
        let d = BonConfig::default();
        BonSection {
            ns: vec![1, 2, 4, 8],
            strategies: Strategy::ALL.to_vec(),
            aggregate: d.aggregate,
            temperature_low: d.temperature_low,
            temperature_high: d.temperature_high,
        }
    }
}

impl BonSection {
    /// One config per (n, strategy), n-major.
    pub fn configs(&self, seed: u64) -> Vec<BonConfig> {
        let mut out = Vec::new();
        for &n in &self.ns {
            for &strategy in &self.strategies {
                out.push(BonConfig {
                    n,
                    strategy,
                    temperature_low: self.temperature_low,
                    temperature_high: self.temperature_high,
                    seed,
                    aggregate: self.aggregate,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    pub top_fraction: f64,
    pub total_quota: u64,
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection { top_fraction: 0.5, total_quota: 160_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenSection {
    pub confidence_floor: f64,
    /// Error injections per reference solution.
    pub injections_per_reference: usize,
    /// Build critique-format records from solver answers.
    pub dialogue: bool,
    pub qc: QcConfig,
}

impl Default for DatagenSection {
    fn default() -> Self {
        DatagenSection { confidence_floor: 0.6, injections_per_reference: 1, dialogue: true, qc: QcConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Parallel problems; 0 means one per available core.
    pub workers: usize,
    pub paths: Paths,
    pub models: Models,
    pub search: SearchConfig,
    pub bon: BonSection,
    pub selection: SelectionSection,
    pub datagen: DatagenSection,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn env_parse<T: std::str::FromStr>(name: &'static str, get: &dyn Fn(&str) -> Option<String>) -> Result<Option<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    match get(name) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e: T::Err| ConfigError::Env { name, value: v.clone(), message: e.to_string() }),
    }
}

impl RunConfig {
    /// Parses TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path, origin: &Path) -> Result<Self, ConfigError> {
        let mut c: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Invalid { path: origin.to_path_buf(), message: e.to_string() })?;
        c.resolve_paths(base);
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base, path)
    }

    /// File, then process environment, then flags.
    pub fn load_with(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut c = Self::load(path)?;
        c.apply_env(&|k| std::env::var(k).ok())?;
        c.apply_overrides(overrides);
        Ok(c)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.corpus,
            &mut paths.rollout_scores,
            &mut paths.problem_stats,
            &mut paths.references,
            &mut paths.duplicate_annotations,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut paths.out);
        let models = &mut self.models;
        for spec in models.actors.iter_mut().chain(models.prm.iter_mut()).chain(models.solver.iter_mut()) {
            if let ModelSpec::Scripted { script } = spec {
                fix(script);
            }
        }
    }

    pub fn apply_env(&mut self, get: &dyn Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(s) = env_parse::<u64>(ENV_SEED, get)? {
            self.seed = Some(s);
        }
        if let Some(o) = get(ENV_OUT) {
            self.paths.out = PathBuf::from(o);
        }
        if let Some(w) = env_parse::<usize>(ENV_WORKERS, get)? {
            self.workers = w;
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(out) = &o.out {
            self.paths.out = out.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::SeedRequired)
    }

    /// Search settings with the run seed applied.
    pub fn search_config(&self) -> SearchConfig {
        SearchConfig { seed: self.seed_or_default(), ..self.search.clone() }
    }

    pub fn qc_config(&self) -> QcConfig {
        QcConfig { seed: self.seed_or_default(), ..self.datagen.qc.clone() }
    }

    pub fn bon_configs(&self) -> Vec<BonConfig> {
        self.bon.configs(self.seed_or_default())
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.paths.out.join(rel)
    }

    /// The configured input, which must exist.
    pub fn input(&self, what: &'static str, path: &Option<PathBuf>) -> Result<PathBuf, ConfigError> {
        match path {
            Some(p) if p.exists() => Ok(p.clone()),
            Some(p) => Err(ConfigError::MissingPath { what, path: p.clone() }),
            None => Err(ConfigError::MissingPath { what, path: PathBuf::from(format!("<paths.{what} not set>")) }),
        }
    }

    /// The configured input if set; an error if set but absent.
    pub fn optional_input(&self, what: &'static str, path: &Option<PathBuf>) -> Result<Option<PathBuf>, ConfigError> {
        match path {
            None => Ok(None),
            Some(_) => self.input(what, path).map(Some),
        }
    }

    pub fn actors(&self) -> Result<Vec<Box<dyn ActorModel>>, ConfigError> {
        if self.models.actors.is_empty() {
            return Err(ConfigError::Invalid { path: PathBuf::from("models.actors"), message: "no actors configured".into() });
        }
        self.models.actors.iter().map(build_actor).collect()
    }

    pub fn solver(&self) -> Result<Box<dyn ActorModel>, ConfigError> {
        match &self.models.solver {
            Some(spec) => build_actor(spec),
            None => self.actors()?.into_iter().next().ok_or_else(|| ConfigError::Invalid {
                path: PathBuf::from("models.actors"),
                message: "no actors configured".into(),
            }),
        }
    }

    pub fn prm(&self) -> Result<Box<dyn RewardModel>, ConfigError> {
        match &self.models.prm {
            Some(spec) => build_reward(spec),
            None => Err(ConfigError::Invalid { path: PathBuf::from("models.prm"), message: "no reward model configured".into() }),
        }
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool, ConfigError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| ConfigError::Invalid { path: PathBuf::from("workers"), message: e.to_string() })
    }
}

fn load_script<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    if !path.exists() {
        return Err(ConfigError::MissingPath { what: "model script", path: path.to_path_buf() });
    }
    Ok(crate::io::read_json(path)?)
}

fn client(id: &str, endpoint: &EndpointConfig) -> Result<ChatClient, ConfigError> {
    ChatClient::new(endpoint.clone()).map_err(|e| ConfigError::Model { id: id.to_string(), message: e.to_string() })
}

pub fn build_actor(spec: &ModelSpec) -> Result<Box<dyn ActorModel>, ConfigError> {
    Ok(match spec {
        ModelSpec::Scripted { script } => Box::new(load_script::<ScriptedActor>(script)?),
        ModelSpec::Remote { id, endpoint } => Box::new(RemoteActor::new(id.clone(), client(id, endpoint)?)),
    })
}

pub fn build_reward(spec: &ModelSpec) -> Result<Box<dyn RewardModel>, ConfigError> {
    Ok(match spec {
        ModelSpec::Scripted { script } => Box::new(load_script::<ScriptedReward>(script)?),
        ModelSpec::Remote { id, endpoint } => Box::new(RemoteReward::new(id.clone(), client(id, endpoint)?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 3
workers = 2

[paths]
corpus = "data/corpus.jsonl"
out = "out"

[[models.actors]]
kind = "scripted"
script = "scripts/a.json"

[models.prm]
kind = "remote"
id = "prm"
endpoint = { url = "http://localhost:1/v1/chat/completions", model = "m", api_key_env = "PRM_KEY" }

[search]
tau = 0.4
rollouts = 8

[bon]
ns = [1, 8]
strategies = ["random", "prm_accumulated"]
"#;

    #[test]
    fn parses_and_resolves_relative_paths() {
        let c = RunConfig::from_toml(SAMPLE, Path::new("/cfg"), Path::new("/cfg/run.toml")).unwrap();
        assert_eq!(c.paths.corpus.as_deref(), Some(Path::new("/cfg/data/corpus.jsonl")));
        assert_eq!(c.paths.out, Path::new("/cfg/out"));
        assert_eq!(c.models.actors[0], ModelSpec::Scripted { script: "/cfg/scripts/a.json".into() });
        assert_eq!(c.search.tau, 0.4);
        assert_eq!(c.search.k_actors, SearchConfig::default().k_actors);
        assert_eq!(c.bon_configs().len(), 4);
        assert_eq!(c.selection.total_quota, 160_000);
    }

    #[test]
    fn precedence_flags_over_env_over_file() {
        let mut c = RunConfig::from_toml(SAMPLE, Path::new("/cfg"), Path::new("/cfg/run.toml")).unwrap();
        c.apply_env(&|k| match k {
            ENV_SEED => Some("11".into()),
            ENV_WORKERS => Some("5".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!((c.seed, c.workers), (Some(11), 5));
        c.apply_overrides(&Overrides { seed: Some(12), ..Overrides::default() });
        assert_eq!((c.seed, c.workers), (Some(12), 5));
        assert!(c.apply_env(&|k| (k == ENV_SEED).then(|| "x".into())).is_err());
    }

    #[test]
    fn unknown_keys_and_missing_seed() {
        assert!(RunConfig::from_toml("sead = 1", Path::new("."), Path::new("x.toml")).is_err());
        let c = RunConfig::from_toml("", Path::new("."), Path::new("x.toml")).unwrap();
        assert!(matches!(c.require_seed(), Err(ConfigError::SeedRequired)));
        let err = c.input("corpus", &Some(PathBuf::from("/nope/corpus.jsonl"))).unwrap_err();
        assert!(err.to_string().contains("/nope/corpus.jsonl"));
    }
}
