use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stepsearch::commands::{
    self, build_data, rerank::RerankOptions, search::SearchOptions, select::SelectOptions, synth::SynthOptions,
    CommandError, Outcome,
};
use stepsearch::config::{Overrides, RunConfig};

/// Typed reasoning-trajectory search, training-data construction and
/// Best-of-N reranking.
#[derive(Debug, Parser)]
#[command(name = "stepsearch", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Run seed; overrides STEPSEARCH_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; overrides STEPSEARCH_OUT and the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel problems (0 = one per core); overrides STEPSEARCH_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CommandError> {
        let overrides = Overrides { seed: self.seed, out: self.out.clone(), workers: self.workers };
        Ok(RunConfig::load_with(&self.config, &overrides)?)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank problems by reward variance and compute stratified quotas.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        top_fraction: Option<f64>,
    },
    /// Run tree search per problem and write results and node traces.
    Search {
        #[command(flatten)]
        common: Common,
        /// File with one problem id per line.
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Build, quality-filter and export training records.
    BuildData {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate Best-of-N strategies against gold answers.
    Rerank {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ids: Option<PathBuf>,
        /// Comma-separated candidate counts, e.g. 1,2,4,8.
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
    },
    /// Check visit and value bookkeeping of search traces.
    VerifyTraces {
        /// Directory of trace files; defaults to the configured search output.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Pruning threshold to check; defaults to the configured one.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Write a synthetic offline workspace with scripted models.
    Synth {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 12)]
        problems: usize,
        #[arg(long, default_value_t = 3)]
        actors: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn run(command: Command) -> Result<Outcome, CommandError> {
    match command {
        Command::Select { common, top_fraction } => commands::cmd_select(&common.load()?, &SelectOptions { top_fraction }),
        Command::Search { common, ids, tau, rollouts } => {
            commands::cmd_search(&common.load()?, &SearchOptions { ids, tau, rollouts })
        }
        Command::BuildData { common } => build_data::cmd_build_data(&common.load()?),
        Command::Rerank { common, ids, ns } => commands::cmd_rerank(&common.load()?, &RerankOptions { ids, ns }),
        Command::VerifyTraces { dir, config, tau } => {
            let loaded = match &config {
                Some(c) => Some(RunConfig::load_with(c, &Overrides::default())?),
                None => None,
            };
            let dir = match (dir, &loaded) {
                (Some(d), _) => d,
                (None, Some(c)) => c.out(commands::TRACES_DIR),
                (None, None) => {
                    return Err(stepsearch::config::ConfigError::MissingPath {
                        what: "trace directory",
                        path: PathBuf::from("<--dir or --config>"),
                    }
                    .into())
                }
            };
            let tau = tau.or(loaded.map(|c| c.search.tau));
            commands::cmd_verify_traces(&dir, tau)
        }
        Command::Synth { dir, problems, actors, seed } => {
            commands::cmd_synth(&dir, &SynthOptions { problems, actors, seed, ..SynthOptions::default() })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.failures {
                eprintln!("failed: {}: {}", f.item, f.error);
            }
            if outcome.ok() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} item(s) failed", outcome.failures.len());
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
