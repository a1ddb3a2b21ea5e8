//! Pipeline runner for `stepsearch-core`: remote chat-protocol model
//! adapters, TOML run configuration, atomic file output, dataset export
//! and the command implementations behind the `stepsearch` binary.

pub mod commands;
pub mod config;
pub mod export;
pub mod io;
pub mod remote;

pub use config::{Overrides, RunConfig};
pub use remote::{remote_generate, ChatClient, EndpointConfig, RemoteActor, RemoteReward};
