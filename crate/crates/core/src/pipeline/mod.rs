//! End-to-end data flow: providers, filters, hard-set construction,
//! training, and run persistence.

pub mod config;
pub mod filters;
pub mod hardset;
pub mod provider;
pub mod remote;
pub mod run;
pub mod synthetic;
pub mod trainer;

pub use config::{ConfigError, RunConfig};
pub use filters::{binary_filter, silver_answer_filter, FilterKind, FilterVerdict};
pub use hardset::{build_hard_set, HardSetEntry};
pub use provider::{FixtureLine, ProviderError, RolloutProvider, RolloutRequest, ScriptedProvider};
pub use remote::{RemoteClient, RemoteSettings};
pub use run::{persist_run, MetricsRow, RunDir};
pub use trainer::{RunSummary, Trainer};
