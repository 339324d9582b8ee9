//! Configured experiments: config loading, multi-seed orchestration and
//! trace output.

pub mod config;
pub mod experiment;
pub mod trace;

pub use config::{
    load_config, load_game, load_policies, parse_config, Algorithm, Game, GameSpec, LoadedConfig, RunConfig,
};
pub use experiment::{
    audit, describe_reference, reference, run_experiment, trace_files_equal, ExperimentOutcome, Reference, RunOptions,
    SeedRun,
};
