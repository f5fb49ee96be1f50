//! Config-driven experiments on ion Coulomb crystals: parse a run
//! description, execute one protocol, write tables, images and a manifest.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod units;

pub use config::{parse_config, ExperimentConfig, RawConfig, Verb};
pub use error::{CliError, ConfigError};
pub use output::{RunManifest, Table, TOOLKIT};
pub use run::{run, run_in, OUTPUT_ROOT_ENV};
