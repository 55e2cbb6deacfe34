//! Scenario registry, configuration files, command pipeline and artifact
//! emission for `loewner-core`.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod scenarios;

pub use config::{parse_config, parse_config_str, ConfigErrors, ScenarioConfig};
pub use output::Summary;
pub use pipeline::{run_pipeline, Command, RunOptions};
