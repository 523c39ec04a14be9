//! Configuration, seeding, persistence, statistics and reporting.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod report;
pub mod seeding;
pub mod stats;

pub use config::{ExperimentConfig, Preset, SCHEMA_VERSION};
pub use output::{read_csv, read_json, write_csv, write_json, Command, DefendMode, RunManifest, MANIFEST};
pub use pipeline::{replay, run_command, AttackSummary, DetectionSummary, ReplayReport};
pub use seeding::{Seeder, Stream};
pub use report::{write_report, ReportRow};
