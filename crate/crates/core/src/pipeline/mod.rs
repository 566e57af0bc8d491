//! Configuration, end-to-end runs and verification of run outputs.

mod config;
mod run;
mod verify;

pub use config::{
    parse_pairs, parse_year_range, preset_values, AggregateConfig, ChiSource, ConfigBuilder, IntangibleConfig,
    Override, Preset, RunConfig,
};
pub use run::{run_pipeline, Manifest, ManifestOverride, OutputRecord, RunSummary, MANIFEST};
pub use verify::{verify_outputs, Check, Status, VerifyReport, VERIFY_TOL};
