//! Reproducible end-to-end driver for `extremal-core`: standardize, explore
//! χ, cluster angles, extremal PCA, face detection, graph learning and
//! fitting, simulation.
//!
//! Every run writes its artifacts plus a `manifest.json` recording the full
//! configuration, seeds, built-in constants and per-stage status. Identical
//! configurations give byte-identical output directories.

pub mod config;
mod output;
pub mod pipeline;
pub mod plot;

pub use config::{merge_json, Level, ModelSpec, PipelineConfig, Stage};
pub use output::OutputDir;
pub use pipeline::{run_pipeline, Manifest, StageOutputs, MANIFEST_FILE, MANIFEST_VERSION};
pub use plot::{emit_plot_data, PlotRecord};

/// Overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "EXTREMAL_OUTPUT_DIR";
