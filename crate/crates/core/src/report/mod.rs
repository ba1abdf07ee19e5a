//! Run configuration, artifact layout and report emission.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{config_schema, schema_errors, DataSource, RunConfig, DEFAULT_OUT, OUT_ENV};
pub use emit::{
    emit_report, front_and_knee, heatmap_csv, histogram_csv, load_table, pareto_axes, pareto_svg,
    results_csv, save_table, Axis, ReportFiles, HISTOGRAM_BINS,
};
pub use run::{
    config_hash, load_data, prepare, read_manifest, run_eval, run_report, run_search,
    run_train_one, Manifest, Reevaluation, RunPaths, CRATE_VERSION,
};
