//! Experiment configs, single runs, comparisons and figure presets.

mod compare;
mod config;
mod experiment;
mod presets;

pub use compare::{check_comparable, compare, summary_table, Comparison, ComparisonRow};
pub use config::{
    parse_config, AlgorithmConfig, DiagnosticsSpec, ExperimentConfig, ExtraStep, GraphSpec, InitKind, InitSpec, OutputSpec,
    ProblemSpec, StopSpec, DATA_SEED_OFFSET, GRAPH_SEED_OFFSET, INIT_SEED_OFFSET, MAX_SEED,
};
pub use experiment::{
    build_graph, build_problem, build_setup, default_out_dir, execute, initial_point, reference_saddle, run_experiment,
    write_atomic, write_outputs, Outcome, OutputEntry, RunManifest, Setup, OUT_DIR_ENV,
};
pub use presets::{figure_preset, run_preset, PresetOptions, PRESET_NAMES};
