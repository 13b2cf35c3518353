//! Experiment configs, presets, report emission and the command line.

pub mod cli;
pub mod config;
mod experiments;
pub mod presets;
pub mod report;

pub use config::{
    apply_override, with_overrides, AnnealConfig, AuxCheckConfig, AuxConfig, EnsembleConfig, ExperimentConfig,
    ExperimentKind, GridConfig, HopfieldConfig, InitialDensity, OutputConfig, ReportFormat, StationaryConfig,
    SweepConfig,
};
pub use experiments::{quadrature_residual, run_experiment};
pub use presets::{preset, preset_names, PresetInfo, PRESETS};
pub use report::{emit_report, Comparison, ExperimentReport, Metric, Table};

#[cfg(test)]
mod tests;
