//! Experiment orchestration: configs, per-resolution pipelines, rate fits
//! and figure data.

pub mod config;
pub mod figures;
pub mod fit;
pub mod run;

pub use config::{ExactSolution, ExperimentConfig, GradientSettings, SchemeVariant, StencilChoice};
pub use figures::{emit_figure_data, Figure};
pub use fit::{fit_rate, Rate};
pub use run::{compute_report, run_experiment, ExperimentReport, ResolutionRow};
