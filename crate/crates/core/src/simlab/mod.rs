// SPDX-License-Identifier: MIT OR Apache-2.0

//! Simulation designs, experiment drivers and the adjusted Rand index.

pub mod ari;
pub mod design;
pub mod experiment;
pub mod presets;

pub use ari::{adjusted_rand, labels_from_cuts};
pub use design::{gen_dataset, scaled_jump, ChangePoint, CovModel, ErrorLaw, SimData, SimDesign, Truth};
pub use experiment::{
    run_cells, run_multicpt_experiment, run_power_experiment, run_size_experiment, write_reports_csv, Cell,
    ExperimentKind, ExperimentReport, GroupSelector, RepOutcome,
};
pub use presets::{preset, ChangeSpec, DesignSpec, ExperimentSpec, Pattern, PRESETS};
