//! Experiment driver: sweeps schemes over sweep values and paired seeds,
//! aggregates the repetitions and writes the CSVs the plotting script reads.

mod error;
pub mod figures;
pub mod plan;
pub mod run;
pub mod table;

pub use error::{Error, Result};
pub use figures::{emit_figure_data, figure_data, Figure};
pub use plan::{Category, ExperimentPlan};
pub use run::{run_plan, AggregateRow, PlanOutput, RunRecord};
