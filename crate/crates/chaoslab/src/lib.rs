//! Experiment harness for `chaoslab-core`: declarative plans, seeded parallel
//! sweeps over `(N, repetition)` cells, CSV/JSON/SVG outputs, rate fits, file
//! formats and the `chaoslab` command line.

pub mod cli;
pub mod error;
pub mod fit;
pub mod formats;
pub mod kernels;
pub mod plan;
pub mod plot;
pub mod records;
pub mod reference;
pub mod run;

pub use error::{HarnessError, Result};
pub use plan::ExperimentPlan;
pub use records::MetricRecord;
pub use run::{run_plan, RunOptions, RunOutput};
