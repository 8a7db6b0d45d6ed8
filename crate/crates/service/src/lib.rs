//! Analysis server and device agent.
//!
//! The server ([`server`]) ingests transfer logs, periodically runs the
//! analysis [`pipeline`] and publishes the resulting predictor as a
//! fixed-size blob. The [`agent`] resolves settings on the device, runs
//! transfers through the engine and uploads its logs. [`cost`] checks whether
//! an analysis run is worth its price; [`bench`] sweeps the simulator over
//! the lattice.

pub mod agent;
pub mod bench;
pub mod cost;
pub mod exit;
pub mod pipeline;
pub mod server;

pub use cost::{amortization_check, Amortization, Cost, CostEstimate};
pub use exit::{ExitClass, Failure};
pub use pipeline::{run_pipeline, run_pipeline_on, PipelineConfig, PipelineError, PipelineResult, TableRow};
pub use server::{start, ServiceConfig};
