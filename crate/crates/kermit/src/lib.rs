//! Autonomic workload optimization for a simulated big-data cluster.
//!
//! The crate implements a full feedback loop: an on-line path (telemetry
//! windowing, streaming change detection, workload classification and
//! prediction, configuration search per resource request) and an off-line
//! path (workload discovery and drift detection, hybrid-class anticipation,
//! training-set generation, classifier training), both sharing a zoned
//! file-backed knowledge base. A deterministic cluster simulator with a
//! known ground-truth performance model closes the loop end to end.
//!
//! Start with the runnable examples (`cargo run --example run_scenario`) or
//! the `kermit` binary (`kermit run <scenario.json> --out <dir>`).

pub mod change;
pub mod config;
pub mod dataset;
pub mod discovery;
pub mod forest;
pub mod kb;
pub mod optimizer;
pub mod predict;
pub mod telemetry;
pub mod zsl;

mod tdist;

/// The reserved label for windows whose workload type is not yet known.
pub const UNKNOWN_LABEL: u32 = 0;
