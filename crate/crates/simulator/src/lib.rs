//! Synthetic audiences for the calmrelay server.
//!
//! [`run_scenario`] connects scripted audience and speaker clients to a live
//! server, streams generated samples on schedule, and evaluates the frames the
//! speakers receive against the scenario's assertions.

pub mod report;
pub mod run;

pub use report::{evaluate, ReceivedFrame, ScenarioReport, Traffic};
pub use run::{collect_traffic, run_scenario, SimError};
