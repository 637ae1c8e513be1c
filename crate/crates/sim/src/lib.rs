//! Closed-loop simulation of the path-following guidance laws.
//!
//! A [`Scenario`] fixes the path, the initial pose, the law and the
//! environment. [`run_scenario`] produces a [`Trace`] sampled at every plant
//! step, and [`compute_metrics`] condenses it into a [`Report`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod derivatives;
mod error;
mod harness;
mod metrics;
mod output;
mod scenario;

pub use derivatives::{check_derivatives, DerivativeReport};
pub use error::SimError;
pub use harness::{run_scenario, Record, Trace};
pub use metrics::{compute_metrics, Report, SolveTimeStats};
pub use output::{format_g9, write_csv, write_csv_file, CSV_COLUMNS};
pub use scenario::{FilterSpec, InitialPose, Law, PathSpec, PredictiveParams, Scenario};
