//! Path-following guidance for underactuated unmanned surface vehicles.
//!
//! The crate models the along-/cross-track error dynamics of a vessel
//! chasing a virtual target on a parametric path, and provides three
//! guidance laws on top of them:
//!
//! * [`los::sglos`], a surge-guided line-of-sight law,
//! * [`nmpc::NmpcSolver`], a nonlinear receding-horizon law solved by SQP,
//! * [`pnmpc::PnmpcSolver`], a linearised variant that solves one QP per step.
//!
//! Everything here is pure computation and builds without `std`; a heap is
//! required for horizon-sized vectors. Clocks, files and the simulation
//! loop live in the companion `usv-sim` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod angle;
pub mod disturbance;
mod error;
pub mod filter;
pub mod los;
pub mod model;
pub mod nmpc;
pub mod path;
pub mod pnmpc;
pub mod qp;

pub use error::{GuidanceError, Result};
pub use los::{InputConstraints, SglosParams};
pub use model::{GuidanceState, InputCmd, VesselPose};
pub use nmpc::{NmpcConfig, NmpcSolver, SolveResult};
pub use path::{AnyPath, CaseStudyPath, LinePath, Path, PathPoint, PolynomialPath};
pub use pnmpc::PnmpcSolver;
