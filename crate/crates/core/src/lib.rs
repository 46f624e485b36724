//! Commitment scheduling for fleets of degrading power sources.
//!
//! Given `m` machines whose maximum output decays with use, and a demand
//! profile, find per-slot contributions that meet the demand for as long as
//! possible. Two solvers are provided:
//!
//! - [`projection::solve_projections`]: successive projections onto the
//!   demand, decay and capacity constraints.
//! - [`mirror_prox::solve_mirror_prox`]: entropic Mirror Prox on smooth
//!   exponential penalties, anchored to the demand projection.
//!
//! [`evaluation`] measures the resulting production horizon against an
//! analytic ceiling, and [`bench`] runs seeded comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod io;
pub mod mirror_prox;
pub mod projection;
pub mod solution;

pub use domain::{
    check_feasibility, fmax_step, roll_fmax, DemandProfile, FeasibilityReport, FleetInstance, FmaxParams,
    FmaxTrajectory, MachineSpec, PowerSchedule,
};
pub use error::{DomainError, IoError, OracleError, SolveError};
pub use solution::{SolveResult, SolverKind, StopReason};
