//! JSON files for instances, demands, schedules, solutions and reports.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! yields bit-identical values.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{DemandProfile, FleetInstance, FmaxTrajectory, PowerSchedule};
use crate::error::{DomainError, IoError};
use crate::solution::{SolveResult, SolverKind, StopReason};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandFile {
    pub demand: DemandProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    /// One row per machine.
    pub schedule: Vec<Vec<f64>>,
}

/// A solver run as written by `solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub demand: DemandProfile,
    pub schedule: Vec<Vec<f64>>,
    pub fmax: Vec<Vec<f64>>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub wall_time_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

impl SolutionFile {
    pub fn new(
        solver: SolverKind,
        alpha: Option<f64>,
        demand: &DemandProfile,
        result: &SolveResult,
        wall_time_ms: f64,
    ) -> Self {
        Self {
            solver,
            alpha,
            demand: demand.clone(),
            schedule: result.schedule.to_rows(),
            fmax: result.fmax.to_rows(),
            iterations: result.iterations,
            stop_reason: result.stop_reason,
            wall_time_ms,
            objective_trace: result.objective_trace.clone(),
        }
    }

    /// Rebuilds the schedule and checks it against the embedded demand.
    pub fn schedule(&self) -> Result<PowerSchedule, DomainError> {
        let schedule = PowerSchedule::from_rows(self.schedule.clone())?;
        if schedule.slots() != self.demand.slots() {
            return Err(DomainError::DimensionMismatch {
                expected: (schedule.machines(), self.demand.slots()),
                found: schedule.matrix().dim(),
            });
        }
        Ok(schedule)
    }

    pub fn fmax(&self) -> Result<FmaxTrajectory, DomainError> {
        let rows = PowerSchedule::from_rows(self.fmax.clone())?;
        FmaxTrajectory::new(rows.into_matrix())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    from_json(&fs::read_to_string(path)?)
}

/// Reads and validates a fleet instance.
pub fn read_instance(path: &Path) -> Result<FleetInstance, IoError> {
    let instance: FleetInstance = read_json(path)?;
    instance.validate()?;
    Ok(instance)
}

pub fn read_demand(path: &Path) -> Result<DemandProfile, IoError> {
    let file: DemandFile = read_json(path)?;
    Ok(DemandProfile::new(file.demand.values().to_vec())?)
}

pub fn read_schedule(path: &Path) -> Result<PowerSchedule, IoError> {
    let file: ScheduleFile = read_json(path)?;
    Ok(PowerSchedule::from_rows(file.schedule)?)
}

pub fn read_solution(path: &Path) -> Result<SolutionFile, IoError> {
    let file: SolutionFile = read_json(path)?;
    DemandProfile::new(file.demand.values().to_vec())?;
    file.schedule()?;
    Ok(file)
}
