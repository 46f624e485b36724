use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{DemandProfile, FmaxTrajectory, PowerSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    /// The caller's wall-clock deadline passed first.
    Deadline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Projections,
    MirrorProx,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Projections => "projections",
            SolverKind::MirrorProx => "mirror-prox",
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "projections" => Ok(SolverKind::Projections),
            "mirror-prox" => Ok(SolverKind::MirrorProx),
            other => Err(format!("unknown solver '{other}' (expected projections or mirror-prox)")),
        }
    }
}

/// Output of either solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub schedule: PowerSchedule,
    pub fmax: FmaxTrajectory,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Per-iteration `lambda_dem * h_dem` for the Mirror Prox solver, empty otherwise.
    pub objective_trace: Vec<f64>,
}

/// Max-norm distance between two equally shaped schedules.
pub fn max_abs_diff(a: &PowerSchedule, b: &PowerSchedule) -> f64 {
    a.matrix()
        .iter()
        .zip(b.matrix().iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Stopping threshold: `factor` times the mean demand share of one machine.
pub(crate) fn stopping_threshold(factor: f64, demand: &DemandProfile, machines: usize) -> f64 {
    factor * demand.mean() / machines as f64
}

/// Stop when the change is below `eps`; a zero change always counts,
/// which covers `eps == 0` for an all-zero demand.
pub(crate) fn below_threshold(diff: f64, eps: f64) -> bool {
    diff < eps || diff == 0.0
}

pub(crate) fn past(deadline: Option<Instant>) -> bool {
    deadline.is_some_and(|d| Instant::now() >= d)
}
