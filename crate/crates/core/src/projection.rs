//! Successive projections onto the demand, decay and capacity constraints.
//!
//! One iteration raises contributions until the demand is met (or nobody has
//! headroom left), rolls the decay recurrence forward and clips every entry
//! to its decayed maximum. Iterations repeat until the schedule stops moving.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::domain::{
    roll_fmax_unchecked, DemandProfile, FleetInstance, FmaxParams, FmaxTrajectory, PowerSchedule,
};
use crate::error::DomainError;
use crate::solution::{below_threshold, max_abs_diff, past, stopping_threshold, SolveResult, StopReason};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Interval length in slots.
    pub delta_t: usize,
    /// Stopping threshold as a fraction of mean demand.
    pub epsilon_factor: f64,
    pub max_iters: usize,
    pub fmax_params: FmaxParams,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            delta_t: 1,
            epsilon_factor: 0.1,
            max_iters: 10_000,
            fmax_params: FmaxParams::default(),
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self, slots: usize) -> Result<(), DomainError> {
        self.fmax_params.validate()?;
        if self.delta_t == 0 || self.delta_t > slots {
            return Err(DomainError::InvalidConfig(format!(
                "delta_t must lie in [1, {slots}], got {}",
                self.delta_t
            )));
        }
        if !(self.epsilon_factor > 0.0) {
            return Err(DomainError::InvalidConfig("epsilon_factor must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(DomainError::InvalidConfig("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Picks the machine with the smallest positive headroom `fmax - f`,
/// lowest index first on ties. `None` when nobody has headroom.
pub fn select_machine<'a>(
    f: impl IntoIterator<Item = &'a f64>,
    fmax: impl IntoIterator<Item = &'a f64>,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&f, &cap)) in f.into_iter().zip(fmax).enumerate() {
        let headroom = (cap - f).max(0.0);
        if headroom > 0.0 && best.is_none_or(|(_, h)| headroom < h) {
            best = Some((j, headroom));
        }
    }
    best.map(|(j, _)| j)
}

/// Raises contributions interval by interval until the demand at each
/// interval's last slot is met. Entries never decrease.
pub fn project_onto_demand(
    schedule: &PowerSchedule,
    fmax: &FmaxTrajectory,
    demand: &DemandProfile,
    delta_t: usize,
) -> Result<PowerSchedule, DomainError> {
    check_dims(schedule, fmax, demand)?;
    if delta_t == 0 {
        return Err(DomainError::InvalidConfig("delta_t must be >= 1".into()));
    }
    let mut out = schedule.clone();
    project_in_place(&mut out, fmax, demand, delta_t);
    Ok(out)
}

pub(crate) fn project_in_place(
    schedule: &mut PowerSchedule,
    fmax: &FmaxTrajectory,
    demand: &DemandProfile,
    delta_t: usize,
) {
    let slots = schedule.slots();
    let f = schedule.matrix_mut();
    let mut t_start = 0;
    while t_start < slots {
        let t_end = (t_start + delta_t).min(slots) - 1;
        let sigma = demand.values()[t_end];
        // at most one raise per machine: a raised machine either meets the
        // demand or loses all of its headroom
        for _ in 0..f.nrows() {
            let inc = sigma - f.column(t_end).sum();
            if !(inc > 0.0) {
                break;
            }
            let Some(j) = select_machine(f.column(t_end), fmax.column(t_end)) else {
                break;
            };
            let raised = (f[(j, t_end)] + inc).min(fmax.get(j, t_end));
            for t in t_start..=t_end {
                let entry = &mut f[(j, t)];
                *entry = entry.max(raised);
            }
        }
        t_start = t_end + 1;
    }
}

/// Entrywise `min(f, fmax)`.
pub fn clip_to_fmax(schedule: &PowerSchedule, fmax: &FmaxTrajectory) -> Result<PowerSchedule, DomainError> {
    if schedule.matrix().dim() != fmax.matrix().dim() {
        return Err(DomainError::DimensionMismatch {
            expected: fmax.matrix().dim(),
            found: schedule.matrix().dim(),
        });
    }
    let mut out = schedule.clone();
    clip_in_place(&mut out, fmax);
    Ok(out)
}

pub(crate) fn clip_in_place(schedule: &mut PowerSchedule, fmax: &FmaxTrajectory) {
    schedule
        .matrix_mut()
        .zip_mut_with(fmax.matrix(), |f, &cap| *f = f.min(cap));
}

pub fn solve_projections(
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &ProjectionConfig,
    init: &PowerSchedule,
) -> Result<SolveResult, DomainError> {
    solve_projections_until(instance, demand, cfg, init, None)
}

/// As [`solve_projections`], giving up with [`StopReason::Deadline`] once
/// `deadline` has passed at the end of an iteration.
pub fn solve_projections_until(
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &ProjectionConfig,
    init: &PowerSchedule,
    deadline: Option<Instant>,
) -> Result<SolveResult, DomainError> {
    instance.validate()?;
    cfg.validate(demand.slots())?;
    init.check_shape(instance, demand.slots())?;

    let eps = stopping_threshold(cfg.epsilon_factor, demand, instance.len());
    let mut schedule = init.clone();
    let mut fmax = roll_fmax_unchecked(&schedule, instance, &cfg.fmax_params);
    let mut iterations = 0;
    let stop_reason = loop {
        let previous = schedule.clone();
        project_in_place(&mut schedule, &fmax, demand, cfg.delta_t);
        fmax = roll_fmax_unchecked(&schedule, instance, &cfg.fmax_params);
        clip_in_place(&mut schedule, &fmax);
        iterations += 1;
        if below_threshold(max_abs_diff(&schedule, &previous), eps) {
            break StopReason::Converged;
        }
        if iterations >= cfg.max_iters {
            break StopReason::MaxIters;
        }
        if past(deadline) {
            break StopReason::Deadline;
        }
    };
    Ok(SolveResult {
        schedule,
        fmax,
        iterations,
        stop_reason,
        objective_trace: Vec::new(),
    })
}

fn check_dims(schedule: &PowerSchedule, fmax: &FmaxTrajectory, demand: &DemandProfile) -> Result<(), DomainError> {
    let expected = (fmax.machines(), demand.slots());
    let found = schedule.matrix().dim();
    if found != expected || fmax.slots() != demand.slots() {
        return Err(DomainError::DimensionMismatch { expected, found });
    }
    Ok(())
}
