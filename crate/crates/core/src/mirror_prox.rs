//! Entropic Mirror Prox on smooth exponential penalties.
//!
//! The objective is
//!
//! ```text
//! phi(F) = lambda_dem * h_dem(F) + lambda_slope * h_slope(F)
//! h_dem(F)   = sum_t 1/(T+1) * exp(-gamma * (sum_j f_j(t) - sigma(t)))
//! h_slope(F) = sum_{t>=1} sum_j exp(delta * (fmax_j(t) - fmax_j(t-1) - mu' * a_j * f_j(t-1)^upsilon'))
//! ```
//!
//! minimized over the positive orthant with the negative-entropy mirror map
//! `theta(F) = sum F ln F`, so `grad theta(F) = ln F + 1` and its inverse is
//! `exp(d - 1)`. Each iteration takes the extragradient double step, adds the
//! demand-anchor pull `w_grad * (F - F_proj)` to both half steps, then walks
//! the slots forward clipping to `fmax`, topping up the demand and stepping
//! the decay recurrence.
//!
//! `fmax` is an auxiliary quantity: it is recomputed from the iterate after
//! each step and held constant when differentiating.

use std::time::Instant;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::domain::{
    step_unchecked, DemandProfile, FleetInstance, FmaxParams, FmaxTrajectory, MachineSpec, PowerSchedule,
};
use crate::error::{DomainError, SolveError};
use crate::projection::{project_in_place, select_machine};
use crate::solution::{below_threshold, max_abs_diff, past, stopping_threshold, SolveResult, StopReason};

/// Exponent arguments are capped here before `exp`.
pub const EXP_CAP: f64 = 700.0;

/// Longest objective trace kept in a `SolveResult`.
pub const TRACE_POINTS: usize = 1000;

#[inline]
fn capped_exp(x: f64) -> f64 {
    x.min(EXP_CAP).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MirrorProxConfig {
    pub lambda_step: f64,
    pub lambda_dem: f64,
    pub lambda_slope: f64,
    pub gamma: f64,
    pub delta: f64,
    pub mu_prime: f64,
    pub upsilon_prime: f64,
    pub w_grad: f64,
    pub epsilon_factor: f64,
    pub max_iters: usize,
    pub f_floor: f64,
    /// Evaluate penalties and gradients with powers measured in units of the
    /// mean demand instead of watts.
    pub normalize_units: bool,
    pub fmax_params: FmaxParams,
}

impl Default for MirrorProxConfig {
    fn default() -> Self {
        Self {
            lambda_step: 1e-2,
            lambda_dem: 100.0,
            lambda_slope: 100.0,
            gamma: 100.0,
            delta: 100.0,
            mu_prime: 1.0,
            upsilon_prime: 0.3,
            w_grad: 1.0,
            epsilon_factor: 0.1,
            max_iters: 2_000,
            f_floor: 1e-8,
            normalize_units: true,
            fmax_params: FmaxParams::default(),
        }
    }
}

impl MirrorProxConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        self.fmax_params.validate()?;
        let checks: [(bool, &str); 9] = [
            (self.lambda_step >= 0.0, "lambda_step must be >= 0"),
            (self.lambda_dem > 0.0 && self.lambda_slope > 0.0, "penalty weights must be > 0"),
            (self.gamma > 0.0, "gamma must be > 0"),
            (self.delta > 0.0, "delta must be > 0"),
            (self.mu_prime > 0.0, "mu_prime must be > 0"),
            (self.upsilon_prime > 0.0, "upsilon_prime must be > 0"),
            (self.w_grad >= 0.0, "w_grad must be >= 0"),
            (self.epsilon_factor > 0.0 && self.max_iters >= 1, "epsilon_factor > 0 and max_iters >= 1 required"),
            (self.f_floor > 0.0, "f_floor must be > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(DomainError::InvalidConfig((*msg).to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProxState {
    pub f_current: PowerSchedule,
    pub f_mid: PowerSchedule,
    pub fmax: FmaxTrajectory,
    pub iteration: usize,
}

impl ProxState {
    /// Every entry at the floor, which counts as idle, so `fmax` stays at `pmax0`.
    pub fn initial(instance: &FleetInstance, slots: usize, cfg: &MirrorProxConfig) -> Self {
        let f = PowerSchedule::filled(instance.len(), slots, cfg.f_floor);
        let fmax = FmaxTrajectory::initial(instance, slots);
        Self {
            f_mid: f.clone(),
            f_current: f,
            fmax,
            iteration: 0,
        }
    }
}

fn check_schedule(schedule: &PowerSchedule, demand: &DemandProfile) -> Result<(), DomainError> {
    if schedule.slots() != demand.slots() {
        return Err(DomainError::DimensionMismatch {
            expected: (schedule.machines(), demand.slots()),
            found: schedule.matrix().dim(),
        });
    }
    Ok(())
}

fn check_fmax(schedule: &PowerSchedule, fmax: &FmaxTrajectory, instance: &FleetInstance) -> Result<(), DomainError> {
    schedule.check_shape(instance, schedule.slots())?;
    if fmax.matrix().dim() != schedule.matrix().dim() {
        return Err(DomainError::DimensionMismatch {
            expected: schedule.matrix().dim(),
            found: fmax.matrix().dim(),
        });
    }
    Ok(())
}

/// Demand shortfall penalty.
pub fn h_dem(schedule: &PowerSchedule, demand: &DemandProfile, gamma: f64) -> Result<f64, DomainError> {
    check_schedule(schedule, demand)?;
    let weight = 1.0 / demand.slots() as f64;
    Ok(schedule
        .totals()
        .iter()
        .zip(demand.values())
        .map(|(total, sigma)| weight * capped_exp(-gamma * (total - sigma)))
        .sum())
}

/// Exponent of the slope penalty for machine `j` between `t-1` and `t`.
#[inline]
fn slope_exponent(f_prev: f64, fmax_now: f64, fmax_prev: f64, slope: f64, cfg: &MirrorProxConfig) -> f64 {
    cfg.delta * (fmax_now - fmax_prev - cfg.mu_prime * slope * f_prev.powf(cfg.upsilon_prime))
}

/// Penalty on deviations from the linearised decay `mu' * a_j * f^upsilon'`.
pub fn h_slope(
    schedule: &PowerSchedule,
    fmax: &FmaxTrajectory,
    instance: &FleetInstance,
    cfg: &MirrorProxConfig,
) -> Result<f64, DomainError> {
    check_fmax(schedule, fmax, instance)?;
    let f = schedule.matrix();
    let fm = fmax.matrix();
    let mut total = 0.0;
    for (j, machine) in instance.machines.iter().enumerate() {
        for t in 1..f.ncols() {
            total += capped_exp(slope_exponent(f[(j, t - 1)], fm[(j, t)], fm[(j, t - 1)], machine.slope, cfg));
        }
    }
    Ok(total)
}

/// Gradient of `h_dem`; every machine shares the value at a given slot.
pub fn grad_h_dem(schedule: &PowerSchedule, demand: &DemandProfile, gamma: f64) -> Result<Array2<f64>, DomainError> {
    check_schedule(schedule, demand)?;
    let mut grad = Array2::zeros(schedule.matrix().raw_dim());
    add_grad_h_dem(&mut grad, schedule, demand, gamma, 1.0);
    Ok(grad)
}

fn add_grad_h_dem(grad: &mut Array2<f64>, schedule: &PowerSchedule, demand: &DemandProfile, gamma: f64, scale: f64) {
    let weight = scale * gamma / demand.slots() as f64;
    for (t, (total, sigma)) in schedule.totals().iter().zip(demand.values()).enumerate() {
        let g = -weight * capped_exp(-gamma * (total - sigma));
        grad.column_mut(t).mapv_inplace(|v| v + g);
    }
}

/// Gradient of `h_slope` with `fmax` frozen. The last slot gets no contribution.
pub fn grad_h_slope(
    schedule: &PowerSchedule,
    fmax: &FmaxTrajectory,
    instance: &FleetInstance,
    cfg: &MirrorProxConfig,
) -> Result<Array2<f64>, DomainError> {
    check_fmax(schedule, fmax, instance)?;
    let mut grad = Array2::zeros(schedule.matrix().raw_dim());
    add_grad_h_slope(&mut grad, schedule, fmax, instance, cfg, 1.0);
    Ok(grad)
}

fn add_grad_h_slope(
    grad: &mut Array2<f64>,
    schedule: &PowerSchedule,
    fmax: &FmaxTrajectory,
    instance: &FleetInstance,
    cfg: &MirrorProxConfig,
    scale: f64,
) {
    let f = schedule.matrix();
    let fm = fmax.matrix();
    let power = cfg.upsilon_prime - 1.0;
    for (j, machine) in instance.machines.iter().enumerate() {
        let coeff = -scale * cfg.delta * cfg.mu_prime * cfg.upsilon_prime * machine.slope;
        for t in 1..f.ncols() {
            let prev = f[(j, t - 1)];
            let factor = if power == 0.0 { 1.0 } else { prev.max(cfg.f_floor).powf(power) };
            let e = capped_exp(slope_exponent(prev, fm[(j, t)], fm[(j, t - 1)], machine.slope, cfg));
            grad[(j, t - 1)] += coeff * factor * e;
        }
    }
}

/// `ln(max(f, f_floor)) + 1` entrywise.
pub fn mirror_grad(schedule: &PowerSchedule, f_floor: f64) -> Array2<f64> {
    schedule.matrix().mapv(|f| f.max(f_floor).ln() + 1.0)
}

/// `max(exp(min(d, cap) - 1), f_floor)` entrywise.
pub fn mirror_inv(dual: &Array2<f64>, f_floor: f64) -> PowerSchedule {
    PowerSchedule::from_raw(dual.mapv(|d| (d.min(EXP_CAP) - 1.0).exp().max(f_floor)))
}

/// The schedule projected onto the demand with single-slot intervals.
pub fn demand_anchor(
    schedule: &PowerSchedule,
    fmax: &FmaxTrajectory,
    demand: &DemandProfile,
) -> Result<PowerSchedule, DomainError> {
    crate::projection::project_onto_demand(schedule, fmax, demand, 1)
}

/// `lambda_dem * grad h_dem + lambda_slope * grad h_slope` at `schedule`.
pub fn penalty_gradient(
    schedule: &PowerSchedule,
    fmax: &FmaxTrajectory,
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &MirrorProxConfig,
) -> Result<Array2<f64>, DomainError> {
    check_schedule(schedule, demand)?;
    check_fmax(schedule, fmax, instance)?;
    Ok(penalty_gradient_unchecked(schedule, fmax, instance, demand, cfg))
}

fn penalty_gradient_unchecked(
    schedule: &PowerSchedule,
    fmax: &FmaxTrajectory,
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &MirrorProxConfig,
) -> Array2<f64> {
    let mut grad = Array2::zeros(schedule.matrix().raw_dim());
    add_grad_h_dem(&mut grad, schedule, demand, cfg.gamma, cfg.lambda_dem);
    add_grad_h_slope(&mut grad, schedule, fmax, instance, cfg, cfg.lambda_slope);
    grad
}

/// `lambda_dem * h_dem + lambda_slope * h_slope`.
pub fn penalty_value(
    schedule: &PowerSchedule,
    fmax: &FmaxTrajectory,
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &MirrorProxConfig,
) -> Result<f64, DomainError> {
    Ok(cfg.lambda_dem * h_dem(schedule, demand, cfg.gamma)? + cfg.lambda_slope * h_slope(schedule, fmax, instance, cfg)?)
}

fn ensure_finite(grad: &Array2<f64>, iteration: usize) -> Result<(), SolveError> {
    match grad.indexed_iter().find(|(_, g)| !g.is_finite()) {
        Some(((j, t), _)) => Err(SolveError::NonFiniteGradient {
            machine: j + 1,
            t,
            iteration,
        }),
        None => Ok(()),
    }
}

/// Dual step `ln F + 1 - lambda * grad` mapped back to the primal.
fn dual_step(base_dual: &Array2<f64>, grad: &Array2<f64>, cfg: &MirrorProxConfig) -> PowerSchedule {
    let mut dual = base_dual.clone();
    Zip::from(&mut dual).and(grad).for_each(|d, &g| *d -= cfg.lambda_step * g);
    mirror_inv(&dual, cfg.f_floor)
}

/// The problem restated in the units the penalties are evaluated in.
struct Scaled {
    unit: f64,
    instance: FleetInstance,
    demand: DemandProfile,
    fmax: FmaxTrajectory,
}

impl Scaled {
    fn new(instance: &FleetInstance, demand: &DemandProfile, fmax: &FmaxTrajectory, cfg: &MirrorProxConfig) -> Self {
        let mean = demand.mean();
        let unit = if cfg.normalize_units && mean > 0.0 { mean } else { 1.0 };
        let machines = instance
            .machines
            .iter()
            .map(|m| MachineSpec {
                pmax0: m.pmax0 / unit,
                pmin: m.pmin / unit,
                slope: m.slope / unit,
                rul_max: m.rul_max,
            })
            .collect();
        Self {
            unit,
            instance: FleetInstance {
                machines,
                ..instance.clone()
            },
            demand: DemandProfile::from_raw(demand.values().iter().map(|v| v / unit).collect()),
            fmax: FmaxTrajectory::from_raw(fmax.matrix() / unit),
        }
    }

    /// Penalty gradient plus the anchor pull, both in scaled units.
    fn operator(
        &self,
        schedule: &PowerSchedule,
        fmax: &FmaxTrajectory,
        demand: &DemandProfile,
        cfg: &MirrorProxConfig,
    ) -> Array2<f64> {
        let scaled = PowerSchedule::from_raw(schedule.matrix() / self.unit);
        let mut grad = penalty_gradient_unchecked(&scaled, &self.fmax, &self.instance, &self.demand, cfg);
        let mut projected = schedule.clone();
        project_in_place(&mut projected, fmax, demand, 1);
        let weight = cfg.w_grad / self.unit;
        Zip::from(&mut grad)
            .and(schedule.matrix())
            .and(projected.matrix())
            .for_each(|g, &f, &p| *g += weight * (f - p));
        grad
    }
}

/// Makes `schedule` feasible in one forward pass over the slots and returns
/// the matching `fmax`.
///
/// Entries at or below `f_floor` count as idle. Each slot is clipped to the
/// maximum left by the already enforced past, then raised towards the demand
/// with the same rule as the projection solver, before the decay recurrence
/// steps forward.
fn enforce(
    schedule: &mut PowerSchedule,
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &MirrorProxConfig,
) -> FmaxTrajectory {
    let f = schedule.matrix_mut();
    let mut caps = Array2::zeros(f.raw_dim());
    let mut current: Vec<f64> = instance.machines.iter().map(|m| m.pmax0).collect();
    for t in 0..f.ncols() {
        for (j, cap) in current.iter().enumerate() {
            caps[(j, t)] = *cap;
            let v = f[(j, t)];
            f[(j, t)] = if v <= cfg.f_floor { 0.0 } else { v.min(*cap) };
        }
        let sigma = demand.values()[t];
        for _ in 0..f.nrows() {
            let inc = sigma - f.column(t).sum();
            if !(inc > 0.0) {
                break;
            }
            let Some(j) = select_machine(f.column(t), caps.column(t)) else {
                break;
            };
            f[(j, t)] = (f[(j, t)] + inc).min(current[j]);
        }
        for (j, machine) in instance.machines.iter().enumerate() {
            current[j] = step_unchecked(current[j], f[(j, t)], machine.slope, &cfg.fmax_params);
        }
    }
    FmaxTrajectory::from_raw(caps)
}

/// Entries at or below the floor set to zero: the schedule a state stands for.
fn idle_below_floor(schedule: &PowerSchedule, f_floor: f64) -> PowerSchedule {
    PowerSchedule::from_raw(schedule.matrix().mapv(|f| if f <= f_floor { 0.0 } else { f }))
}

/// One extragradient double step followed by the feasibility pass.
pub fn mp_iteration(
    state: &ProxState,
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &MirrorProxConfig,
) -> Result<ProxState, SolveError> {
    check_schedule(&state.f_current, demand)?;
    check_fmax(&state.f_current, &state.fmax, instance)?;
    let iteration = state.iteration + 1;
    let x = &state.f_current;
    let scaled = Scaled::new(instance, demand, &state.fmax, cfg);
    let base_dual = mirror_grad(x, cfg.f_floor);

    let grad_x = scaled.operator(x, &state.fmax, demand, cfg);
    ensure_finite(&grad_x, iteration)?;
    let mut f_mid = dual_step(&base_dual, &grad_x, cfg);
    f_mid
        .matrix_mut()
        .zip_mut_with(state.fmax.matrix(), |f, &cap| *f = f.min(cap).max(cfg.f_floor));

    let grad_mid = scaled.operator(&f_mid, &state.fmax, demand, cfg);
    ensure_finite(&grad_mid, iteration)?;
    let mut f_current = dual_step(&base_dual, &grad_mid, cfg);

    let fmax = enforce(&mut f_current, instance, demand, cfg);
    f_current
        .matrix_mut()
        .mapv_inplace(|f| f.max(cfg.f_floor));

    Ok(ProxState {
        f_current,
        f_mid,
        fmax,
        iteration,
    })
}

pub fn solve_mirror_prox(
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &MirrorProxConfig,
) -> Result<SolveResult, SolveError> {
    solve_mirror_prox_until(instance, demand, cfg, None)
}

/// As [`solve_mirror_prox`], giving up with [`StopReason::Deadline`] once
/// `deadline` has passed at the end of an iteration.
pub fn solve_mirror_prox_until(
    instance: &FleetInstance,
    demand: &DemandProfile,
    cfg: &MirrorProxConfig,
    deadline: Option<Instant>,
) -> Result<SolveResult, SolveError> {
    instance.validate()?;
    cfg.validate()?;
    let eps = stopping_threshold(cfg.epsilon_factor, demand, instance.len());
    let mut state = ProxState::initial(instance, demand.slots(), cfg);
    let mut trace = Vec::new();
    let stop_reason = loop {
        let previous = state.f_current.clone();
        state = mp_iteration(&state, instance, demand, cfg)?;
        trace.push(cfg.lambda_dem * h_dem(&state.f_current, demand, cfg.gamma)?);
        // with no demand the anchor residual F - F_proj vanishes identically
        if eps == 0.0 || below_threshold(max_abs_diff(&state.f_current, &previous), eps) {
            break StopReason::Converged;
        }
        if state.iteration >= cfg.max_iters {
            break StopReason::MaxIters;
        }
        if past(deadline) {
            break StopReason::Deadline;
        }
    };
    Ok(SolveResult {
        schedule: idle_below_floor(&state.f_current, cfg.f_floor),
        fmax: state.fmax,
        iterations: state.iteration,
        stop_reason,
        objective_trace: downsample(&trace, TRACE_POINTS),
    })
}

/// Evenly spaced subsample keeping the first and last points.
pub fn downsample(values: &[f64], max_points: usize) -> Vec<f64> {
    if values.len() <= max_points {
        return values.to_vec();
    }
    if max_points < 2 {
        return values[..max_points].to_vec();
    }
    let last = values.len() - 1;
    (0..max_points)
        .map(|i| values[i * last / (max_points - 1)])
        .collect()
}
