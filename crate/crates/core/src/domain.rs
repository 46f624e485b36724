//! Fleet data types and the convex machine-degradation model.
//!
//! A fleet is `m` machines whose maximum output `fmax_j(t)` decays with use:
//!
//! ```text
//! fmax_j(0) = pmax0_j
//! fmax_j(t) = max(0, fmax_j(t-1) + mu * slope_j * f_j(t-1)^upsilon)
//! ```
//!
//! A schedule is feasible when `0 <= f_j(t) <= fmax_j(t)` everywhere, where
//! `fmax` is rolled forward from the schedule itself.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Relative tolerance on `slope == -pmax0 / rul_max`.
const SLOPE_REL_TOL: f64 = 1e-9;

/// Default relative tolerance for exact feasibility checks.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;

/// Static characteristics of one machine (a fuel-cell stack).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    /// Initial maximum output in W.
    pub pmax0: f64,
    /// Minimum useful output in W. Only used for reporting and bounds.
    pub pmin: f64,
    /// Decay of the maximum output per slot of use, W/slot, strictly negative.
    pub slope: f64,
    /// Lifetime in slots when operated at `pmin`.
    pub rul_max: f64,
}

impl MachineSpec {
    /// Builds a machine whose slope is derived from the linear decay model
    /// reaching zero output at `rul_max`.
    pub fn from_rul(pmax0: f64, pmin: f64, rul_max: f64) -> Result<Self, DomainError> {
        let spec = Self {
            pmax0,
            pmin,
            slope: -pmax0 / rul_max,
            rul_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let Self {
            pmax0,
            pmin,
            slope,
            rul_max,
        } = *self;
        if !(pmax0.is_finite() && pmax0 > 0.0) {
            return Err(DomainError::InvalidMachine(format!("pmax0 must be > 0, got {pmax0}")));
        }
        if !(pmin >= 0.0 && pmin < pmax0) {
            return Err(DomainError::InvalidMachine(format!(
                "pmin must lie in [0, pmax0), got {pmin}"
            )));
        }
        if !(slope.is_finite() && slope < 0.0) {
            return Err(DomainError::InvalidMachine(format!("slope must be < 0, got {slope}")));
        }
        if !(rul_max.is_finite() && rul_max > 0.0) {
            return Err(DomainError::InvalidMachine(format!(
                "rul_max must be > 0, got {rul_max}"
            )));
        }
        let expected = -pmax0 / rul_max;
        if ((slope - expected) / expected).abs() > SLOPE_REL_TOL {
            return Err(DomainError::InvalidMachine(format!(
                "slope {slope} inconsistent with -pmax0/rul_max = {expected}"
            )));
        }
        Ok(())
    }
}

/// An ordered set of machines. Machine `j` is reported 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetInstance {
    pub machines: Vec<MachineSpec>,
    #[serde(default = "default_slot_hours")]
    pub slot_hours: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_slot_hours() -> f64 {
    1.0
}

impl FleetInstance {
    pub fn new(machines: Vec<MachineSpec>) -> Result<Self, DomainError> {
        let instance = Self {
            machines,
            slot_hours: 1.0,
            seed: None,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.machines.is_empty() {
            return Err(DomainError::EmptyFleet);
        }
        if !(self.slot_hours.is_finite() && self.slot_hours > 0.0) {
            return Err(DomainError::InvalidSlotHours(self.slot_hours));
        }
        for (j, machine) in self.machines.iter().enumerate() {
            machine
                .validate()
                .map_err(|e| DomainError::InvalidMachine(format!("machine {}: {e}", j + 1)))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.machines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machines.is_empty()
    }
}

/// Demand `sigma(t)` in W for `t = 0..=T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemandProfile(Vec<f64>);

impl DemandProfile {
    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        if values.is_empty() {
            return Err(DomainError::EmptyDemand);
        }
        if let Some((t, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(DomainError::NegativeDemand { t, value: v });
        }
        Ok(Self(values))
    }

    pub fn constant(sigma: f64, horizon: usize) -> Result<Self, DomainError> {
        Self::new(vec![sigma; horizon + 1])
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Number of slots, `T + 1`.
    pub fn slots(&self) -> usize {
        self.0.len()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// The common value when every slot carries the same demand.
    pub fn constant_value(&self) -> Option<f64> {
        let first = self.0[0];
        self.0.iter().all(|&v| v == first).then_some(first)
    }
}

/// The decision variable: `m x (T+1)` power outputs, entry `(j, t)` is `f_j(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSchedule(Array2<f64>);

impl PowerSchedule {
    pub fn new(f: Array2<f64>) -> Result<Self, DomainError> {
        if let Some(((j, t), &v)) = f.indexed_iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(DomainError::NegativePower { machine: j + 1, t, value: v });
        }
        Ok(Self(f))
    }

    pub fn zeros(machines: usize, slots: usize) -> Self {
        Self(Array2::zeros((machines, slots)))
    }

    pub fn filled(machines: usize, slots: usize, value: f64) -> Self {
        Self(Array2::from_elem((machines, slots), value))
    }

    /// Wraps a matrix known to satisfy the invariants.
    pub(crate) fn from_raw(f: Array2<f64>) -> Self {
        Self(f)
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DomainError> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(DomainError::RaggedSchedule);
        }
        let f = Array2::from_shape_vec((m, n), rows.into_iter().flatten().collect())
            .map_err(|_| DomainError::RaggedSchedule)?;
        Self::new(f)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.0
    }

    pub fn machines(&self) -> usize {
        self.0.nrows()
    }

    pub fn slots(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.0[(j, t)]
    }

    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        self.0.row(j)
    }

    pub fn column(&self, t: usize) -> ArrayView1<'_, f64> {
        self.0.column(t)
    }

    /// Total fleet output per slot.
    pub fn totals(&self) -> Vec<f64> {
        self.0.sum_axis(Axis(0)).to_vec()
    }

    pub fn check_shape(&self, instance: &FleetInstance, slots: usize) -> Result<(), DomainError> {
        if self.machines() != instance.len() || self.slots() != slots {
            return Err(DomainError::DimensionMismatch {
                expected: (instance.len(), slots),
                found: (self.machines(), self.slots()),
            });
        }
        Ok(())
    }
}

/// Usage-dependent maximum outputs, entry `(j, t)` is `fmax_j(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FmaxTrajectory(Array2<f64>);

impl FmaxTrajectory {
    /// Every row constant at the machine's initial maximum.
    pub fn initial(instance: &FleetInstance, slots: usize) -> Self {
        let mut fmax = Array2::zeros((instance.len(), slots));
        for (mut row, machine) in fmax.rows_mut().into_iter().zip(&instance.machines) {
            row.fill(machine.pmax0);
        }
        Self(fmax)
    }

    /// Checks entries are finite and non-negative with rows non-increasing in `t`.
    pub fn new(fmax: Array2<f64>) -> Result<Self, DomainError> {
        if let Some(((j, t), &v)) = fmax.indexed_iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(DomainError::NegativePower { machine: j + 1, t, value: v });
        }
        for (j, row) in fmax.rows().into_iter().enumerate() {
            if let Some(t) = (1..row.len()).find(|&t| row[t] > row[t - 1]) {
                return Err(DomainError::IncreasingFmax { machine: j + 1, t });
            }
        }
        Ok(Self(fmax))
    }

    pub(crate) fn from_raw(fmax: Array2<f64>) -> Self {
        Self(fmax)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.0[(j, t)]
    }

    pub fn column(&self, t: usize) -> ArrayView1<'_, f64> {
        self.0.column(t)
    }

    pub fn machines(&self) -> usize {
        self.0.nrows()
    }

    pub fn slots(&self) -> usize {
        self.0.ncols()
    }
}

/// Shape of the usage-driven decay: `mu * slope * f^upsilon` per slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FmaxParams {
    pub mu: f64,
    pub upsilon: f64,
}

impl Default for FmaxParams {
    fn default() -> Self {
        Self {
            mu: 0.2,
            upsilon: 0.3,
        }
    }
}

impl FmaxParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        if !(0.0..=1.0).contains(&self.mu) || !(0.0..=1.0).contains(&self.upsilon) {
            return Err(DomainError::InvalidFmaxParams {
                mu: self.mu,
                upsilon: self.upsilon,
            });
        }
        Ok(())
    }
}

/// One step of the decay recurrence.
pub fn fmax_step(
    prev_fmax: f64,
    prev_f: f64,
    spec: &MachineSpec,
    params: &FmaxParams,
) -> Result<f64, DomainError> {
    if !(prev_fmax >= 0.0) || !(prev_f >= 0.0) {
        return Err(DomainError::NegativeInput {
            prev_fmax,
            prev_f,
        });
    }
    Ok(step_unchecked(prev_fmax, prev_f, spec.slope, params))
}

#[inline]
pub(crate) fn step_unchecked(prev_fmax: f64, prev_f: f64, slope: f64, params: &FmaxParams) -> f64 {
    if prev_f == 0.0 {
        return prev_fmax;
    }
    (prev_fmax + params.mu * slope * prev_f.powf(params.upsilon)).max(0.0)
}

/// Rolls the decay recurrence forward over a whole schedule.
pub fn roll_fmax(
    schedule: &PowerSchedule,
    instance: &FleetInstance,
    params: &FmaxParams,
) -> Result<FmaxTrajectory, DomainError> {
    schedule.check_shape(instance, schedule.slots())?;
    Ok(roll_fmax_unchecked(schedule, instance, params))
}

pub(crate) fn roll_fmax_unchecked(
    schedule: &PowerSchedule,
    instance: &FleetInstance,
    params: &FmaxParams,
) -> FmaxTrajectory {
    let f = schedule.matrix();
    let slots = f.ncols();
    let mut fmax = Array2::zeros(f.raw_dim());
    for (j, machine) in instance.machines.iter().enumerate() {
        let mut current = machine.pmax0;
        fmax[(j, 0)] = current;
        for t in 1..slots {
            current = step_unchecked(current, f[(j, t - 1)], machine.slope, params);
            fmax[(j, t)] = current;
        }
    }
    FmaxTrajectory(fmax)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Negative,
    AboveFmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based machine index.
    pub machine: usize,
    pub t: usize,
    pub kind: ViolationKind,
    /// How far the entry lies outside its bound, in W.
    pub magnitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lists every entry that is negative or above `fmax * (1 + tol)`, with
/// `fmax` rolled forward from the schedule itself.
pub fn check_feasibility(
    schedule: &PowerSchedule,
    instance: &FleetInstance,
    params: &FmaxParams,
    tol: f64,
) -> Result<FeasibilityReport, DomainError> {
    let fmax = roll_fmax(schedule, instance, params)?;
    let mut violations = Vec::new();
    for ((j, t), &f) in schedule.matrix().indexed_iter() {
        if f < 0.0 {
            violations.push(Violation {
                machine: j + 1,
                t,
                kind: ViolationKind::Negative,
                magnitude: -f,
            });
        }
        let cap = fmax.get(j, t);
        if f > cap * (1.0 + tol) {
            violations.push(Violation {
                machine: j + 1,
                t,
                kind: ViolationKind::AboveFmax,
                magnitude: f - cap,
            });
        }
    }
    Ok(FeasibilityReport { violations })
}
