//! Solution metrics, the analytic horizon ceiling, and a brute-force
//! reference search for tiny fleets.

use serde::{Deserialize, Serialize};

use crate::domain::{DemandProfile, FleetInstance, FmaxParams, MachineSpec, PowerSchedule};
use crate::error::{DomainError, OracleError};

/// Relative slack when deciding whether a slot's demand was met.
pub const DEFAULT_HORIZON_TOL: f64 = 1e-6;

/// Share of `pmax0 * rul_max` counted as deliverable energy in the ceiling.
const UB_ENERGY_SHARE: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub horizon: usize,
    /// `None` for non-constant demand profiles.
    pub upper_bound: Option<u64>,
    pub normalized_horizon: Option<f64>,
    pub unmet_slots: usize,
    /// Wh.
    pub overproduction_energy: f64,
    pub machine_starts: Vec<usize>,
}

fn demand_met(total: f64, sigma: f64, tol: f64) -> bool {
    total >= sigma * (1.0 - tol)
}

/// Length of the longest prefix of slots whose demand is met.
pub fn production_horizon(schedule: &PowerSchedule, demand: &DemandProfile, tol: f64) -> Result<usize, DomainError> {
    if schedule.slots() != demand.slots() {
        return Err(DomainError::DimensionMismatch {
            expected: (schedule.machines(), demand.slots()),
            found: schedule.matrix().dim(),
        });
    }
    Ok(schedule
        .totals()
        .iter()
        .zip(demand.values())
        .take_while(|(total, sigma)| demand_met(**total, **sigma, tol))
        .count())
}

/// `floor(sum_j 0.6 * pmax0_j * rul_max_j / sigma)`.
pub fn upper_bound(instance: &FleetInstance, sigma: f64) -> Result<u64, DomainError> {
    if !(sigma > 0.0) {
        return Err(DomainError::NonPositiveDemand(sigma));
    }
    let energy: f64 = instance
        .machines
        .iter()
        .map(|m| UB_ENERGY_SHARE * m.pmax0 * m.rul_max)
        .sum();
    Ok((energy / sigma).floor() as u64)
}

pub fn report(
    schedule: &PowerSchedule,
    demand: &DemandProfile,
    instance: &FleetInstance,
    tol: f64,
) -> Result<ScheduleReport, DomainError> {
    schedule.check_shape(instance, demand.slots())?;
    let horizon = production_horizon(schedule, demand, tol)?;
    let totals = schedule.totals();
    let unmet_slots = totals
        .iter()
        .zip(demand.values())
        .filter(|(total, sigma)| !demand_met(**total, **sigma, tol))
        .count();
    let overproduction_energy = totals
        .iter()
        .zip(demand.values())
        .map(|(total, sigma)| (total - sigma).max(0.0))
        .sum::<f64>()
        * instance.slot_hours;
    let machine_starts = schedule
        .matrix()
        .rows()
        .into_iter()
        .map(|row| count_starts(row.iter().copied()))
        .collect();
    let upper_bound = match demand.constant_value() {
        Some(sigma) if sigma > 0.0 => Some(upper_bound(instance, sigma)?),
        _ => None,
    };
    let normalized_horizon = upper_bound.filter(|&ub| ub > 0).map(|ub| horizon as f64 / ub as f64);
    Ok(ScheduleReport {
        horizon,
        upper_bound,
        normalized_horizon,
        unmet_slots,
        overproduction_energy,
        machine_starts,
    })
}

/// Counts 0 -> positive transitions; a machine running at `t = 0` counts as one start.
fn count_starts(row: impl Iterator<Item = f64>) -> usize {
    let mut running = false;
    let mut starts = 0;
    for f in row {
        let on = f > 0.0;
        if on && !running {
            starts += 1;
        }
        running = on;
    }
    starts
}

pub const ORACLE_MAX_MACHINES: usize = 3;
pub const ORACLE_MAX_LEVELS: usize = 8;
pub const ORACLE_MAX_STATES: f64 = 1e7;

/// Best horizon reachable when each machine may only run at one of `levels`
/// evenly spaced fractions of its current maximum, `k / (levels - 1)`.
///
/// The search walks the decay recurrence exactly. It keeps, per slot, the set
/// of distinct reachable `fmax` vectors, and stops when no vector survives the
/// demand or when `max_slots` slots have been served.
pub fn oracle_best_horizon(
    instance: &FleetInstance,
    sigma: f64,
    levels: usize,
    max_slots: usize,
    params: &FmaxParams,
) -> Result<usize, OracleError> {
    instance.validate()?;
    params.validate()?;
    let m = instance.len();
    if m > ORACLE_MAX_MACHINES || !(2..=ORACLE_MAX_LEVELS).contains(&levels) {
        return Err(OracleError::Unsupported {
            machines: m,
            levels,
            max_machines: ORACLE_MAX_MACHINES,
            max_levels: ORACLE_MAX_LEVELS,
        });
    }
    // every decision vector per slot, over the full horizon, bounds the work
    let estimate = (levels as f64).powi(m as i32) * max_slots as f64;
    if estimate > ORACLE_MAX_STATES {
        return Err(OracleError::SearchSpaceTooLarge {
            estimate,
            limit: ORACLE_MAX_STATES,
        });
    }
    if !(sigma >= 0.0) {
        return Err(DomainError::NegativeDemand { t: 0, value: sigma }.into());
    }

    let choices = decision_vectors(m, levels);
    let thresholds: Vec<f64> = instance
        .machines
        .iter()
        .map(|mc| monotone_threshold(mc, params))
        .collect();
    let mut frontier: Vec<Vec<f64>> = vec![instance.machines.iter().map(|mc| mc.pmax0).collect()];
    let mut served = 0;
    while served < max_slots {
        let mut next: Vec<Vec<f64>> = Vec::new();
        for caps in &frontier {
            for choice in &choices {
                let outputs: Vec<f64> = caps
                    .iter()
                    .zip(choice)
                    .map(|(&cap, &k)| cap * k as f64 / (levels - 1) as f64)
                    .collect();
                if !demand_met(outputs.iter().sum(), sigma, DEFAULT_HORIZON_TOL) {
                    continue;
                }
                next.push(
                    caps.iter()
                        .zip(&outputs)
                        .zip(&instance.machines)
                        .map(|((&cap, &f), mc)| decay(cap, f, mc, params))
                        .collect(),
                );
            }
        }
        if next.is_empty() {
            break;
        }
        served += 1;
        frontier = prune_dominated(next, &thresholds);
    }
    Ok(served)
}

fn decay(cap: f64, f: f64, machine: &MachineSpec, params: &FmaxParams) -> f64 {
    if f == 0.0 {
        cap
    } else {
        (cap + params.mu * machine.slope * f.powf(params.upsilon)).max(0.0)
    }
}

fn decision_vectors(m: usize, levels: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..levels).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out
}

/// Capacity above which `cap -> decay(cap, r * cap)` is non-decreasing for
/// every `r` in `[0, 1]`: `cap >= (upsilon * mu * |slope|)^(1 / (1 - upsilon))`.
fn monotone_threshold(machine: &MachineSpec, params: &FmaxParams) -> f64 {
    let rate = params.upsilon * params.mu * machine.slope.abs();
    if params.upsilon < 1.0 {
        rate.powf(1.0 / (1.0 - params.upsilon))
    } else if rate <= 1.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Drops capacity vectors dominated by another one. `a` dominates `b` when
/// every coordinate is equal, or larger with `b` already in the range where
/// the decay map is monotone. From a dominated vector every choice yields
/// outputs and residual capacities no larger, so it can never serve longer.
fn prune_dominated(mut states: Vec<Vec<f64>>, thresholds: &[f64]) -> Vec<Vec<f64>> {
    states.sort_by(|a, b| b.iter().sum::<f64>().total_cmp(&a.iter().sum::<f64>()).then_with(|| cmp_lex(b, a)));
    states.dedup();
    let dominates = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(thresholds)
            .all(|((&x, &y), &thr)| x == y || (x > y && y >= thr))
    };
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for s in states {
        if !kept.iter().any(|k| dominates(k, &s)) {
            kept.push(s);
        }
    }
    kept
}

fn cmp_lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}
