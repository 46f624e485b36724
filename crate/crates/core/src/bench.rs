//! Seeded benchmark grid over fleet sizes, load factors and solvers.
//!
//! Every run generates its fleet from `(m, seed)`, sets a constant demand at
//! `alpha` times the nominal total, and solves over `ceil(1.2 * UB)` slots.
//! Results come back in plan order whatever the number of worker threads.
//!
//! Three CSV files describe a bench:
//!
//! - `results.csv`: one row per run, byte-stable for a given plan.
//! - `timings.csv`: measured wall time per run, keyed like the results.
//! - `summary.csv`: per-solver mean, min and max normalized horizon.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DemandProfile, FleetInstance, PowerSchedule};
use crate::error::{DomainError, IoError, SolveError};
use crate::evaluation::{report, upper_bound, DEFAULT_HORIZON_TOL};
use crate::generator::{constant_demand, generate_fleet, GeneratorConfig, LoadFactor, DEFAULT_ALPHAS};
use crate::io::SolutionFile;
use crate::mirror_prox::{solve_mirror_prox_until, MirrorProxConfig};
use crate::projection::{solve_projections_until, ProjectionConfig};
use crate::solution::{SolveResult, SolverKind, StopReason};

/// Decision horizon as a multiple of the upper bound.
pub const HORIZON_FACTOR: f64 = 1.2;

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOT_HORIZON_FILE: &str = "normalized_horizon.csv";
pub const PLOT_TIME_FILE: &str = "wall_time.csv";

/// `T = ceil(1.2 * UB)`, so the schedule has `T + 1` slots.
pub fn decision_horizon(ub: u64) -> usize {
    (HORIZON_FACTOR * ub as f64).ceil() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub machine_counts: Vec<usize>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub solvers: Vec<SolverKind>,
    /// Wall-clock budget per run, seconds.
    pub budget_secs: f64,
    pub projection: ProjectionConfig,
    pub mirror_prox: MirrorProxConfig,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            machine_counts: vec![3, 25],
            alphas: DEFAULT_ALPHAS.to_vec(),
            seeds: (1..=20).collect(),
            solvers: vec![SolverKind::Projections, SolverKind::MirrorProx],
            budget_secs: 1800.0,
            projection: ProjectionConfig::default(),
            mirror_prox: MirrorProxConfig::default(),
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |msg: &str| Err(DomainError::InvalidConfig(msg.to_string()));
        if self.machine_counts.is_empty() || self.alphas.is_empty() || self.seeds.is_empty() {
            return bad("machine counts, alphas and seeds must be non-empty");
        }
        if self.solvers.is_empty() {
            return bad("solver set must be non-empty");
        }
        if self.machine_counts.contains(&0) {
            return bad("machine counts must be >= 1");
        }
        if !(self.budget_secs > 0.0 && self.budget_secs.is_finite()) {
            return bad("budget must be a positive number of seconds");
        }
        for &alpha in &self.alphas {
            LoadFactor::new(alpha)?;
        }
        self.mirror_prox.validate()?;
        Ok(())
    }

    /// Runs in plan order: machine count, then alpha, seed and solver.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for &m in &self.machine_counts {
            for &alpha in &self.alphas {
                for &seed in &self.seeds {
                    for &solver in &self.solvers {
                        out.push(RunSpec { m, alpha, seed, solver });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSpec {
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
    pub solver: SolverKind,
}

/// Fleet, demand and horizon bound of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub instance: FleetInstance,
    pub demand: DemandProfile,
    pub upper_bound: u64,
}

pub fn scenario(m: usize, seed: u64, alpha: f64) -> Result<Scenario, DomainError> {
    let instance = generate_fleet(&GeneratorConfig::new(m, seed))?;
    scenario_for(instance, alpha)
}

/// Constant demand at `alpha` over `ceil(1.2 * UB)` slots for a given fleet.
pub fn scenario_for(instance: FleetInstance, alpha: f64) -> Result<Scenario, DomainError> {
    let alpha = LoadFactor::new(alpha)?;
    let sigma = constant_demand(&instance, alpha, 0).values()[0];
    let ub = upper_bound(&instance, sigma)?;
    let demand = constant_demand(&instance, alpha, decision_horizon(ub));
    Ok(Scenario {
        instance,
        demand,
        upper_bound: ub,
    })
}

/// Runs one solver on a scenario and returns the result with its wall time.
pub fn solve(
    solver: SolverKind,
    instance: &FleetInstance,
    demand: &DemandProfile,
    plan: &BenchPlan,
    deadline: Option<Instant>,
) -> Result<(SolveResult, Duration), SolveError> {
    let start = Instant::now();
    let result = match solver {
        SolverKind::Projections => {
            let init = PowerSchedule::zeros(instance.len(), demand.slots());
            solve_projections_until(instance, demand, &plan.projection, &init, deadline)?
        }
        SolverKind::MirrorProx => solve_mirror_prox_until(instance, demand, &plan.mirror_prox, deadline)?,
    };
    Ok((result, start.elapsed()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Timeout,
}

/// One row of `results.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
    pub solver: SolverKind,
    pub status: RunStatus,
    pub horizon: usize,
    pub upper_bound: u64,
    pub normalized_horizon: f64,
    pub iterations: usize,
    pub unmet_slots: usize,
    #[serde(rename = "overproduction_Wh")]
    pub overproduction_wh: f64,
}

/// One row of `timings.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
    pub solver: SolverKind,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRun {
    pub record: RunRecord,
    pub timing: TimingRecord,
}

pub fn run_one(spec: &RunSpec, plan: &BenchPlan) -> Result<BenchRun, SolveError> {
    let sc = scenario(spec.m, spec.seed, spec.alpha)?;
    let deadline = Instant::now() + Duration::from_secs_f64(plan.budget_secs);
    let (result, elapsed) = solve(spec.solver, &sc.instance, &sc.demand, plan, Some(deadline))?;
    let rep = report(&result.schedule, &sc.demand, &sc.instance, DEFAULT_HORIZON_TOL)?;
    let status = if result.stop_reason == StopReason::Deadline {
        RunStatus::Timeout
    } else {
        RunStatus::Ok
    };
    Ok(BenchRun {
        record: RunRecord {
            m: spec.m,
            alpha: spec.alpha,
            seed: spec.seed,
            solver: spec.solver,
            status,
            horizon: rep.horizon,
            upper_bound: sc.upper_bound,
            normalized_horizon: rep.horizon as f64 / sc.upper_bound as f64,
            iterations: result.iterations,
            unmet_slots: rep.unmet_slots,
            overproduction_wh: rep.overproduction_energy,
        },
        timing: TimingRecord {
            m: spec.m,
            alpha: spec.alpha,
            seed: spec.seed,
            solver: spec.solver,
            wall_time_ms: elapsed.as_secs_f64() * 1e3,
        },
    })
}

/// Runs the whole plan on up to `jobs` threads. `progress` sees each run as
/// it finishes, in completion order; the returned runs are in plan order.
pub fn run_bench(
    plan: &BenchPlan,
    jobs: usize,
    progress: Option<&(dyn Fn(&BenchRun) + Sync)>,
) -> Result<Vec<BenchRun>, SolveError> {
    plan.validate()?;
    let runs = plan.runs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| DomainError::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| {
        runs.par_iter()
            .map(|spec| {
                let run = run_one(spec, plan)?;
                if let Some(cb) = progress {
                    cb(&run);
                }
                Ok(run)
            })
            .collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: SolverKind,
    pub runs: usize,
    pub mean_normalized_horizon: f64,
    pub min_normalized_horizon: f64,
    pub max_normalized_horizon: f64,
}

/// Per-solver statistics, solvers in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut solvers: Vec<SolverKind> = Vec::new();
    for r in records {
        if !solvers.contains(&r.solver) {
            solvers.push(r.solver);
        }
    }
    solvers
        .into_iter()
        .map(|solver| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.solver == solver)
                .map(|r| r.normalized_horizon)
                .collect();
            SummaryRow {
                solver,
                runs: values.len(),
                mean_normalized_horizon: values.iter().sum::<f64>() / values.len() as f64,
                min_normalized_horizon: values.iter().copied().fold(f64::INFINITY, f64::min),
                max_normalized_horizon: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<(), IoError> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(input: impl Read) -> Result<Vec<T>, IoError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect()
}

fn csv_error(e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    IoError::Csv { line, message }
}

/// Writes the three bench files into `dir` and returns their paths.
pub fn write_bench(runs: &[BenchRun], dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(dir)?;
    let records: Vec<RunRecord> = runs.iter().map(|r| r.record.clone()).collect();
    let timings: Vec<TimingRecord> = runs.iter().map(|r| r.timing.clone()).collect();
    let paths = [RESULTS_FILE, TIMINGS_FILE, SUMMARY_FILE].map(|name| dir.join(name));
    write_csv(&records, std::fs::File::create(&paths[0])?)?;
    write_csv(&timings, std::fs::File::create(&paths[1])?)?;
    write_csv(&summarize(&records), std::fs::File::create(&paths[2])?)?;
    Ok(paths.to_vec())
}

#[derive(Serialize)]
struct HorizonPoint {
    alpha: f64,
    solver: SolverKind,
    normalized_horizon: f64,
}

#[derive(Serialize)]
struct TimePoint {
    alpha: f64,
    solver: SolverKind,
    wall_time_ms: f64,
}

/// Writes the horizon-vs-alpha file from the results, and the time-vs-alpha
/// file when timings are given. One data point per run.
pub fn emit_plotdata(
    records: &[RunRecord],
    timings: Option<&[TimingRecord]>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let horizon: Vec<HorizonPoint> = records
        .iter()
        .map(|r| HorizonPoint {
            alpha: r.alpha,
            solver: r.solver,
            normalized_horizon: r.normalized_horizon,
        })
        .collect();
    let path = out_dir.join(PLOT_HORIZON_FILE);
    write_csv_with_header(&horizon, &["alpha", "solver", "normalized_horizon"], &path)?;
    written.push(path);
    if let Some(timings) = timings {
        let time: Vec<TimePoint> = timings
            .iter()
            .map(|t| TimePoint {
                alpha: t.alpha,
                solver: t.solver,
                wall_time_ms: t.wall_time_ms,
            })
            .collect();
        let path = out_dir.join(PLOT_TIME_FILE);
        write_csv_with_header(&time, &["alpha", "solver", "wall_time_ms"], &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Like [`write_csv`], but still writes the header for an empty table.
fn write_csv_with_header<T: Serialize>(rows: &[T], header: &[&str], path: &Path) -> Result<(), IoError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(std::fs::File::create(path)?);
    writer.write_record(header).map_err(csv_error)?;
    for row in rows {
        writer.serialize(row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-slot trace of one solution: `t`, then `f_1..f_m`, then `fmax_1..fmax_m`.
pub fn write_trace(solution: &SolutionFile, out: impl Write) -> Result<(), IoError> {
    let schedule = solution.schedule()?;
    let fmax = solution.fmax()?;
    if fmax.matrix().dim() != schedule.matrix().dim() {
        return Err(DomainError::DimensionMismatch {
            expected: schedule.matrix().dim(),
            found: fmax.matrix().dim(),
        }
        .into());
    }
    let m = schedule.machines();
    let mut writer = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=m).map(|j| format!("f_{j}")))
        .chain((1..=m).map(|j| format!("fmax_{j}")))
        .collect();
    writer.write_record(&header).map_err(csv_error)?;
    for t in 0..schedule.slots() {
        let row: Vec<String> = std::iter::once(t.to_string())
            .chain(schedule.column(t).iter().map(f64::to_string))
            .chain(fmax.column(t).iter().map(f64::to_string))
            .collect();
        writer.write_record(&row).map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}
