//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use fleetsched::bench::{self, run_bench, scenario, write_bench, BenchPlan};
use fleetsched::evaluation::{oracle_best_horizon, production_horizon, upper_bound, DEFAULT_HORIZON_TOL};
use fleetsched::generator::DEFAULT_ALPHAS;
use fleetsched::mirror_prox::{penalty_gradient, penalty_value, MirrorProxConfig};
use fleetsched::{
    check_feasibility, DemandProfile, FleetInstance, FmaxParams, FmaxTrajectory, MachineSpec, PowerSchedule, SolverKind,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LARGE_FLEET: usize = 25;
const LARGE_SEEDS: u64 = 20;
const MP_BAND: (f64, f64) = (0.50, 0.80);
const PROJ_BAND: (f64, f64) = (0.25, 0.55);
const MP_WIN_SHARE: f64 = 0.80;

const SMALL_FLEET: usize = 3;
const SMALL_ALPHA: f64 = 0.4;
const SMALL_SEEDS: u64 = 10;
const SMALL_WINS: usize = 8;

const FEASIBILITY_TOL: f64 = 1e-9;
const GRADIENT_REL_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;
const PROJECTION_LIMIT_SECS: f64 = 60.0;
const MIRROR_PROX_LIMIT_SECS: f64 = 1800.0;

fn verdict(criterion: u32, title: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion} [{title}]: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    // straight to the handle so the line shows without --nocapture
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} failed: {detail}");
}

struct Run {
    m: usize,
    alpha: f64,
    seed: u64,
    solver: SolverKind,
    horizon: usize,
    upper_bound: u64,
    wall_secs: f64,
    feasible: bool,
}

impl Run {
    fn normalized(&self) -> f64 {
        self.horizon as f64 / self.upper_bound as f64
    }
}

fn solve_grid(m: usize, alphas: &[f64], seeds: impl Iterator<Item = u64> + Clone) -> Vec<Run> {
    let plan = BenchPlan::default();
    let mut runs = Vec::new();
    for &alpha in alphas {
        for seed in seeds.clone() {
            let sc = scenario(m, seed, alpha).unwrap();
            for solver in [SolverKind::Projections, SolverKind::MirrorProx] {
                let (res, elapsed) = bench::solve(solver, &sc.instance, &sc.demand, &plan, None).unwrap();
                let horizon = production_horizon(&res.schedule, &sc.demand, DEFAULT_HORIZON_TOL).unwrap();
                let feasible = check_feasibility(&res.schedule, &sc.instance, &FmaxParams::default(), FEASIBILITY_TOL)
                    .unwrap()
                    .is_feasible();
                runs.push(Run {
                    m,
                    alpha,
                    seed,
                    solver,
                    horizon,
                    upper_bound: sc.upper_bound,
                    wall_secs: elapsed.as_secs_f64(),
                    feasible,
                });
            }
        }
    }
    runs
}

fn large_grid() -> &'static [Run] {
    static GRID: OnceLock<Vec<Run>> = OnceLock::new();
    GRID.get_or_init(|| solve_grid(LARGE_FLEET, &DEFAULT_ALPHAS, 1..=LARGE_SEEDS))
}

fn small_grid() -> &'static [Run] {
    static GRID: OnceLock<Vec<Run>> = OnceLock::new();
    GRID.get_or_init(|| solve_grid(SMALL_FLEET, &[SMALL_ALPHA], 1..=SMALL_SEEDS))
}

fn by_solver(runs: &[Run], solver: SolverKind) -> Vec<&Run> {
    runs.iter().filter(|r| r.solver == solver).collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

#[test]
fn criterion_1_normalized_horizon_bands() {
    let runs = large_grid();
    let proj = by_solver(runs, SolverKind::Projections);
    let mp = by_solver(runs, SolverKind::MirrorProx);
    let proj_mean = mean(proj.iter().map(|r| r.normalized()));
    let mp_mean = mean(mp.iter().map(|r| r.normalized()));
    let wins = proj
        .iter()
        .zip(&mp)
        .filter(|(p, q)| {
            assert_eq!((p.alpha, p.seed), (q.alpha, q.seed));
            q.horizon >= p.horizon
        })
        .count();
    let share = wins as f64 / proj.len() as f64;
    let mp_max = mp.iter().map(|r| r.normalized()).fold(0.0, f64::max);
    let proj_max = proj.iter().map(|r| r.normalized()).fold(0.0, f64::max);
    let pass = (MP_BAND.0..=MP_BAND.1).contains(&mp_mean)
        && (PROJ_BAND.0..=PROJ_BAND.1).contains(&proj_mean)
        && share >= MP_WIN_SHARE;
    verdict(
        1,
        "normalized horizon bands, m=25",
        pass,
        &format!(
            "mirror-prox mean {mp_mean:.4} (max {mp_max:.4}) in [{}, {}]; projections mean {proj_mean:.4} \
             (max {proj_max:.4}) in [{}, {}]; mirror-prox >= projections on {wins}/{} pairs",
            MP_BAND.0,
            MP_BAND.1,
            PROJ_BAND.0,
            PROJ_BAND.1,
            proj.len()
        ),
    );
}

#[test]
fn criterion_2_small_fleet_ordering() {
    let runs = small_grid();
    let proj = by_solver(runs, SolverKind::Projections);
    let mp = by_solver(runs, SolverKind::MirrorProx);
    let wins = proj.iter().zip(&mp).filter(|(p, q)| q.horizon > p.horizon).count();
    let in_range = runs
        .iter()
        .all(|r| r.horizon as f64 >= 0.2 * r.upper_bound as f64 && r.horizon as u64 <= r.upper_bound);
    let pairs: Vec<String> = proj
        .iter()
        .zip(&mp)
        .map(|(p, q)| format!("{}:{}", q.horizon, p.horizon))
        .collect();
    verdict(
        2,
        "m=3 alpha=0.4 ordering",
        wins >= SMALL_WINS && in_range,
        &format!(
            "mirror-prox > projections on {wins}/{} seeds, need {SMALL_WINS}; all in [0.2 UB, UB]: {in_range}; \
             H mirror-prox:projections {}",
            proj.len(),
            pairs.join(" ")
        ),
    );
}

#[test]
fn criterion_3_upper_bound_soundness() {
    let runs: Vec<&Run> = large_grid().iter().chain(small_grid()).collect();
    let violations: Vec<String> = runs
        .iter()
        .filter(|r| r.horizon as u64 > r.upper_bound)
        .map(|r| format!("m={} alpha={} seed={} {}", r.m, r.alpha, r.seed, r.solver))
        .collect();
    verdict(
        3,
        "horizon <= UB",
        violations.is_empty(),
        &format!("{} violations over {} runs {violations:?}", violations.len(), runs.len()),
    );
}

#[test]
fn criterion_4_feasibility() {
    let runs: Vec<&Run> = large_grid().iter().chain(small_grid()).collect();
    let infeasible = runs.iter().filter(|r| !r.feasible).count();
    verdict(
        4,
        "feasibility at tol 1e-9",
        infeasible == 0,
        &format!("{infeasible} infeasible schedules over {} runs", runs.len()),
    );
}

/// Largest entrywise relative gap between the analytic penalty gradient and
/// central differences of the penalty value, `fmax` held fixed.
fn gradient_gap(rng: &mut ChaCha8Rng, cfg: &MirrorProxConfig, low: f64) -> f64 {
    let m = rng.gen_range(1..=3);
    let slots = rng.gen_range(2..=11);
    // small, long-lived machines keep the recurrence below clear of zero
    let machines = (0..m)
        .map(|_| {
            let p = rng.gen_range(1.0..5.0);
            MachineSpec::from_rul(p, 0.15 * p, rng.gen_range(100.0..200.0)).unwrap()
        })
        .collect();
    let inst = FleetInstance::new(machines).unwrap();
    let f = Array2::from_shape_fn((m, slots), |(j, _)| rng.gen_range(low..inst.machines[j].pmax0));
    let sched = PowerSchedule::new(f.clone()).unwrap();
    // frozen fmax a little below the penalty's own recurrence, so every
    // slope exponent lies in [-1, 0] and no term dwarfs the others
    let mut caps = Array2::zeros((m, slots));
    for (j, machine) in inst.machines.iter().enumerate() {
        caps[(j, 0)] = machine.pmax0;
        for t in 1..slots {
            let step = cfg.mu_prime * machine.slope * f[(j, t - 1)].powf(cfg.upsilon_prime);
            caps[(j, t)] = (caps[(j, t - 1)] + step - rng.gen_range(0.0..0.01)).max(0.0);
        }
    }
    let fmax = FmaxTrajectory::new(caps).unwrap();
    // keep the demand residual small so no exponent saturates
    let demand = DemandProfile::new(
        sched
            .totals()
            .iter()
            .map(|total| (total + rng.gen_range(-0.05..0.05)).max(0.0))
            .collect(),
    )
    .unwrap();
    let analytic = penalty_gradient(&sched, &fmax, &inst, &demand, cfg).unwrap();
    let mut gap: f64 = 0.0;
    let scale = analytic.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
    for ((j, t), &g) in analytic.indexed_iter() {
        let at = |x: f64| {
            let mut shifted = f.clone();
            shifted[(j, t)] = x;
            penalty_value(&PowerSchedule::new(shifted).unwrap(), &fmax, &inst, &demand, cfg).unwrap()
        };
        let x = f[(j, t)];
        let numeric = (at(x + FD_STEP) - at(x - FD_STEP)) / (2.0 * FD_STEP);
        let denom = numeric.abs().max(1e-9 * scale).max(f64::MIN_POSITIVE);
        gap = gap.max((g - numeric).abs() / denom);
    }
    gap
}

#[test]
fn criterion_5_gradient_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let unit_power = MirrorProxConfig {
        upsilon_prime: 1.0,
        ..Default::default()
    };
    let defaults = MirrorProxConfig::default();
    let mut worst_unit: f64 = 0.0;
    let mut worst_default: f64 = 0.0;
    for _ in 0..20 {
        worst_unit = worst_unit.max(gradient_gap(&mut rng, &unit_power, unit_power.f_floor));
        // the f^(upsilon' - 1) factor is singular at 0, so stay clear of the floor
        worst_default = worst_default.max(gradient_gap(&mut rng, &defaults, 0.01));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        5,
        "gradient vs central differences",
        worst_unit < GRADIENT_REL_TOL && worst_default < GRADIENT_REL_TOL && secs < 10.0,
        &format!(
            "max relative error {worst_unit:.2e} with upsilon'=1, {worst_default:.2e} with upsilon'={}, \
             20 instances each, {secs:.2} s",
            defaults.upsilon_prime
        ),
    );
}

#[test]
fn criterion_6_solver_speed() {
    let runs = large_grid();
    let slowest = |solver| {
        by_solver(runs, solver)
            .iter()
            .map(|r| r.wall_secs)
            .fold(0.0, f64::max)
    };
    let proj = slowest(SolverKind::Projections);
    let mp = slowest(SolverKind::MirrorProx);
    verdict(
        6,
        "m=25 solve times",
        proj < PROJECTION_LIMIT_SECS && mp < MIRROR_PROX_LIMIT_SECS,
        &format!(
            "slowest projections {proj:.2} s (limit {PROJECTION_LIMIT_SECS}), slowest mirror-prox {mp:.2} s \
             (limit {MIRROR_PROX_LIMIT_SECS})"
        ),
    );
}

#[test]
fn criterion_7_oracle_consistency() {
    let params = FmaxParams::default();
    let fleet = |ms: &[(f64, f64)]| {
        FleetInstance::new(
            ms.iter()
                .map(|&(p, r)| MachineSpec::from_rul(p, 0.15 * p, r).unwrap())
                .collect(),
        )
        .unwrap()
    };
    // (machines, sigma, levels, frozen horizon) with T = 50, so 51 slots at most
    let cases: [(&[(f64, f64)], f64, usize, usize); 14] = [
        (&[(10.0, 100.0)], 5.0, 2, 51),
        (&[(10.0, 100.0)], 5.0, 3, 51),
        (&[(10.0, 100.0)], 9.0, 2, 26),
        (&[(10.0, 100.0)], 9.0, 3, 26),
        (&[(500.0, 40.0)], 400.0, 2, 7),
        (&[(500.0, 40.0)], 400.0, 3, 7),
        (&[(10.0, 100.0), (8.0, 60.0)], 15.0, 2, 35),
        (&[(10.0, 100.0), (8.0, 60.0)], 15.0, 3, 35),
        (&[(10.0, 100.0), (12.0, 80.0)], 19.0, 2, 30),
        (&[(10.0, 100.0), (12.0, 80.0)], 19.0, 3, 30),
        (&[(500.0, 40.0), (480.0, 30.0)], 700.0, 2, 9),
        (&[(500.0, 40.0), (480.0, 30.0)], 700.0, 3, 9),
        (&[(500.0, 40.0), (480.0, 30.0)], 450.0, 2, 20),
        (&[(500.0, 40.0), (480.0, 30.0)], 450.0, 3, 21),
    ];
    let mut above_ub = Vec::new();
    let mut drifted = Vec::new();
    for (i, &(ms, sigma, levels, frozen)) in cases.iter().enumerate() {
        let inst = fleet(ms);
        let h = oracle_best_horizon(&inst, sigma, levels, 51, &params).unwrap();
        let ub = upper_bound(&inst, sigma).unwrap();
        if h as u64 > ub {
            above_ub.push(i);
        }
        if h != frozen {
            drifted.push(format!("case {i}: {h} != {frozen}"));
        }
    }
    verdict(
        7,
        "oracle <= UB and frozen constants",
        above_ub.is_empty() && drifted.is_empty(),
        &format!(
            "{} cases, above UB {above_ub:?}, changed {drifted:?}",
            cases.len()
        ),
    );
}

#[test]
fn criterion_8_bench_determinism() {
    let plan = BenchPlan {
        machine_counts: vec![3],
        alphas: vec![0.5, 0.8],
        seeds: vec![1, 2],
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, jobs) in [("first", 1), ("second", 1), ("parallel", 2)] {
        let runs = run_bench(&plan, jobs, None).unwrap();
        let target = dir.path().join(name);
        write_bench(&runs, &target).unwrap();
        let results = std::fs::read(target.join(bench::RESULTS_FILE)).unwrap();
        let summary = std::fs::read(target.join(bench::SUMMARY_FILE)).unwrap();
        outputs.push((results, summary));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        8,
        "bench bytes across runs and --jobs",
        identical,
        &format!(
            "{} runs per bench, results.csv {} bytes, identical across 2 sequential runs and jobs=2: {identical}",
            plan.runs().len(),
            outputs[0].0.len()
        ),
    );
}
