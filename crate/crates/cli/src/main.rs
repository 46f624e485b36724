use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fleetsched::bench::{
    self, emit_plotdata, run_bench, scenario_for, write_bench, BenchPlan, BenchRun, RunRecord, TimingRecord,
};
use fleetsched::evaluation::{report, DEFAULT_HORIZON_TOL};
use fleetsched::generator::{generate_fleet, GeneratorConfig, DEFAULT_ALPHAS};
use fleetsched::io::{read_instance, read_solution, to_json, SolutionFile};
use fleetsched::mirror_prox::MirrorProxConfig;
use fleetsched::projection::ProjectionConfig;
use fleetsched::{DemandProfile, DomainError, SolverKind};

/// Schedules fleets of degrading power sources.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Random seed; the first seed of a bench.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file, or directory for `bench` and `plotdata`. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `bench`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random fleet instance.
    Gen {
        #[arg(long)]
        machines: usize,
    },
    /// Solve one instance at a load factor.
    Solve(SolveArgs),
    /// Evaluate a solution against its demand.
    Eval {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        /// Relative tolerance when deciding the demand was met.
        #[arg(long, default_value_t = DEFAULT_HORIZON_TOL)]
        tol: f64,
    },
    /// Analytic horizon ceiling for an instance at a load factor.
    Ub {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        alpha: f64,
    },
    /// Run a seeded benchmark grid.
    Bench(BenchArgs),
    /// Turn bench results and solutions into plot-ready CSV.
    Plotdata {
        /// Bench output directory, or a results CSV file.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Solution files to export as per-slot traces.
        #[arg(long)]
        solution: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    solver: SolverKind,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// Decision horizon T; defaults to ceil(1.2 * UB).
    #[arg(long)]
    horizon: Option<usize>,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    epsilon_factor: Option<f64>,
    /// Projection interval length in slots.
    #[arg(long)]
    delta_t: Option<usize>,
    /// Mirror Prox step size.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_dem: Option<f64>,
    #[arg(long)]
    lambda_slope: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    mu_prime: Option<f64>,
    #[arg(long)]
    upsilon_prime: Option<f64>,
    #[arg(long)]
    w_grad: Option<f64>,
    #[arg(long)]
    f_floor: Option<f64>,
    /// Evaluate the penalties in watts instead of mean-demand units.
    #[arg(long)]
    watts: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [3, 25])]
    machines: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHAS)]
    alphas: Vec<f64>,
    /// Number of consecutive seeds, starting at --seed (default 1).
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [SolverKind::Projections, SolverKind::MirrorProx])]
    solvers: Vec<SolverKind>,
    /// Per-run wall-clock budget in seconds.
    #[arg(long, default_value_t = 1800.0)]
    budget: f64,
}

/// A failure the user caused by how the command was invoked.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let Cli {
        seed,
        out,
        jobs,
        quiet,
        command,
    } = cli;
    match command {
        Command::Gen { machines } => {
            let cfg = GeneratorConfig::new(machines, seed.unwrap_or(0));
            let instance = generate_fleet(&cfg).map_err(|e| usage(e.to_string()))?;
            emit(out.as_deref(), &to_json(&instance)?)
        }
        Command::Solve(args) => solve(args, out.as_deref(), quiet),
        Command::Eval {
            instance,
            solution,
            tol,
        } => {
            let instance = read_instance(&instance).with_context(|| format!("reading {}", instance.display()))?;
            let solution = read_solution(&solution).with_context(|| format!("reading {}", solution.display()))?;
            let schedule = solution.schedule()?;
            let rep = report(&schedule, &solution.demand, &instance, tol)?;
            emit(out.as_deref(), &to_json(&rep)?)
        }
        Command::Ub { instance, alpha } => {
            let instance = read_instance(&instance).with_context(|| format!("reading {}", instance.display()))?;
            let sc = scenario_for(instance, alpha).map_err(|e| usage(e.to_string()))?;
            let value = serde_json::json!({
                "upper_bound": sc.upper_bound,
                "sigma": sc.demand.values()[0],
                "decision_horizon": sc.demand.slots() - 1,
            });
            emit(out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&value)?))
        }
        Command::Bench(args) => {
            let first = seed.unwrap_or(1);
            let plan = BenchPlan {
                machine_counts: args.machines,
                alphas: args.alphas,
                seeds: (first..first + args.seeds).collect(),
                solvers: args.solvers,
                budget_secs: args.budget,
                ..Default::default()
            };
            plan.validate().map_err(|e| usage(e.to_string()))?;
            let Some(dir) = out else {
                return Err(usage("bench needs --out DIR"));
            };
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let total = plan.runs().len();
            let done = std::sync::atomic::AtomicUsize::new(0);
            let progress = |run: &BenchRun| {
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                let r = &run.record;
                eprintln!(
                    "[{n}/{total}] m={} alpha={} seed={} {}: H/UB={:.3} ({:?}, {:.0} ms)",
                    r.m, r.alpha, r.seed, r.solver, r.normalized_horizon, r.status, run.timing.wall_time_ms
                );
            };
            let runs = run_bench(&plan, jobs, (!quiet).then_some(&progress as _))?;
            let paths = write_bench(&runs, &dir)?;
            if !quiet {
                for row in bench::summarize(&runs.iter().map(|r| r.record.clone()).collect::<Vec<_>>()) {
                    eprintln!(
                        "{}: mean {:.3}, min {:.3}, max {:.3} over {} runs",
                        row.solver,
                        row.mean_normalized_horizon,
                        row.min_normalized_horizon,
                        row.max_normalized_horizon,
                        row.runs
                    );
                }
                for p in paths {
                    eprintln!("wrote {}", p.display());
                }
            }
            Ok(())
        }
        Command::Plotdata { results, solution } => {
            let Some(dir) = out else {
                return Err(usage("plotdata needs --out DIR"));
            };
            if results.is_none() && solution.is_empty() {
                return Err(usage("plotdata needs --results and/or --solution"));
            }
            let mut written = Vec::new();
            if let Some(results) = results {
                let (records, timings) = read_results(&results)?;
                written.extend(emit_plotdata(&records, timings.as_deref(), &dir)?);
            }
            for path in &solution {
                let file = read_solution(path).with_context(|| format!("reading {}", path.display()))?;
                fs::create_dir_all(&dir)?;
                let stem = path.file_stem().map_or("solution".into(), |s| s.to_string_lossy());
                let target = dir.join(format!("{stem}_trace.csv"));
                bench::write_trace(&file, fs::File::create(&target)?)?;
                written.push(target);
            }
            if !quiet {
                for p in written {
                    eprintln!("wrote {}", p.display());
                }
            }
            Ok(())
        }
    }
}

fn solve(args: SolveArgs, out: Option<&Path>, quiet: bool) -> anyhow::Result<()> {
    let instance = read_instance(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    let mut sc = scenario_for(instance, args.alpha).map_err(|e| usage(e.to_string()))?;
    if let Some(t) = args.horizon {
        sc.demand = DemandProfile::constant(sc.demand.values()[0], t)?;
    }

    let mut projection = ProjectionConfig::default();
    let mut mp = MirrorProxConfig::default();
    if let Some(n) = args.max_iters {
        projection.max_iters = n;
        mp.max_iters = n;
    }
    if let Some(e) = args.epsilon_factor {
        projection.epsilon_factor = e;
        mp.epsilon_factor = e;
    }
    if let Some(d) = args.delta_t {
        projection.delta_t = d;
    }
    let overrides = [
        (args.lambda, &mut mp.lambda_step),
        (args.lambda_dem, &mut mp.lambda_dem),
        (args.lambda_slope, &mut mp.lambda_slope),
        (args.gamma, &mut mp.gamma),
        (args.delta, &mut mp.delta),
        (args.mu_prime, &mut mp.mu_prime),
        (args.upsilon_prime, &mut mp.upsilon_prime),
        (args.w_grad, &mut mp.w_grad),
        (args.f_floor, &mut mp.f_floor),
    ];
    for (value, field) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    mp.normalize_units = !args.watts;
    let config_check = match args.solver {
        SolverKind::Projections => projection.validate(sc.demand.slots()),
        SolverKind::MirrorProx => mp.validate(),
    };
    config_check.map_err(|e: DomainError| usage(e.to_string()))?;
    let deadline = match args.budget {
        Some(secs) if secs > 0.0 && secs.is_finite() => Some(Instant::now() + Duration::from_secs_f64(secs)),
        Some(secs) => bail!(UsageError(format!("budget must be > 0 seconds, got {secs}"))),
        None => None,
    };

    let plan = BenchPlan {
        projection,
        mirror_prox: mp,
        ..Default::default()
    };
    if !quiet {
        eprintln!(
            "solving {} machines over {} slots with {} (UB = {})",
            sc.instance.len(),
            sc.demand.slots(),
            args.solver,
            sc.upper_bound
        );
    }
    let (result, elapsed) = bench::solve(args.solver, &sc.instance, &sc.demand, &plan, deadline)?;
    if !quiet {
        eprintln!(
            "{} iterations ({:?}) in {:.1} s",
            result.iterations,
            result.stop_reason,
            elapsed.as_secs_f64()
        );
    }
    let file = SolutionFile::new(
        args.solver,
        Some(args.alpha),
        &sc.demand,
        &result,
        elapsed.as_secs_f64() * 1e3,
    );
    emit(out, &to_json(&file)?)
}

fn read_results(path: &Path) -> anyhow::Result<(Vec<RunRecord>, Option<Vec<TimingRecord>>)> {
    let (results, timings) = if path.is_dir() {
        (path.join(bench::RESULTS_FILE), Some(path.join(bench::TIMINGS_FILE)))
    } else {
        (path.to_path_buf(), path.parent().map(|p| p.join(bench::TIMINGS_FILE)))
    };
    let records = bench::read_csv(fs::File::open(&results).with_context(|| format!("opening {}", results.display()))?)
        .with_context(|| format!("parsing {}", results.display()))?;
    let timings = match timings.filter(|p| p.is_file()) {
        Some(p) => Some(bench::read_csv(fs::File::open(&p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    Ok((records, timings))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}
