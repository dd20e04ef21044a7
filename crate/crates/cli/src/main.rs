//! `uavloc`: run missions, sweep them, plan standalone and self-validate.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use uavloc_core::planner::{self, PlanContext, Target};
use uavloc_core::scan::plan_scan;
use uavloc_core::sim::{collect_metrics, run_mission, write_trace};
use uavloc_core::validate::{self, Effort, KappaCalibration};
use uavloc_core::{seed, MetricsRow, PlannerKind, Scenario};

#[derive(Parser)]
#[command(name = "uavloc", version, about = "UAV search-and-localization mission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and write its trace, report and metrics row.
    Run(RunArgs),
    /// Run every (persons, seed, planner) combination into one metrics table.
    Sweep(SweepArgs),
    /// Plan tours for a set of estimates and print them.
    Plan(PlanArgs),
    /// Check the numerics against independent oracles and calibrate kappa.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON); omitted fields take their defaults.
    #[arg(long)]
    scenario: PathBuf,
    /// Kappa sidecar written by `validate`; overrides `swarm.kappa`.
    #[arg(long)]
    kappa: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "epso")]
    planner: String,
    /// Seed index; the scenario's master seed stays fixed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the scenario's person count.
    #[arg(long)]
    persons: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Record planner wall time. Off by default so reruns are byte-identical.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Person counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    persons: Vec<usize>,
    /// Number of seed indices, starting at 0.
    #[arg(long)]
    seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "epso,pso,ga")]
    planners: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to one per core.
    #[arg(long, env = "UAVLOC_WORKERS")]
    workers: Option<usize>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct PlanArgs {
    /// JSON array of targets: id, position, velocity, ref_time, error_bound.
    #[arg(long)]
    estimates: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "epso")]
    planner: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the whole plan as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario whose parameters are checked; defaults otherwise.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory for the kappa sidecar.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fewer draws and trials; for smoke tests.
    #[arg(long)]
    quick: bool,
}

/// An exit code with the message explaining it.
struct Failure {
    code: u8,
    message: String,
}

fn config(message: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: message.to_string(),
    }
}

type Outcome = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_scenario(common: &Common) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(&common.scenario)
        .map_err(|e| config(format!("{}: {e}", common.scenario.display())))?;
    let mut s = Scenario::from_json(&text).map_err(|e| config(format!("{}: {e}", common.scenario.display())))?;
    if let Some(path) = &common.kappa {
        let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        let cal: KappaCalibration =
            serde_json::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
        s.swarm.kappa = cal.kappa;
        s.swarm.validate().map_err(config)?;
    }
    Ok(s)
}

fn parse_planner(name: &str) -> Result<PlannerKind, Failure> {
    name.parse().map_err(config)
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| io_failure(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_failure(path, e))
}

fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut out = String::from(MetricsRow::HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

fn cmd_run(a: RunArgs) -> Outcome {
    let mut s = load_scenario(&a.common)?;
    if let Some(n) = a.persons {
        s.person_count = n;
        s = uavloc_core::model::validate_scenario(s.to_raw()).map_err(config)?;
    }
    let kind = parse_planner(&a.planner)?;
    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;

    let mut report = run_mission(&s, kind, a.seed).map_err(config)?;
    if !a.timing {
        report.planner_wall_time = 0.0;
    }
    let mut row = collect_metrics(&report);
    if !a.timing {
        row = row.without_timing();
    }

    let trace_path = a.out.join("trace.jsonl");
    let file = fs::File::create(&trace_path).map_err(|e| io_failure(&trace_path, e))?;
    write_trace(&report, BufWriter::new(file)).map_err(|e| io_failure(&trace_path, e))?;
    let json = serde_json::to_vec_pretty(&report).map_err(config)?;
    write_atomic(&a.out.join("report.json"), &json)?;
    write_atomic(&a.out.join("metrics.csv"), metrics_table(&[row.clone()]).as_bytes())?;

    println!("makespan {:.3} s", row.makespan);
    println!("max error {:.3} m", row.max_error);
    if report.infeasible_accuracy {
        let bad: Vec<String> = report
            .persons
            .iter()
            .filter(|p| !p.met_e_th)
            .map(|p| p.id.to_string())
            .collect();
        return Err(Failure {
            code: 2,
            message: format!(
                "accuracy threshold {} m cannot be met for every person (missed: {})",
                s.e_th,
                bad.join(" ")
            ),
        });
    }
    Ok(ExitCode::SUCCESS)
}

struct RowSpec {
    persons: usize,
    seed: u64,
    planner: PlannerKind,
}

impl RowSpec {
    fn stem(&self) -> String {
        format!("s{}_seed{}_{}", self.persons, self.seed, self.planner)
    }
}

fn cmd_sweep(a: SweepArgs) -> Outcome {
    let base = load_scenario(&a.common)?;
    if a.persons.is_empty() || a.seeds == 0 || a.planners.is_empty() {
        return Err(config("sweep axes must be non-empty"));
    }
    let planners = a
        .planners
        .iter()
        .map(|p| parse_planner(p))
        .collect::<Result<Vec<_>, _>>()?;
    let rows_dir = a.out.join("rows");
    fs::create_dir_all(&rows_dir).map_err(|e| io_failure(&rows_dir, e))?;

    let mut specs = Vec::new();
    for &persons in &a.persons {
        for seed in 0..a.seeds {
            for &planner in &planners {
                specs.push(RowSpec { persons, seed, planner });
            }
        }
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(config)?;
    let results: Vec<Result<MetricsRow, String>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let mut s = base.clone();
                s.person_count = spec.persons;
                let s = uavloc_core::model::validate_scenario(s.to_raw()).map_err(|e| e.to_string())?;
                let report = run_mission(&s, spec.planner, spec.seed).map_err(|e| e.to_string())?;
                let mut row = collect_metrics(&report);
                if !a.timing {
                    row = row.without_timing();
                }
                let path = rows_dir.join(format!("{}.csv", spec.stem()));
                write_atomic(&path, metrics_table(&[row.clone()]).as_bytes()).map_err(|f| f.message)?;
                Ok(row)
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = String::from("persons,seed,planner,error\n");
    let mut failed = 0;
    for (spec, result) in specs.iter().zip(results) {
        match result {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                eprintln!("row {} failed: {e}", spec.stem());
                failures.push_str(&format!(
                    "{},{},{},\"{}\"\n",
                    spec.persons,
                    spec.seed,
                    spec.planner,
                    e.replace('"', "'")
                ));
            }
        }
    }
    write_atomic(&a.out.join("metrics.csv"), metrics_table(&rows).as_bytes())?;
    if failed > 0 {
        write_atomic(&a.out.join("failures.csv"), failures.as_bytes())?;
    }
    println!("{} rows, {failed} failed", specs.len());
    Ok(if failed > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_plan(a: PlanArgs) -> Outcome {
    let s = load_scenario(&a.common)?;
    let kind = parse_planner(&a.planner)?;
    let text = fs::read_to_string(&a.estimates).map_err(|e| io_failure(&a.estimates, e))?;
    let targets: Vec<Target> = serde_json::from_str(&text).map_err(|e| io_failure(&a.estimates, e))?;
    if let Some(t) = targets
        .iter()
        .find(|t| !(t.position.is_finite() && t.velocity.is_finite() && t.error_bound >= 0.0 && t.ref_time.is_finite()))
    {
        return Err(config(format!("{}: malformed estimate {}", a.estimates.display(), t.id)));
    }
    let paths = plan_scan(&s.area(), s.uav_count, s.ground_radius()).map_err(config)?;
    let homes: Vec<_> = paths.iter().map(|p| p.start).collect();
    let start_time = targets.iter().map(|t| t.ref_time).fold(0.0, f64::max);
    let ctx = PlanContext::new(&s, homes.clone(), homes, start_time);
    let mut rng = seed::rng(s.seed, &[seed::tag("plan"), seed::tag(kind.name()), a.seed]);
    let plan = planner::solve(kind, &targets, &ctx, &s.swarm, &mut rng);

    if a.json {
        println!("{}", serde_json::to_string_pretty(&plan).map_err(config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let mut out = std::io::stdout().lock();
    for (u, tour) in plan.tours.iter().enumerate() {
        let ids: Vec<String> = tour.iter().map(usize::to_string).collect();
        let ids = if ids.is_empty() { "-".to_string() } else { ids.join(" ") };
        let _ = writeln!(out, "uav {u}: {ids} ({:.3} s)", plan.tour_times[u]);
    }
    let _ = writeln!(out, "makespan {:.3} s", plan.makespan);
    if !plan.infeasible.is_empty() {
        let _ = writeln!(out, "infeasible: {:?}", plan.infeasible);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    let s = match &a.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            Scenario::from_json(&text).map_err(|e| io_failure(path, e))?
        }
        None => Scenario::default(),
    };
    let effort = if a.quick {
        Effort {
            ranging_draws: 200_000,
            planner_instances: 10,
            annulus_fixtures: 5,
            kappa_trials: 6,
        }
    } else {
        Effort::default()
    };
    let report = validate::run_all(&s, effort, a.seed).map_err(config)?;
    for o in &report.oracles {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    let json = serde_json::to_vec_pretty(&report.kappa).map_err(config)?;
    let path = a.out.join("kappa.json");
    write_atomic(&path, &json)?;
    println!("kappa {:.3} written to {}", report.kappa.kappa, path.display());
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
