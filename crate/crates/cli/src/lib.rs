//! Command-line front end: scenario generation, plan-and-schedule runs,
//! verification, reports and Gantt charts.

pub mod gantt;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mixplan::domain::{Scheme, SchemeConfig};
use mixplan::pipeline::{run_scheme, RunError};
use mixplan::planner::PlanError;
use mixplan::scenario_io::{
    envelopes_to_string, generate_case_scenario, load_envelopes, load_scenario, load_schedule,
    parse_report_kv, report_to_kv, report_to_text, scenario_to_string, schedule_to_files,
    summary_line, GeneratorSpec,
};
use mixplan::scheduler::verify_schedule;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

pub const ENVELOPE_FILE: &str = "envelope.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_KV_FILE: &str = "report.kv";
pub const VIOLATIONS_FILE: &str = "violations.txt";

#[derive(Parser, Debug)]
#[command(
    name = "mixplan",
    version,
    about = "Plan and schedule high-mix injection molding production"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a case-style scenario file.
    Gen(GenArgs),
    /// Plan, schedule, verify and evaluate a scenario.
    Run(RunArgs),
    /// Render a schedule as an SVG Gantt chart.
    Gantt(GanttArgs),
    /// Check a schedule against its envelopes.
    Verify(VerifyArgs),
    /// Print one or more machine-readable reports as text or a comparison table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of the full 8 + 4 + 2 machine fleet.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 37)]
    pub products: usize,
    #[arg(long, default_value_t = 150)]
    pub orders: usize,
    #[arg(long, default_value_t = 240)]
    pub horizon: u32,
    /// Total ordered units; defaults to `--load` times molding capacity.
    #[arg(long)]
    pub demand: Option<f64>,
    #[arg(long, default_value_t = 0.6)]
    pub load: f64,
    #[arg(long, default_value_t = 0.3)]
    pub clustering: f64,
    #[arg(long, default_value_t = 0.3)]
    pub accessory_fraction: f64,
    #[arg(long)]
    pub adapters: Option<usize>,
    /// Accessory units each CNC machine finishes per day.
    #[arg(long, default_value_t = 3000.0)]
    pub cnc_capacity: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// A, B, C or greedy.
    #[arg(long, default_value = "C")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 30)]
    pub window: u32,
    #[arg(long, default_value_t = 30)]
    pub step: u32,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Wall-clock limit per planning window, in seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Branch-and-bound node limit per planning window.
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Solver worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Mold limit per machine-day under scheme B.
    #[arg(long, default_value_t = 3)]
    pub max_molds: u32,
    /// Break due-date ties by the larger delay penalty first.
    #[arg(long)]
    pub penalty_descending: bool,
}

#[derive(Args, Debug)]
pub struct GanttArgs {
    /// Schedule directory or its schedule.csv.
    #[arg(long)]
    pub schedule: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    /// Machine group to draw; all machines when omitted.
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub schedule: PathBuf,
    #[arg(long)]
    pub envelope: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// One or more report.kv files.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }
}

fn input_err<E: std::fmt::Display>(what: &Path) -> impl Fn(E) -> Failure + '_ {
    move |e| Failure::input(format!("{}: {e}", what.display()))
}

/// Writes `files` into `dir` through a staging directory, so either every
/// file appears or none does.
pub fn write_atomically(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    let result = (|| {
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        for (file, text) in files {
            let mut f = fs::File::create(staging.join(file))?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        fs::create_dir_all(dir)?;
        for (file, _) in files {
            fs::rename(staging.join(file), dir.join(file))?;
        }
        Ok(())
    })();
    let _ = fs::remove_dir_all(&staging);
    result
}

fn write_file_atomically(path: &Path, text: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.partial-{}", std::process::id()));
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

pub fn gen(args: &GenArgs) -> Result<(), Failure> {
    let spec = GeneratorSpec {
        seed: args.seed,
        scale: args.scale,
        n_products: args.products,
        n_orders: args.orders,
        horizon_days: args.horizon,
        demand_total: args.demand,
        load_factor: args.load,
        due_clustering: args.clustering,
        accessory_fraction: args.accessory_fraction,
        adapters: args.adapters,
        cnc_units_per_day: args.cnc_capacity,
        ..GeneratorSpec::default()
    };
    let scenario = generate_case_scenario(&spec).map_err(Failure::input)?;
    write_file_atomically(&args.out, &scenario_to_string(scenario.data()))
        .map_err(input_err(&args.out))
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&args.scenario).map_err(input_err(&args.scenario))?;
    let mut config = SchemeConfig::new(args.scheme).with_window(args.window, args.step);
    config.max_molds_per_day = args.max_molds;
    config.penalty_descending = args.penalty_descending;
    config.solver_limits.jobs = args.jobs.max(1);
    if let Some(t) = args.time_limit {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::input(
                "--time-limit must be a positive number of seconds",
            ));
        }
        config.solver_limits.time_limit_secs = t;
    }
    if let Some(n) = args.max_nodes {
        config.solver_limits.max_nodes = n.max(1);
    }
    config
        .validate(scenario.horizon_days())
        .map_err(Failure::input)?;

    let out = run_scheme(&scenario, &config).map_err(|e| match e {
        RunError::Plan(PlanError::Config(m)) => Failure::input(m),
        other => Failure {
            code: EXIT_SOLVER,
            message: other.to_string(),
        },
    })?;

    let mut files: Vec<(String, String)> =
        vec![(ENVELOPE_FILE.into(), envelopes_to_string(&out.envelopes))];
    files.extend(
        schedule_to_files(&out.schedule)
            .files
            .into_iter()
            .map(|(n, t)| (n.to_string(), t)),
    );
    files.push((
        REPORT_TEXT_FILE.into(),
        report_to_text(&out.report, Some(&out.info)),
    ));
    files.push((
        REPORT_KV_FILE.into(),
        report_to_kv(&out.report, Some(&out.info)),
    ));
    if !out.violations.is_empty() {
        let text: String = out.violations.iter().map(|v| format!("{v}\n")).collect();
        files.push((VIOLATIONS_FILE.into(), text));
    }
    write_atomically(&args.out_dir, &files).map_err(input_err(&args.out_dir))?;
    log::info!("wrote {} files to {}", files.len(), args.out_dir.display());

    println!("{}", summary_line(&out.report));
    if out.violations.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!(
                "{} schedule violation(s); see {}",
                out.violations.len(),
                args.out_dir.join(VIOLATIONS_FILE).display()
            ),
        })
    }
}

pub fn gantt(args: &GanttArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&args.scenario).map_err(input_err(&args.scenario))?;
    let schedule = load_schedule(&args.schedule).map_err(input_err(&args.schedule))?;
    if let Some(g) = &args.group {
        if !scenario.machines().iter().any(|m| m.group.name() == g) {
            return Err(Failure::input(format!("no machines in group '{g}'")));
        }
    }
    let svg = gantt::render(&schedule, &scenario, args.group.as_deref());
    write_file_atomically(&args.out, &svg).map_err(input_err(&args.out))
}

pub fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&args.scenario).map_err(input_err(&args.scenario))?;
    let envelopes = load_envelopes(&args.envelope).map_err(input_err(&args.envelope))?;
    let schedule = load_schedule(&args.schedule).map_err(input_err(&args.schedule))?;
    let violations = verify_schedule(&schedule, &envelopes, &scenario);
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!("ok: schedule satisfies all envelope and machine constraints");
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: format!("{} violation(s)", violations.len()),
        })
    }
}

pub fn report(args: &ReportArgs) -> Result<(), Failure> {
    let mut loaded = Vec::new();
    for path in &args.reports {
        let text = fs::read_to_string(path).map_err(input_err(path))?;
        loaded.push(parse_report_kv(&text).map_err(input_err(path))?);
    }
    if let [(report, info)] = loaded.as_slice() {
        print!("{}", report_to_text(report, info.as_ref()));
        return Ok(());
    }
    println!(
        "{:<8} {:>7} {:>5} {:>10} {:>11} {:>8} {:>8}",
        "scheme", "otd", "late", "outsourced", "profit", "rate", "sync"
    );
    for (r, _) in &loaded {
        println!(
            "{:<8} {:>6.1}% {:>5} {:>10.0} {:>11.2} {:>7.1}% {:>8.3}",
            r.scheme.label(),
            100.0 * r.otd,
            r.late_orders,
            r.outsourced_units,
            r.economics.profit,
            100.0 * r.economics.profit_rate,
            r.sync_acc
        );
    }
    Ok(())
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Run(a) => run(a),
        Command::Gantt(a) => gantt(a),
        Command::Verify(a) => verify(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
