//! Command-line front end. Parses experiment files, runs them and writes CSV,
//! JSON and JSONL results.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors (nothing is
//! written), 3 for failures while running or writing results.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knapsack::{single_player_scenario, ByteBudgets, ScenarioSettings, NEIGHBOR_LABELS};
use crate::model::IntervalConfig;
use crate::offline::{lp_oracle, solve, OfflineProblem, StepSchedule, StopRule};
use crate::online::PolicyKind;
use crate::sim::{convergence_rows, preset, run_traced, ScenarioConfig, PRESETS};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "predsched", version, about = "Predictive two-phase scheduling for wireless VR")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the expected-QoE problem of a problem file offline.
    Offline(OfflineArgs),
    /// Run simulation scenarios from an experiment file or a preset.
    Simulate(SimulateArgs),
    /// Byte-budget decisions for a single player with fixed movement probabilities.
    KnapsackDemo(KnapsackArgs),
}

#[derive(Debug, Args)]
pub struct OfflineArgs {
    /// TOML problem file.
    pub problem: PathBuf,
    /// Output directory for plan.json and convergence.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML experiment file with one or more `[[scenario]]` tables.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub experiment: Option<PathBuf>,
    /// Built-in experiment grid: fig2, fig3, fig4, fig5 or furion (fig* also accept -full).
    #[arg(long)]
    pub preset: Option<String>,
    /// Overrides every scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub intervals: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Output directory; defaults to the file's `out` key, then `.`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the first replication's interval traces to traces.jsonl.
    #[arg(long)]
    pub traces: bool,
    /// Refuse to run without an explicit --seed.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct KnapsackArgs {
    #[arg(long, default_value_t = 200.0)]
    pub budget_proactive: f64,
    #[arg(long, default_value_t = 60.0)]
    pub budget_deadline: f64,
    /// Intervals used to learn the price before reporting.
    #[arg(long, default_value_t = 1000)]
    pub intervals: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Neighbour the player actually moves to: forward, left, right or backward.
    #[arg(long, default_value = "left")]
    pub sudden_turn: String,
    /// Output directory for knapsack.json; prints to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Offline problem file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub states: Option<Vec<String>>,
    pub values: Vec<f64>,
    pub stationary: Vec<f64>,
    /// `probs[s][k]`: probability that packet `k` is wanted in state `s`.
    pub probs: Vec<Vec<f64>>,
    pub budgets: IntervalConfig,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub step_c: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let stop = StopRule::default();
        Self { step_c: 1.0, tol: stop.tol, max_iters: stop.max_iters }
    }
}

/// Simulation experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub scenario: Vec<ScenarioConfig>,
}

/// Formats `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("formatted float parses");
    // Avoid "-0".
    if rounded == 0.0 { "0".to_string() } else { rounded.to_string() }
}

pub const SUMMARY_HEADER: [&str; 7] = ["policy", "q", "num_users", "N1", "mean_qoe", "stddev", "error_model"];
pub const CONVERGENCE_HEADER: [&str; 4] = ["interval", "mean", "stddev", "lambda"];
pub const OFFLINE_LOG_HEADER: [&str; 3] = ["iter", "lambda", "dual"];

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

fn runtime(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(runtime)?;
    w.write_record(header).map_err(runtime)?;
    for row in rows {
        w.write_record(&row).map_err(runtime)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct PlanReport {
    states: Vec<String>,
    packets: Vec<u32>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    lambda: f64,
    objective: f64,
    dual_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_gap: Option<f64>,
}

pub fn cmd_offline(args: &OfflineArgs) -> Result<()> {
    let file: ProblemFile = read_toml(&args.problem)?;
    let mut problem = OfflineProblem::from_dense(&file.values, file.stationary.clone(), file.probs.clone(), file.budgets)
        .map_err(|e| Error::config(e.to_string()))?;
    if let Some(names) = &file.states {
        if names.len() != file.stationary.len() {
            return Err(Error::config(format!("{} state names for {} states", names.len(), file.stationary.len())));
        }
        problem = problem.with_state_names(names.clone()).map_err(|e| Error::config(e.to_string()))?;
    }
    let steps = StepSchedule::harmonic(file.solver.step_c).map_err(|e| Error::config(e.to_string()))?;
    let stop = StopRule { tol: file.solver.tol, max_iters: file.solver.max_iters };

    let solution = solve(&problem, steps, stop);
    let oracle = match lp_oracle(&problem) {
        Ok(v) => Some(v),
        Err(e) => {
            eprintln!("reference LP skipped: {e}");
            None
        }
    };
    let plan = &solution.plan;
    let report = PlanReport {
        states: plan.states.clone(),
        packets: plan.packets.iter().map(|p| p.0).collect(),
        x: plan.x.clone(),
        y: plan.y.clone(),
        lambda: plan.lambda,
        objective: plan.objective,
        dual_value: plan.dual_value,
        oracle_objective: oracle,
        oracle_gap: oracle.map(|o| (o - plan.objective).abs()),
    };
    create_dir(&args.out)?;
    write_json(&args.out.join("plan.json"), &report)?;
    write_csv(
        &args.out.join("convergence.csv"),
        &OFFLINE_LOG_HEADER,
        solution.history.iter().map(|r| vec![r.iter.to_string(), sig6(r.lambda), sig6(r.dual)]),
    )?;
    eprintln!("objective {} at lambda {}", sig6(plan.objective), sig6(plan.lambda));
    Ok(())
}

fn simulation_plan(args: &SimulateArgs) -> Result<(Vec<ScenarioConfig>, PathBuf)> {
    if args.strict && args.seed.is_none() {
        return Err(Error::config("--strict requires --seed"));
    }
    let (mut scenarios, file_out) = match (&args.experiment, &args.preset) {
        (Some(path), None) => {
            let file: ExperimentFile = read_toml(path)?;
            (file.scenario, file.out)
        }
        (None, Some(name)) => (preset(name)?, None),
        _ => return Err(Error::config(format!("give an experiment file or --preset ({PRESETS:?})"))),
    };
    if scenarios.is_empty() {
        return Err(Error::config("the experiment declares no scenarios"));
    }
    for c in &mut scenarios {
        if let Some(seed) = args.seed {
            c.seed = seed;
        }
        if let Some(r) = args.replications {
            c.replications = r;
        }
        if let Some(n) = args.intervals {
            c.intervals = n;
        }
        if let Some(b) = args.burn_in {
            c.burn_in = b;
        }
        c.validate().map_err(|e| Error::config(e.to_string()))?;
    }
    if scenarios.iter().any(|c| c.variant != scenarios[0].variant) {
        return Err(Error::config("all scenarios of an experiment must share a variant"));
    }
    let out = args.out.clone().or(file_out).unwrap_or_else(|| PathBuf::from("."));
    Ok((scenarios, out))
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (scenarios, out) = simulation_plan(args)?;
    // The convergence log follows the first Predictive scenario.
    let probe = scenarios.iter().position(|c| c.policy == PolicyKind::Predictive).unwrap_or(0);
    let mut summary = Vec::with_capacity(scenarios.len());
    let mut convergence = Vec::new();
    let mut trace_lines = Vec::new();
    for (i, c) in scenarios.iter().enumerate() {
        let (result, traces) = run_traced(c, args.traces)?;
        if result.budget_violations > 0 {
            return Err(runtime(format!("scenario {i}: {} budget violations", result.budget_violations)));
        }
        eprintln!(
            "[{}/{}] {} q={} users={} mean QoE {}",
            i + 1,
            scenarios.len(),
            c.policy,
            c.q_true,
            c.num_users,
            sig6(result.mean_qoe)
        );
        summary.push(vec![
            c.policy.to_string(),
            sig6(c.q_true),
            c.num_users.to_string(),
            summary_n1(c),
            sig6(result.mean_qoe),
            sig6(result.stddev),
            c.error_label(),
        ]);
        if i == probe {
            convergence = convergence_rows(&result)
                .into_iter()
                .map(|r| vec![r.interval.to_string(), sig6(r.mean), sig6(r.stddev), sig6(r.lambda)])
                .collect();
        }
        for t in traces {
            #[derive(Serialize)]
            struct Line<'a> {
                scenario: usize,
                #[serde(flatten)]
                trace: &'a crate::sim::TraceRecord,
            }
            trace_lines.push(serde_json::to_string(&Line { scenario: i, trace: &t }).map_err(runtime)?);
        }
    }
    create_dir(&out)?;
    write_csv(&out.join("summary.csv"), &SUMMARY_HEADER, summary)?;
    write_csv(&out.join("convergence.csv"), &CONVERGENCE_HEADER, convergence)?;
    if args.traces {
        let mut f = std::io::BufWriter::new(fs::File::create(out.join("traces.jsonl"))?);
        for line in trace_lines {
            writeln!(f, "{line}")?;
        }
        f.flush()?;
    }
    Ok(())
}

fn summary_n1(c: &ScenarioConfig) -> String {
    match c.budgets {
        crate::sim::Budgets::Slots(b) => b.proactive_slots.to_string(),
        crate::sim::Budgets::Bytes(b) => format!("{}KB", sig6(b.proactive_kb)),
    }
}

pub fn cmd_knapsack_demo(args: &KnapsackArgs) -> Result<()> {
    let sudden_turn = NEIGHBOR_LABELS
        .iter()
        .position(|l| l.eq_ignore_ascii_case(&args.sudden_turn))
        .ok_or_else(|| Error::config(format!("--sudden-turn must be one of {NEIGHBOR_LABELS:?}")))?;
    let settings = ScenarioSettings {
        budgets: ByteBudgets::new(args.budget_proactive, args.budget_deadline).map_err(|e| Error::config(e.to_string()))?,
        learning_intervals: args.intervals,
        seed: args.seed,
        sudden_turn,
        ..ScenarioSettings::default()
    };
    let report = single_player_scenario(&settings)?;
    match &args.out {
        Some(dir) => {
            create_dir(dir)?;
            write_json(&dir.join("knapsack.json"), &report)?;
        }
        None => {
            let text = serde_json::to_string_pretty(&report).map_err(runtime)?;
            println!("{text}");
        }
    }
    Ok(())
}

/// Caps rayon's pool from `PREDSCHED_THREADS`.
fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("PREDSCHED_THREADS") {
        let n: usize = value
            .parse()
            .map_err(|_| Error::config(format!("PREDSCHED_THREADS must be a positive integer, got {value:?}")))?;
        // A second initialization (e.g. from tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Offline(a) => cmd_offline(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::KnapsackDemo(a) => cmd_knapsack_demo(a),
    }
}

/// Parses `args` (program name first), runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
