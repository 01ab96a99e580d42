//! Multi-user interval simulation: policy comparison, error injection,
//! convergence measurement, replication and aggregation.
//!
//! Users start uniformly at random on the grid with random headings and then
//! follow the grid mobility model. Each user has a private image per
//! neighbouring location, so the candidate pool of an interval is four images
//! per user. Replications run in parallel on independent random streams and are
//! reduced in replication order, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::error::{Error, Result};
use crate::knapsack::{run_byte_interval, table_options, ByteBudgets, ByteIntervalTrace, ByteUserView};
use crate::mobility::{direction_probabilities, step, ErrorModel, GridMobilityParams, Heading, Topology, UserState};
use crate::model::{image_packets, Catalog, Cell, IntervalConfig, IntervalTrace, PacketId, PacketSet, UserId, PACKETS_PER_IMAGE};
use crate::offline::StepSchedule;
use crate::online::{run_interval, CandidatePool, OnlineState, PolicyKind, StatePair};

/// Generator for stream `stream` of `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Layered images, slot budgets.
    #[default]
    SlotPackets,
    /// Single-layer frames at several resolutions, KB budgets.
    ByteFrames,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budgets {
    Slots(IntervalConfig),
    Bytes(ByteBudgets),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSpec {
    pub uniform_halfwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridShape {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub topology: Topology,
}

impl Default for GridShape {
    fn default() -> Self {
        Self { width: 10, height: 10, topology: Topology::Torus }
    }
}

fn default_policy() -> PolicyKind {
    PolicyKind::Predictive
}

fn default_burn_in() -> usize {
    100
}

fn default_one() -> usize {
    1
}

fn default_step_c() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_users: usize,
    /// True probability of moving forward.
    pub q_true: f64,
    /// Perceived forward probability is `q_true + e_i` with `e_i` drawn once per user.
    #[serde(default)]
    pub q_error: Option<ErrorSpec>,
    pub budgets: Budgets,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    /// Intervals per replication, burn-in included.
    pub intervals: usize,
    /// Leading intervals excluded from the mean QoE.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridShape,
    #[serde(default = "default_step_c")]
    pub step_c: f64,
    /// Price at the first interval.
    #[serde(default)]
    pub initial_lambda: f64,
}

impl ScenarioConfig {
    /// Slot-budget scenario with the default grid and seed.
    pub fn slots(num_users: usize, q_true: f64, budgets: IntervalConfig, policy: PolicyKind, intervals: usize) -> Self {
        Self {
            num_users,
            q_true,
            q_error: None,
            budgets: Budgets::Slots(budgets),
            variant: Variant::SlotPackets,
            policy,
            intervals,
            burn_in: default_burn_in().min(intervals / 2),
            replications: 1,
            seed: 0,
            grid: GridShape::default(),
            step_c: default_step_c(),
            initial_lambda: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.intervals == 0 || self.replications == 0 {
            return Err(Error::input("num_users, intervals and replications must all be at least 1"));
        }
        if self.burn_in >= self.intervals {
            return Err(Error::input(format!(
                "burn_in ({}) must be smaller than intervals ({})",
                self.burn_in, self.intervals
            )));
        }
        if let Some(e) = self.q_error {
            if !(0.0..=1.0).contains(&e.uniform_halfwidth) {
                return Err(Error::input(format!("error halfwidth {} outside [0,1]", e.uniform_halfwidth)));
            }
        }
        if !(self.initial_lambda >= 0.0 && self.initial_lambda.is_finite()) {
            return Err(Error::input(format!("initial price must be nonnegative, got {}", self.initial_lambda)));
        }
        if !(self.step_c > 0.0 && self.step_c.is_finite()) {
            return Err(Error::input(format!("step constant must be positive, got {}", self.step_c)));
        }
        self.mobility()?;
        match (self.variant, &self.budgets) {
            (Variant::SlotPackets, Budgets::Slots(b)) => b.validate(),
            (Variant::ByteFrames, Budgets::Bytes(b)) => {
                if self.policy != PolicyKind::Predictive {
                    return Err(Error::input("the byte-frame variant only supports the Predictive policy"));
                }
                b.validate()
            }
            (Variant::SlotPackets, Budgets::Bytes(_)) => Err(Error::input("slot-packet variant needs slot budgets")),
            (Variant::ByteFrames, Budgets::Slots(_)) => Err(Error::input("byte-frame variant needs KB budgets")),
        }
    }

    pub fn mobility(&self) -> Result<GridMobilityParams> {
        GridMobilityParams::new(self.q_true, self.grid.width, self.grid.height, self.grid.topology)
    }

    /// Label of the error model, `none` for perfect knowledge.
    pub fn error_label(&self) -> String {
        match self.q_error {
            Some(e) if e.uniform_halfwidth > 0.0 => format!("uniform{}", e.uniform_halfwidth),
            _ => "none".to_string(),
        }
    }

    fn n1_label(&self) -> String {
        match self.budgets {
            Budgets::Slots(b) => b.proactive_slots.to_string(),
            Budgets::Bytes(b) => format!("{}KB", b.proactive_kb),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalStat {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Mean per-user QoE over measured intervals and replications.
    pub mean_qoe: f64,
    /// Standard deviation of the per-replication means.
    pub stddev: f64,
    pub replication_means: Vec<f64>,
    /// Per-user QoE at each interval index, across replications.
    pub per_interval_qoe: Vec<IntervalStat>,
    /// Mean price at the start of each interval.
    pub lambda_series: Vec<f64>,
    pub budget_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceRecord {
    Slots(IntervalTrace),
    Bytes(ByteIntervalTrace),
}

struct Replication {
    qoe: Vec<f64>,
    lambda: Vec<f64>,
    violations: u64,
    traces: Vec<TraceRecord>,
}

fn mean_and_std(xs: &[f64]) -> IntervalStat {
    let mean = xs.mean();
    let stddev = if xs.len() > 1 { xs.std_dev() } else { 0.0 };
    IntervalStat { mean, stddev }
}

/// Packet id of slot `k` of user `u`'s image in absolute direction `dir`.
fn packet_id(user: usize, dir: usize, k: usize) -> u32 {
    ((user * 4 + dir) * PACKETS_PER_IMAGE + k) as u32
}

/// One image per user and direction; locations are offsets from the user.
fn slot_catalog(num_users: usize) -> Result<Catalog> {
    let mut packets = Vec::with_capacity(num_users * 4 * PACKETS_PER_IMAGE);
    for u in 0..num_users {
        for dir in Heading::ALL {
            let (dx, dy) = dir.delta();
            packets.extend(image_packets(UserId(u as u32), Cell::new(dx, dy), packet_id(u, dir.index(), 0)));
        }
    }
    Catalog::new(packets)
}

struct Population {
    users: Vec<UserState>,
    truth: GridMobilityParams,
    perceived: Vec<GridMobilityParams>,
}

impl Population {
    fn new(config: &ScenarioConfig, replication: u64) -> Result<(Self, ChaCha8Rng)> {
        let truth = config.mobility()?;
        // Movement and estimation errors use separate streams, so runs with and
        // without errors see the same trajectories.
        let mut rng = stream_rng(config.seed, 2 * replication);
        let mut err_rng = stream_rng(config.seed, 2 * replication + 1);
        let users: Vec<UserState> = (0..config.num_users).map(|_| UserState::random(&truth, &mut rng)).collect();
        let errors = match config.q_error {
            Some(e) => {
                let mut per_user: Vec<ChaCha8Rng> =
                    (0..config.num_users).map(|_| ChaCha8Rng::seed_from_u64(err_rng.random())).collect();
                ErrorModel::draw(e.uniform_halfwidth, &mut per_user)
            }
            None => ErrorModel::none(config.num_users),
        };
        let perceived = (0..config.num_users).map(|u| truth.with_q(errors.perceived_q(truth.q, u))).collect();
        Ok((Self { users, truth, perceived }, rng))
    }

    /// Moves everyone; returns the absolute direction each user took.
    fn advance(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        self.users
            .iter_mut()
            .map(|s| {
                *s = step(s, &self.truth, rng);
                s.heading.index()
            })
            .collect()
    }
}

fn run_slots(config: &ScenarioConfig, budgets: &IntervalConfig, replication: u64, keep_traces: bool) -> Result<Replication> {
    let (mut pop, mut rng) = Population::new(config, replication)?;
    let catalog = slot_catalog(config.num_users)?;
    let mut pool = CandidatePool::new(catalog, vec![0.0; config.num_users * 4 * PACKETS_PER_IMAGE])?;
    let mut state = OnlineState::new(StepSchedule::harmonic(config.step_c)?);
    state.lambda = config.initial_lambda;
    let mut out = Replication { qoe: Vec::new(), lambda: Vec::new(), violations: 0, traces: Vec::new() };
    let mut probs = Vec::with_capacity(config.num_users * 4 * PACKETS_PER_IMAGE);
    for _ in 0..config.intervals {
        probs.clear();
        for (u, user) in pop.users.iter().enumerate() {
            let dirs = direction_probabilities(user, &pop.perceived[u]);
            for p in dirs {
                probs.extend(std::iter::repeat_n(p, PACKETS_PER_IMAGE));
            }
        }
        pool.set_probs(probs.clone())?;
        let moved = pop.advance(&mut rng);
        let wanted: PacketSet = moved
            .iter()
            .enumerate()
            .flat_map(|(u, &d)| (0..PACKETS_PER_IMAGE).map(move |k| PacketId(packet_id(u, d, k))))
            .collect();
        out.lambda.push(state.lambda);
        let trace = run_interval(&mut state, &pool, &wanted, StatePair::default(), budgets, config.policy)?;
        if trace.check(budgets, &wanted).is_err() {
            out.violations += 1;
        }
        out.qoe.push(trace.qoe / config.num_users as f64);
        if keep_traces {
            out.traces.push(TraceRecord::Slots(trace));
        }
    }
    Ok(out)
}

fn run_bytes(config: &ScenarioConfig, budgets: &ByteBudgets, replication: u64, keep_traces: bool) -> Result<Replication> {
    let (mut pop, mut rng) = Population::new(config, replication)?;
    let mut state = OnlineState::new(StepSchedule::harmonic(config.step_c)?);
    state.lambda = config.initial_lambda;
    let mut out = Replication { qoe: Vec::new(), lambda: Vec::new(), violations: 0, traces: Vec::new() };
    for _ in 0..config.intervals {
        let mut views: Vec<ByteUserView> = pop
            .users
            .iter()
            .enumerate()
            .map(|(u, user)| ByteUserView {
                neighbors: Heading::ALL
                    .iter()
                    .map(|&d| table_options(pop.truth.neighbor(user.position, d).unwrap_or(user.position)))
                    .collect(),
                probs: direction_probabilities(user, &pop.perceived[u]).to_vec(),
                realized: 0,
            })
            .collect();
        let moved = pop.advance(&mut rng);
        for (view, d) in views.iter_mut().zip(moved) {
            view.realized = d;
        }
        out.lambda.push(state.lambda);
        let trace = run_byte_interval(&mut state, &views, budgets)?;
        if !trace.within_budget(budgets) {
            out.violations += 1;
        }
        out.qoe.push(trace.qoe / config.num_users as f64);
        if keep_traces {
            out.traces.push(TraceRecord::Bytes(trace));
        }
    }
    Ok(out)
}

fn replicate(config: &ScenarioConfig, replication: u64, keep_traces: bool) -> Result<Replication> {
    match &config.budgets {
        Budgets::Slots(b) => run_slots(config, b, replication, keep_traces),
        Budgets::Bytes(b) => run_bytes(config, b, replication, keep_traces),
    }
}

fn aggregate(config: &ScenarioConfig, reps: &[Replication]) -> RunResult {
    let replication_means: Vec<f64> = reps.iter().map(|r| r.qoe[config.burn_in..].mean()).collect();
    let per_interval_qoe = (0..config.intervals)
        .map(|t| mean_and_std(&reps.iter().map(|r| r.qoe[t]).collect::<Vec<_>>()))
        .collect();
    let lambda_series = (0..config.intervals)
        .map(|t| reps.iter().map(|r| r.lambda[t]).collect::<Vec<_>>().mean())
        .collect();
    let overall = mean_and_std(&replication_means);
    RunResult {
        mean_qoe: overall.mean,
        stddev: overall.stddev,
        replication_means,
        per_interval_qoe,
        lambda_series,
        budget_violations: reps.iter().map(|r| r.violations).sum(),
    }
}

/// Runs every replication of `config` and aggregates them.
pub fn run(config: &ScenarioConfig) -> Result<RunResult> {
    run_traced(config, false).map(|(r, _)| r)
}

/// Like [`run`], also returning the interval traces of the first replication
/// when `keep_traces` is set.
pub fn run_traced(config: &ScenarioConfig, keep_traces: bool) -> Result<(RunResult, Vec<TraceRecord>)> {
    config.validate()?;
    let reps = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| replicate(config, r, keep_traces && r == 0))
        .collect::<Result<Vec<_>>>()?;
    let result = aggregate(config, &reps);
    let traces = reps.into_iter().next().map(|r| r.traces).unwrap_or_default();
    Ok((result, traces))
}

/// Same as [`run`] but with replications executed one after another.
pub fn run_serial(config: &ScenarioConfig) -> Result<RunResult> {
    config.validate()?;
    let reps = (0..config.replications as u64)
        .map(|r| replicate(config, r, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(config, &reps))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: PolicyKind,
    pub q: f64,
    pub num_users: usize,
    /// Proactive budget: a slot count, or KB with a `KB` suffix.
    pub n1: String,
    pub mean_qoe: f64,
    pub stddev: f64,
    pub error_model: String,
}

/// One summary row per config, in input order.
pub fn compare(configs: &[ScenarioConfig]) -> Result<Vec<SummaryRow>> {
    if let Some(first) = configs.first() {
        if configs.iter().any(|c| c.variant != first.variant) {
            return Err(Error::input("compared scenarios must share a variant"));
        }
    }
    configs
        .iter()
        .map(|c| {
            let r = run(c)?;
            Ok(SummaryRow {
                policy: c.policy,
                q: c.q_true,
                num_users: c.num_users,
                n1: c.n1_label(),
                mean_qoe: r.mean_qoe,
                stddev: r.stddev,
                error_model: c.error_label(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    /// 1-based interval index.
    pub interval: usize,
    pub mean: f64,
    pub stddev: f64,
    pub lambda: f64,
}

/// Per-interval QoE with cross-replication spread, starting from `λ = 0`.
pub fn convergence_probe(config: &ScenarioConfig) -> Result<Vec<ConvergenceRow>> {
    if config.policy != PolicyKind::Predictive {
        return Err(Error::input("convergence is only defined for the Predictive policy"));
    }
    Ok(convergence_rows(&run(config)?))
}

pub fn convergence_rows(result: &RunResult) -> Vec<ConvergenceRow> {
    result
        .per_interval_qoe
        .iter()
        .zip(&result.lambda_series)
        .enumerate()
        .map(|(t, (s, &lambda))| ConvergenceRow { interval: t + 1, mean: s.mean, stddev: s.stddev, lambda })
        .collect()
}

/// Desk-scale interval: `M = 40`, `N1 = 36`.
pub fn desk_budgets(n1: u32) -> IntervalConfig {
    IntervalConfig::new(40, n1).expect("n1 <= 40")
}

/// Forward probabilities swept by the policy comparison figures.
pub const Q_SWEEP: [f64; 6] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
/// Client counts swept by the policy comparison figures.
pub const USER_SWEEP: [usize; 3] = [10, 15, 20];

pub const PRESETS: [&str; 5] = ["fig2", "fig3", "fig4", "fig5", "furion"];

/// Experiment grid of a named preset. A `-full` suffix on `fig2`..`fig5` uses
/// `M = 399` with `N1 ∈ {360, 380}` instead of the desk-scale `M = 40`.
pub fn preset(name: &str) -> Result<Vec<ScenarioConfig>> {
    let (base, full) = match name.strip_suffix("-full") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let budgets = |tight: bool| -> IntervalConfig {
        match (full, tight) {
            (false, false) => desk_budgets(36),
            (false, true) => desk_budgets(38),
            (true, false) => IntervalConfig::new(399, 360).expect("valid"),
            (true, true) => IntervalConfig::new(399, 380).expect("valid"),
        }
    };
    let sweep = |tight: bool, error: Option<ErrorSpec>| -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &users in &USER_SWEEP {
            for &q in &Q_SWEEP {
                for policy in PolicyKind::ALL {
                    let mut c = ScenarioConfig::slots(users, q, budgets(tight), policy, 2000);
                    c.replications = 100;
                    c.q_error = error;
                    out.push(c);
                }
            }
        }
        out
    };
    match (base, full) {
        ("fig2", _) => Ok(sweep(false, None)),
        ("fig3", _) => Ok(sweep(false, Some(ErrorSpec { uniform_halfwidth: 0.1 }))),
        ("fig4", _) => Ok(sweep(true, None)),
        ("fig5", _) => {
            let mut c = ScenarioConfig::slots(10, 0.5, budgets(false), PolicyKind::Predictive, 400);
            c.replications = 100;
            Ok(vec![c])
        }
        ("furion", false) => Ok(vec![ScenarioConfig {
            num_users: 1,
            q_true: 0.7,
            q_error: None,
            budgets: Budgets::Bytes(ByteBudgets::default()),
            variant: Variant::ByteFrames,
            policy: PolicyKind::Predictive,
            intervals: 2000,
            burn_in: 100,
            replications: 20,
            seed: 0,
            grid: GridShape::default(),
            step_c: 1.0,
            initial_lambda: 0.0,
        }]),
        _ => Err(Error::config(format!("unknown preset {name:?}; expected one of {PRESETS:?} (fig2..fig5 also accept -full)"))),
    }
}
