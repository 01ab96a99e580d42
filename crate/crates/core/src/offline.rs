//! Dual-decomposition solver for the expected-QoE linear program.
//!
//! ```text
//! max  Σ_s f_s Σ_i v_i (x_{s,i} p_{s,i} + y_{s,i})
//! s.t. Σ_s f_s Σ_i y_{s,i} <= N2
//!      y_{s,i} <= p_{s,i} (1 - x_{s,i}),   Σ_i x_{s,i} <= N1,   0 <= x <= 1,   y >= 0
//! ```
//!
//! Pricing the average deadline budget with `λ` splits the problem into one
//! small subproblem per state, solved in closed form: send the `N1` packets with
//! the largest `α = p·min(v, λ)` proactively and defer every other packet whose
//! value is at least `λ`. `λ` itself is found by projected subgradient descent.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use minilp::{ComparisonOp, OptimizationDirection};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Catalog, DemandModel, IntervalConfig, Layer, PacketId, PacketSpec, SchedulePlan, UserId, Cell};

/// Step sizes `h_t` for the price update, `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    /// `h_t = c / t`: diverging sum, square-summable.
    Harmonic { c: f64 },
    /// `h_t = h`. With `h = 0` the price is frozen.
    Constant { h: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Harmonic { c: 1.0 }
    }
}

impl StepSchedule {
    pub fn harmonic(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::input(format!("step constant must be positive, got {c}")));
        }
        Ok(StepSchedule::Harmonic { c })
    }

    pub fn step_size(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Harmonic { c } => c / t.max(1) as f64,
            StepSchedule::Constant { h } => h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once a price update moves `λ` by less than this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 100_000 }
    }
}

/// A demand model together with the packets and slot budgets it refers to.
#[derive(Debug, Clone)]
pub struct OfflineProblem {
    demand: DemandModel,
    catalog: Catalog,
    budgets: IntervalConfig,
    values: Vec<f64>,
    ids: Vec<PacketId>,
    /// `probs[s][k]` for packet `ids[k]`.
    probs: Vec<Vec<f64>>,
}

impl OfflineProblem {
    pub fn new(demand: DemandModel, catalog: Catalog, budgets: IntervalConfig) -> Result<Self> {
        budgets.check_split()?;
        for s in 0..demand.num_states() {
            if let Some(id) = demand.want_row(s).keys().find(|id| catalog.get(**id).is_none()) {
                return Err(Error::UnknownPacket(*id));
            }
        }
        let ids: Vec<PacketId> = catalog.packets().iter().map(|p| p.id).collect();
        let values = catalog.packets().iter().map(|p| p.value).collect();
        let probs = (0..demand.num_states())
            .map(|s| ids.iter().map(|&id| demand.want(s, id)).collect())
            .collect();
        Ok(Self { demand, catalog, budgets, values, ids, probs })
    }

    /// Builds a problem from dense arrays; packet `k` gets id `k`.
    pub fn from_dense(
        values: &[f64],
        stationary: Vec<f64>,
        probs: Vec<Vec<f64>>,
        budgets: IntervalConfig,
    ) -> Result<Self> {
        let packets = values
            .iter()
            .enumerate()
            .map(|(k, &value)| PacketSpec {
                id: PacketId(k as u32),
                value,
                layer: Layer::Base,
                owner: UserId(0),
                location: Cell::new(0, 0),
            })
            .collect();
        let catalog = Catalog::new(packets)?;
        let states = (0..stationary.len()).map(|s| format!("s{s}")).collect();
        let mut rows = Vec::with_capacity(probs.len());
        for row in probs {
            if row.len() != values.len() {
                return Err(Error::input(format!(
                    "want-probability row has {} entries for {} packets",
                    row.len(),
                    values.len()
                )));
            }
            rows.push(
                row.into_iter()
                    .enumerate()
                    .map(|(k, p)| (PacketId(k as u32), p))
                    .collect::<BTreeMap<_, _>>(),
            );
        }
        let demand = DemandModel::new(states, stationary, rows)?;
        Self::new(demand, catalog, budgets)
    }

    /// Renames the states; the names only appear in plans and reports.
    pub fn with_state_names(mut self, names: Vec<String>) -> Result<Self> {
        let rows = (0..self.demand.num_states()).map(|s| self.demand.want_row(s).clone()).collect();
        self.demand = DemandModel::new(names, self.demand.stationary().to_vec(), rows)?;
        Ok(self)
    }

    pub fn demand(&self) -> &DemandModel {
        &self.demand
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn budgets(&self) -> &IntervalConfig {
        &self.budgets
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn num_packets(&self) -> usize {
        self.ids.len()
    }

    pub fn packet_ids(&self) -> &[PacketId] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self, state: usize) -> &[f64] {
        &self.probs[state]
    }

    pub fn stationary(&self) -> &[f64] {
        self.demand.stationary()
    }

    fn n2(&self) -> f64 {
        self.budgets.deadline_slots as f64
    }
}

/// Proactive ranking score of a packet at price `λ`.
pub fn alpha_score(v: f64, p: f64, lambda: f64) -> f64 {
    if v < lambda {
        v * p
    } else {
        lambda * p
    }
}

/// Ranking used by the proactive phase: larger score, then larger `p`, then smaller id.
pub(crate) fn rank_desc(a: (f64, f64, PacketId), b: (f64, f64, PacketId)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.total_cmp(&a.1))
        .then_with(|| a.2.cmp(&b.2))
}

/// Optimal decisions of one state's subproblem at a fixed price.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDecision {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn subproblem_solve(problem: &OfflineProblem, state: usize, lambda: f64) -> StateDecision {
    let n = problem.num_packets();
    let mut decision = StateDecision { x: vec![0.0; n], y: vec![0.0; n] };
    let mut order = Vec::new();
    solve_state_into(problem, state, lambda, &mut order, &mut decision.x, &mut decision.y);
    decision
}

fn solve_state_into(
    problem: &OfflineProblem,
    state: usize,
    lambda: f64,
    order: &mut Vec<usize>,
    x: &mut [f64],
    y: &mut [f64],
) {
    let probs = &problem.probs[state];
    let values = &problem.values;
    let ids = &problem.ids;
    let n = values.len();
    let n1 = problem.budgets.n1();
    x.iter_mut().for_each(|v| *v = 0.0);

    if n1 >= n {
        x.iter_mut().for_each(|v| *v = 1.0);
    } else if n1 > 0 {
        order.clear();
        order.extend(0..n);
        let key = |k: usize| (alpha_score(values[k], probs[k], lambda), probs[k], ids[k]);
        order.select_nth_unstable_by(n1 - 1, |&a, &b| rank_desc(key(a), key(b)));
        for &k in &order[..n1] {
            x[k] = 1.0;
        }
    }
    for k in 0..n {
        y[k] = if values[k] >= lambda { probs[k] * (1.0 - x[k]) } else { 0.0 };
    }
}

/// Lagrangian maximizer at one price, with its dual value and subgradient.
#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub lambda: f64,
    pub value: f64,
    pub subgradient: f64,
    pub decisions: Vec<StateDecision>,
}

impl DualEvaluation {
    pub fn primal_objective(&self, problem: &OfflineProblem) -> f64 {
        primal_objective(problem, &self.decisions)
    }
}

fn state_lagrangian(problem: &OfflineProblem, state: usize, lambda: f64, x: &[f64], y: &[f64]) -> f64 {
    let probs = &problem.probs[state];
    problem
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| v * x[k] * probs[k] + (v - lambda) * y[k])
        .sum()
}

pub fn evaluate(problem: &OfflineProblem, lambda: f64) -> DualEvaluation {
    let mut order = Vec::new();
    let mut value = 0.0;
    let mut mass = 0.0;
    let mut decisions = Vec::with_capacity(problem.num_states());
    for (s, &f) in problem.stationary().iter().enumerate() {
        let n = problem.num_packets();
        let mut d = StateDecision { x: vec![0.0; n], y: vec![0.0; n] };
        solve_state_into(problem, s, lambda, &mut order, &mut d.x, &mut d.y);
        value += f * state_lagrangian(problem, s, lambda, &d.x, &d.y);
        mass += f * d.y.iter().sum::<f64>();
        decisions.push(d);
    }
    DualEvaluation {
        lambda,
        value: value + lambda * problem.n2(),
        subgradient: problem.n2() - mass,
        decisions,
    }
}

/// Dual value and subgradient without keeping the decisions around.
struct Scratch {
    order: Vec<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { order: Vec::with_capacity(n), x: vec![0.0; n], y: vec![0.0; n] }
    }
}

fn evaluate_summary(problem: &OfflineProblem, lambda: f64, scratch: &mut Scratch) -> (f64, f64) {
    let mut value = 0.0;
    let mut mass = 0.0;
    for (s, &f) in problem.stationary().iter().enumerate() {
        solve_state_into(problem, s, lambda, &mut scratch.order, &mut scratch.x, &mut scratch.y);
        value += f * state_lagrangian(problem, s, lambda, &scratch.x, &scratch.y);
        mass += f * scratch.y.iter().sum::<f64>();
    }
    (value + lambda * problem.n2(), problem.n2() - mass)
}

/// `D(λ)`: the Lagrangian maximized over the per-state constraints.
pub fn dual_value(problem: &OfflineProblem, lambda: f64) -> f64 {
    evaluate_summary(problem, lambda, &mut Scratch::new(problem.num_packets())).0
}

/// `N2 - Σ_s f_s Σ_i y*_{s,i}(λ)`, a subgradient of `D` at `λ`.
pub fn subgradient(problem: &OfflineProblem, lambda: f64) -> f64 {
    evaluate_summary(problem, lambda, &mut Scratch::new(problem.num_packets())).1
}

/// Expected QoE `Σ_s f_s Σ_i v_i (x p + y)` of a set of per-state decisions.
pub fn primal_objective(problem: &OfflineProblem, decisions: &[StateDecision]) -> f64 {
    problem
        .stationary()
        .iter()
        .zip(decisions)
        .enumerate()
        .map(|(s, (f, d))| {
            let probs = &problem.probs[s];
            f * problem
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| v * (d.x[k] * probs[k] + d.y[k]))
                .sum::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lambda: f64,
    pub dual: f64,
}

#[derive(Debug, Clone)]
pub struct OfflineSolution {
    pub plan: SchedulePlan,
    /// Price and dual value at every subgradient iteration.
    pub history: Vec<IterationRecord>,
    /// Price with the smallest dual value among the subgradient iterates.
    pub best_visited_lambda: f64,
}

const BRACKET_REL_TOL: f64 = 1e-12;
const BRACKET_MAX_STEPS: usize = 200;

/// Runs projected subgradient descent on `D(λ)` starting from `λ = 0`, then
/// recovers a primal-optimal plan at the minimizing price.
///
/// The iterates bracket the minimizer: `D` is convex, so a negative subgradient
/// puts `λ*` to the right and a nonnegative one to the left. The bracket is
/// narrowed by bisection and the Lagrangian maximizers on both sides of `λ*` are
/// mixed so the average deadline budget is met with equality. The mixture
/// may have fractional `x` when the proactive selection changes at `λ*`.
pub fn solve(problem: &OfflineProblem, steps: StepSchedule, stop: StopRule) -> OfflineSolution {
    let mut scratch = Scratch::new(problem.num_packets());
    let mut history = Vec::new();
    let mut lambda = 0.0_f64;
    let mut best = (f64::INFINITY, 0.0_f64);
    let mut below = 0.0_f64; // largest price seen with a negative subgradient
    let mut above = f64::INFINITY; // smallest price seen with a nonnegative subgradient

    for t in 1..=stop.max_iters.max(1) {
        let (value, g) = evaluate_summary(problem, lambda, &mut scratch);
        history.push(IterationRecord { iter: t, lambda, dual: value });
        if value < best.0 {
            best = (value, lambda);
        }
        if g < 0.0 {
            below = below.max(lambda);
        } else {
            above = above.min(lambda);
        }
        let next = (lambda - steps.step_size(t as u64) * g).max(0.0);
        let moved = (next - lambda).abs();
        lambda = next;
        if moved < stop.tol {
            break;
        }
    }

    let (lambda_star, decisions) = recover_primal(problem, below, above);
    let polished = dual_value(problem, lambda_star);
    let objective = primal_objective(problem, &decisions);
    let plan = SchedulePlan {
        states: problem.demand.states().to_vec(),
        packets: problem.ids.clone(),
        x: decisions.iter().map(|d| d.x.clone()).collect(),
        y: decisions.iter().map(|d| d.y.clone()).collect(),
        lambda: lambda_star,
        objective,
        dual_value: best.0.min(polished),
    };
    OfflineSolution { plan, history, best_visited_lambda: best.1 }
}

fn recover_primal(problem: &OfflineProblem, below: f64, above: f64) -> (f64, Vec<StateDecision>) {
    let at_zero = evaluate(problem, 0.0);
    if at_zero.subgradient >= 0.0 {
        return (0.0, at_zero.decisions);
    }
    let mut lo = evaluate(problem, below);
    if lo.subgradient >= 0.0 {
        lo = at_zero;
    }
    let mut hi_lambda = above;
    if !hi_lambda.is_finite() {
        // Past the largest value nothing is deferred, so the subgradient is N2 >= 0.
        hi_lambda = problem.values.iter().fold(0.0_f64, |m, &v| m.max(v)) + 1.0;
    }
    let mut hi = evaluate(problem, hi_lambda);
    for _ in 0..BRACKET_MAX_STEPS {
        if hi.lambda - lo.lambda <= BRACKET_REL_TOL * hi.lambda.max(1.0) {
            break;
        }
        let mid = evaluate(problem, 0.5 * (lo.lambda + hi.lambda));
        if mid.subgradient < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Weight on the over-budget side so the mixed deadline load equals N2.
    let theta = hi.subgradient / (hi.subgradient - lo.subgradient);
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(u, v)| theta * u + (1.0 - theta) * v).collect()
    };
    let decisions = lo
        .decisions
        .iter()
        .zip(&hi.decisions)
        .map(|(l, h)| StateDecision { x: mix(&l.x, &h.x), y: mix(&l.y, &h.y) })
        .collect();
    (hi.lambda, decisions)
}

/// Instances larger than this many `(state, packet)` pairs are refused by [`lp_oracle`].
pub const LP_ORACLE_MAX_PAIRS: usize = 2048;

/// Exact optimum of the expected-QoE LP, solved directly with a simplex solver.
///
/// Reference for checking [`solve`]; it shares no code with the dual route.
pub fn lp_oracle(problem: &OfflineProblem) -> Result<f64> {
    let (states, packets) = (problem.num_states(), problem.num_packets());
    if states * packets > LP_ORACLE_MAX_PAIRS {
        return Err(Error::InstanceTooLarge { states, packets });
    }
    if packets == 0 {
        return Ok(0.0);
    }
    let mut lp = minilp::Problem::new(OptimizationDirection::Maximize);
    let mut deadline_row = Vec::with_capacity(states * packets);
    for (s, &f) in problem.stationary().iter().enumerate() {
        let mut proactive_row = Vec::with_capacity(packets);
        for k in 0..packets {
            let v = problem.values[k];
            let p = problem.probs[s][k];
            let x = lp.add_var(f * v * p, (0.0, 1.0));
            let y = lp.add_var(f * v, (0.0, f64::INFINITY));
            lp.add_constraint([(y, 1.0), (x, p)], ComparisonOp::Le, p);
            proactive_row.push((x, 1.0));
            deadline_row.push((y, f));
        }
        lp.add_constraint(proactive_row, ComparisonOp::Le, problem.budgets.proactive_slots as f64);
    }
    lp.add_constraint(deadline_row, ComparisonOp::Le, problem.n2());
    let solution = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    Ok(solution.objective())
}
