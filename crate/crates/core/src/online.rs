//! Per-interval scheduling policy with a learned price, and the baselines it is
//! compared against.
//!
//! Each interval runs in two phases. Before users report their new locations,
//! up to `N1` packets are sent proactively from predicted want-probabilities.
//! Once the wanted set is known, up to `N2` of the most valuable wanted but
//! unsent packets are sent before the deadline. The predictive policy ranks
//! proactive packets by `α = p·min(v, λ)` and moves `λ` by a stochastic
//! subgradient step built from the realized demand.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{interval_qoe, Catalog, IntervalConfig, IntervalTrace, PacketId, PacketSet};
use crate::offline::{alpha_score, rank_desc, StepSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    Predictive,
    #[serde(rename = "MaxPV")]
    MaxPV,
    #[serde(rename = "MaxP")]
    MaxP,
    #[serde(rename = "MaxV")]
    MaxV,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Predictive, PolicyKind::MaxPV, PolicyKind::MaxP, PolicyKind::MaxV];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Predictive => "Predictive",
            PolicyKind::MaxPV => "MaxPV",
            PolicyKind::MaxP => "MaxP",
            PolicyKind::MaxV => "MaxV",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown policy {s:?}"))
    }
}

/// The learned price and the interval counter that drives its step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineState {
    pub lambda: f64,
    /// Index of the next interval, starting at 1.
    pub t: u64,
    pub steps: StepSchedule,
}

impl OnlineState {
    pub fn new(steps: StepSchedule) -> Self {
        Self { lambda: 0.0, t: 1, steps }
    }
}

/// A packet that could be sent proactively, with its predicted want-probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: PacketId,
    pub value: f64,
    pub prob: f64,
}

/// Catalog of one interval's candidate packets and their predicted probabilities.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    catalog: Catalog,
    probs: Vec<f64>,
}

impl CandidatePool {
    /// `probs[k]` belongs to the `k`-th packet of `catalog` (id order).
    pub fn new(catalog: Catalog, probs: Vec<f64>) -> Result<Self> {
        check_probs(catalog.len(), &probs)?;
        Ok(Self { catalog, probs })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Replaces the probabilities, keeping the catalog.
    pub fn set_probs(&mut self, probs: Vec<f64>) -> Result<()> {
        check_probs(self.catalog.len(), &probs)?;
        self.probs = probs;
        Ok(())
    }

    pub fn candidates(&self) -> impl Iterator<Item = Candidate> + '_ {
        self.catalog
            .packets()
            .iter()
            .zip(&self.probs)
            .map(|(p, &prob)| Candidate { id: p.id, value: p.value, prob })
    }
}

fn check_probs(packets: usize, probs: &[f64]) -> Result<()> {
    if probs.len() != packets {
        return Err(crate::error::Error::input(format!("{} probabilities for {packets} packets", probs.len())));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(crate::error::Error::input(format!("want-probability {p} outside [0,1]")));
    }
    Ok(())
}

fn policy_order(policy: PolicyKind, lambda: f64, a: &Candidate, b: &Candidate) -> Ordering {
    match policy {
        PolicyKind::Predictive => rank_desc(
            (alpha_score(a.value, a.prob, lambda), a.prob, a.id),
            (alpha_score(b.value, b.prob, lambda), b.prob, b.id),
        ),
        PolicyKind::MaxPV => (b.prob * b.value)
            .total_cmp(&(a.prob * a.value))
            .then_with(|| a.id.cmp(&b.id)),
        PolicyKind::MaxP => b
            .prob
            .total_cmp(&a.prob)
            .then_with(|| b.value.total_cmp(&a.value))
            .then_with(|| a.id.cmp(&b.id)),
        PolicyKind::MaxV => b
            .value
            .total_cmp(&a.value)
            .then_with(|| b.prob.total_cmp(&a.prob))
            .then_with(|| a.id.cmp(&b.id)),
    }
}

/// The (at most) `n1` best candidates under `policy`.
pub fn proactive_phase(state: &OnlineState, candidates: &[Candidate], n1: usize, policy: PolicyKind) -> PacketSet {
    if n1 >= candidates.len() {
        return candidates.iter().map(|c| c.id).collect();
    }
    if n1 == 0 {
        return PacketSet::new();
    }
    let mut ranked = candidates.to_vec();
    ranked.select_nth_unstable_by(n1 - 1, |a, b| policy_order(policy, state.lambda, a, b));
    ranked[..n1].iter().map(|c| c.id).collect()
}

/// The `n2` most valuable wanted packets not in `already_sent` (ties: smaller id).
pub fn deadline_phase(wanted: &PacketSet, already_sent: &PacketSet, catalog: &Catalog, n2: usize) -> Result<PacketSet> {
    let mut eligible = Vec::new();
    for id in wanted.iter() {
        let value = catalog.value(id)?;
        if !already_sent.contains(id) {
            eligible.push((value, id));
        }
    }
    let order = |a: &(f64, PacketId), b: &(f64, PacketId)| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1));
    if n2 < eligible.len() {
        if n2 == 0 {
            return Ok(PacketSet::new());
        }
        eligible.select_nth_unstable_by(n2 - 1, order);
        eligible.truncate(n2);
    }
    Ok(eligible.into_iter().map(|(_, id)| id).collect())
}

/// `λ ← [λ - h_t (N2 - Σ z)]⁺`, then advances `t`.
pub fn lambda_update(state: &mut OnlineState, z_sum: usize, n2: usize) -> f64 {
    let h = state.steps.step_size(state.t);
    state.lambda = (state.lambda - h * (n2 as f64 - z_sum as f64)).max(0.0);
    state.t += 1;
    state.lambda
}

/// Identifiers of the previous and realized system states, for the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatePair {
    pub prev: u64,
    pub realized: u64,
}

/// One full interval: proactive phase, reveal, deadline phase, price update.
///
/// Baselines leave the price untouched; only [`PolicyKind::Predictive`] learns.
pub fn run_interval(
    state: &mut OnlineState,
    pool: &CandidatePool,
    wanted: &PacketSet,
    states: StatePair,
    budgets: &IntervalConfig,
    policy: PolicyKind,
) -> Result<IntervalTrace> {
    let catalog = pool.catalog();
    let candidates: Vec<Candidate> = pool.candidates().collect();
    let t = state.t;
    let lambda = state.lambda;

    let proactive_sent = proactive_phase(state, &candidates, budgets.n1(), policy);

    let mut w = Vec::new();
    let mut z = Vec::new();
    for id in wanted.iter() {
        let value = catalog.value(id)?;
        if !proactive_sent.contains(id) {
            w.push(id);
            if value >= lambda {
                z.push(id);
            }
        }
    }
    let w: PacketSet = w.into_iter().collect();
    let z: PacketSet = z.into_iter().collect();

    let deadline_sent = deadline_phase(wanted, &proactive_sent, catalog, budgets.n2())?;

    let delivered: PacketSet = proactive_sent.iter().chain(deadline_sent.iter()).collect();
    let qoe = interval_qoe(wanted, &delivered, catalog)?;

    let lambda_after = if policy == PolicyKind::Predictive {
        lambda_update(state, z.len(), budgets.n2())
    } else {
        state.t += 1;
        state.lambda
    };

    Ok(IntervalTrace {
        t,
        prev_state: states.prev,
        realized_state: states.realized,
        proactive_sent,
        deadline_sent,
        w,
        z,
        lambda,
        lambda_after,
        qoe,
    })
}
