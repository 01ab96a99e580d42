//! Byte-budget variant for single-layer frames.
//!
//! Each location's panorama exists in a few resolutions (plus a zero-size null
//! choice), and the budgets are kilobytes rather than slots. The proactive
//! phase picks one resolution per neighbouring location, maximizing the summed
//! score from [`frame_alpha`]. The deadline phase picks, per user, the upgrade with
//! the largest QoE improvement over what already arrived. Both are
//! multiple-choice knapsacks solved exactly by dynamic programming on a 0.01 KB grid.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Cell;
use crate::offline::StepSchedule;
use crate::online::OnlineState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "null")]
    Null,
    #[serde(rename = "512p")]
    R512,
    #[serde(rename = "1024p")]
    R1024,
    #[serde(rename = "2K")]
    R2K,
}

impl Resolution {
    pub const ALL: [Resolution; 4] = [Resolution::Null, Resolution::R512, Resolution::R1024, Resolution::R2K];

    /// Average encoded size in KB.
    pub const fn size_kb(self) -> f64 {
        match self {
            Resolution::Null => 0.0,
            Resolution::R512 => 15.07,
            Resolution::R1024 => 50.18,
            Resolution::R2K => 185.86,
        }
    }

    pub const fn qoe(self) -> f64 {
        match self {
            Resolution::Null => 0.0,
            Resolution::R512 => 512.0,
            Resolution::R1024 => 1024.0,
            Resolution::R2K => 2048.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Resolution::Null => "null",
            Resolution::R512 => "512p",
            Resolution::R1024 => "1024p",
            Resolution::R2K => "2K",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameOption {
    pub location: Cell,
    pub resolution: Resolution,
    pub size_kb: f64,
    pub qoe: f64,
}

impl FrameOption {
    pub fn is_null(&self) -> bool {
        self.size_kb == 0.0
    }
}

/// Null, 512p, 1024p and 2K frames of one location.
pub fn table_options(location: Cell) -> Vec<FrameOption> {
    Resolution::ALL
        .iter()
        .map(|&resolution| FrameOption {
            location,
            resolution,
            size_kb: resolution.size_kb(),
            qoe: resolution.qoe(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByteBudgets {
    pub proactive_kb: f64,
    pub deadline_kb: f64,
}

impl Default for ByteBudgets {
    fn default() -> Self {
        Self { proactive_kb: 200.0, deadline_kb: 60.0 }
    }
}

impl ByteBudgets {
    pub fn new(proactive_kb: f64, deadline_kb: f64) -> Result<Self> {
        let b = Self { proactive_kb, deadline_kb };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, kb) in [("proactive", self.proactive_kb), ("deadline", self.deadline_kb)] {
            if !(kb >= 0.0 && kb.is_finite()) {
                return Err(Error::input(format!("{name} budget must be a nonnegative number of KB, got {kb}")));
            }
        }
        Ok(())
    }
}

/// Proactive score of a frame of value `v` and size `theta` at price `λ` (QoE per KB).
pub fn frame_alpha(v: f64, theta: f64, p: f64, lambda: f64) -> f64 {
    if theta <= 0.0 {
        return 0.0;
    }
    if v / theta >= lambda {
        lambda * theta * p
    } else {
        v * p
    }
}

/// Resolution of the knapsack grid.
pub const KB_STEP: f64 = 0.01;
const GRID_SLACK: f64 = 1e-6;
const VALUE_EPS: f64 = 1e-9;

/// Size in grid units, rounded up.
pub fn size_units(size_kb: f64) -> u64 {
    (size_kb / KB_STEP - GRID_SLACK).ceil().max(0.0) as u64
}

/// Budget in grid units, rounded down.
pub fn budget_units(budget_kb: f64) -> u64 {
    (budget_kb / KB_STEP + GRID_SLACK).floor().max(0.0) as u64
}

/// One option per group, with the achieved value and total size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackChoice {
    pub chosen: Vec<usize>,
    pub total_value: f64,
    pub total_size_kb: f64,
}

/// `a` beats `b`: larger value, or equal value and smaller size.
fn better(a: (f64, u64), b: (f64, u64)) -> bool {
    let tol = VALUE_EPS * (1.0 + b.0.abs());
    a.0 > b.0 + tol || ((a.0 - b.0).abs() <= tol && a.1 < b.1)
}

fn same(a: (f64, u64), b: (f64, u64)) -> bool {
    (a.0 - b.0).abs() <= VALUE_EPS * (1.0 + b.0.abs()) && a.1 == b.1
}

/// Exact multiple-choice knapsack: choose one `(size_kb, value)` option per
/// group, maximizing total value within `budget_kb`.
///
/// Every group must contain a zero-size option. Among optimal selections the
/// smallest total size wins, then the lexicographically smallest option indices.
pub fn solve_multiple_choice(groups: &[Vec<(f64, f64)>], budget_kb: f64) -> Result<KnapsackChoice> {
    if !(budget_kb >= 0.0) {
        return Err(Error::input(format!("negative knapsack budget {budget_kb}")));
    }
    let mut unit_groups = Vec::with_capacity(groups.len());
    let mut max_total = 0u64;
    for (g, options) in groups.iter().enumerate() {
        if !options.iter().any(|&(s, _)| s == 0.0) {
            return Err(Error::input(format!("group {g} has no zero-size option")));
        }
        if let Some(&(s, v)) = options.iter().find(|&&(s, v)| !(s >= 0.0 && v.is_finite())) {
            return Err(Error::input(format!("group {g} has invalid option (size {s}, value {v})")));
        }
        let units: Vec<(u64, f64)> = options.iter().map(|&(s, v)| (size_units(s), v)).collect();
        max_total += units.iter().map(|u| u.0).max().unwrap_or(0);
        unit_groups.push(units);
    }
    let cap = budget_units(budget_kb).min(max_total) as usize;
    let width = cap + 1;
    let n = unit_groups.len();

    // best[g * width + c]: best (value, size) over groups g.. with capacity c.
    let mut best = vec![(0.0_f64, 0u64); (n + 1) * width];
    for g in (0..n).rev() {
        let (head, tail) = best.split_at_mut((g + 1) * width);
        let row = &mut head[g * width..];
        let next = &tail[..width];
        for c in 0..width {
            let mut top: Option<(f64, u64)> = None;
            for &(s, v) in &unit_groups[g] {
                let s = s as usize;
                if s > c {
                    continue;
                }
                let rest = next[c - s];
                let cand = (v + rest.0, s as u64 + rest.1);
                if top.is_none_or(|t| better(cand, t)) {
                    top = Some(cand);
                }
            }
            row[c] = top.expect("zero-size option always fits");
        }
    }

    let mut chosen = Vec::with_capacity(n);
    let mut c = cap;
    for g in 0..n {
        let target = best[g * width + c];
        let next = &best[(g + 1) * width..(g + 2) * width];
        let (idx, s) = unit_groups[g]
            .iter()
            .enumerate()
            .find_map(|(i, &(s, v))| {
                let s = s as usize;
                (s <= c && same((v + next[c - s].0, s as u64 + next[c - s].1), target)).then_some((i, s))
            })
            .expect("optimal option exists");
        chosen.push(idx);
        c -= s;
    }
    let total_value = chosen.iter().zip(groups).map(|(&i, g)| g[i].1).sum();
    let total_size_kb = chosen.iter().zip(groups).map(|(&i, g)| g[i].0).sum();
    Ok(KnapsackChoice { chosen, total_value, total_size_kb })
}

/// One resolution per location maximizing `Σ frame_alpha` within `budget_kb`.
pub fn proactive_knapsack(
    groups: &[Vec<FrameOption>],
    probs: &[f64],
    lambda: f64,
    budget_kb: f64,
) -> Result<KnapsackChoice> {
    if groups.len() != probs.len() {
        return Err(Error::input(format!("{} locations but {} probabilities", groups.len(), probs.len())));
    }
    let scored: Vec<Vec<(f64, f64)>> = groups
        .iter()
        .zip(probs)
        .map(|(options, &p)| {
            options
                .iter()
                .map(|o| (o.size_kb, frame_alpha(o.qoe, o.size_kb, p, lambda)))
                .collect()
        })
        .collect();
    solve_multiple_choice(&scored, budget_kb)
}

/// A user's realized location: its frame options and the best QoE already delivered there.
#[derive(Debug, Clone, PartialEq)]
pub struct UpgradeRequest {
    pub options: Vec<FrameOption>,
    pub delivered_qoe: f64,
}

/// At most one upgrade per realized location, maximizing the total QoE improvement.
pub fn deadline_knapsack(requests: &[UpgradeRequest], budget_kb: f64) -> Result<KnapsackChoice> {
    let scored: Vec<Vec<(f64, f64)>> = requests
        .iter()
        .map(|r| {
            r.options
                .iter()
                .map(|o| (o.size_kb, (o.qoe - r.delivered_qoe).max(0.0)))
                .collect()
        })
        .collect();
    solve_multiple_choice(&scored, budget_kb)
}

/// Price update for the byte variant, in QoE-per-KB units.
pub fn byte_lambda_update(lambda: f64, h: f64, deadline_kb: f64, bytes_demanded: f64) -> f64 {
    (lambda - h * (deadline_kb - bytes_demanded)).max(0.0)
}

/// One user's view of an interval: options and predicted probabilities for each
/// neighbouring location, and which neighbour turned out to be the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct ByteUserView {
    pub neighbors: Vec<Vec<FrameOption>>,
    pub probs: Vec<f64>,
    pub realized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByteIntervalTrace {
    pub t: u64,
    pub lambda: f64,
    pub lambda_after: f64,
    /// Proactive resolution per user and neighbour.
    pub proactive: Vec<Vec<Resolution>>,
    /// Deadline upgrade per user (`Null` when nothing was sent).
    pub deadline: Vec<Resolution>,
    pub proactive_kb: f64,
    pub deadline_kb: f64,
    pub bytes_demanded: f64,
    pub qoe_per_user: Vec<f64>,
    pub qoe: f64,
}

impl ByteIntervalTrace {
    pub fn within_budget(&self, budgets: &ByteBudgets) -> bool {
        self.proactive_kb <= budgets.proactive_kb + 1e-9 && self.deadline_kb <= budgets.deadline_kb + 1e-9
    }
}

/// Runs one interval of the learned byte-budget policy for all users.
///
/// A frame counts as demanded when it is at a user's destination, was not sent
/// proactively, would raise that user's QoE, and has QoE-per-KB at least `λ`.
pub fn run_byte_interval(state: &mut OnlineState, users: &[ByteUserView], budgets: &ByteBudgets) -> Result<ByteIntervalTrace> {
    let t = state.t;
    let lambda = state.lambda;
    let mut groups = Vec::new();
    let mut probs = Vec::new();
    for (u, user) in users.iter().enumerate() {
        if user.neighbors.len() != user.probs.len() || user.realized >= user.neighbors.len() {
            return Err(Error::input(format!("user {u}: inconsistent neighbour data")));
        }
        groups.extend(user.neighbors.iter().cloned());
        probs.extend(user.probs.iter().copied());
    }
    let proactive = proactive_knapsack(&groups, &probs, lambda, budgets.proactive_kb)?;

    let mut offset = 0;
    let mut proactive_res = Vec::with_capacity(users.len());
    let mut requests = Vec::with_capacity(users.len());
    let mut bytes_demanded = 0.0;
    for user in users {
        let picks = &proactive.chosen[offset..offset + user.neighbors.len()];
        proactive_res.push(
            picks
                .iter()
                .zip(&user.neighbors)
                .map(|(&i, opts)| opts[i].resolution)
                .collect::<Vec<_>>(),
        );
        let options = &user.neighbors[user.realized];
        let sent = &options[picks[user.realized]];
        for o in options {
            if !o.is_null() && o.resolution != sent.resolution && o.qoe > sent.qoe && o.qoe / o.size_kb >= lambda {
                bytes_demanded += o.size_kb;
            }
        }
        requests.push(UpgradeRequest { options: options.clone(), delivered_qoe: sent.qoe });
        offset += user.neighbors.len();
    }

    let deadline = deadline_knapsack(&requests, budgets.deadline_kb)?;
    let deadline_res: Vec<Resolution> = deadline
        .chosen
        .iter()
        .zip(&requests)
        .map(|(&i, r)| if r.options[i].qoe > r.delivered_qoe { r.options[i].resolution } else { Resolution::Null })
        .collect();
    let qoe_per_user: Vec<f64> = deadline
        .chosen
        .iter()
        .zip(&requests)
        .map(|(&i, r)| r.delivered_qoe.max(r.options[i].qoe))
        .collect();
    let deadline_kb = deadline
        .chosen
        .iter()
        .zip(&requests)
        .zip(&deadline_res)
        .map(|((&i, r), res)| if *res == Resolution::Null { 0.0 } else { r.options[i].size_kb })
        .sum();

    let h = state.steps.step_size(t);
    state.lambda = byte_lambda_update(lambda, h, budgets.deadline_kb, bytes_demanded);
    state.t += 1;

    Ok(ByteIntervalTrace {
        t,
        lambda,
        lambda_after: state.lambda,
        proactive: proactive_res,
        deadline: deadline_res,
        proactive_kb: proactive.total_size_kb,
        deadline_kb,
        bytes_demanded,
        qoe: qoe_per_user.iter().sum(),
        qoe_per_user,
    })
}

/// Resolution a mobility-unaware server would send to each of `locations`
/// neighbours when splitting `budget_kb` evenly: the one whose size is closest
/// to the per-location share.
pub fn even_split_resolution(budget_kb: f64, locations: usize) -> Resolution {
    let share = budget_kb / locations.max(1) as f64;
    Resolution::ALL
        .into_iter()
        .min_by(|a, b| (a.size_kb() - share).abs().total_cmp(&(b.size_kb() - share).abs()))
        .expect("non-empty")
}

/// Neighbour labels in the order used by the single-player scenario.
pub const NEIGHBOR_LABELS: [&str; 4] = ["forward", "left", "right", "backward"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSettings {
    pub budgets: ByteBudgets,
    /// Forward, left, right, backward.
    pub probabilities: [f64; 4],
    pub learning_intervals: usize,
    pub step_c: f64,
    pub seed: u64,
    /// Neighbour the player actually turns to in the reported interval.
    pub sudden_turn: usize,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        Self {
            budgets: ByteBudgets::default(),
            probabilities: [0.7, 0.1, 0.1, 0.1],
            learning_intervals: 1000,
            step_c: 1.0,
            seed: 0,
            sudden_turn: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationDecision {
    pub location: String,
    pub probability: f64,
    pub resolution: Resolution,
    pub size_kb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineDecision {
    pub realized: String,
    pub delivered_before: Resolution,
    pub upgrade: Resolution,
    pub size_kb: f64,
    pub displayed_qoe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvenSplitDecision {
    pub resolution: Resolution,
    pub per_location_kb: f64,
    pub total_kb: f64,
    pub displayed_qoe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub settings: ScenarioSettings,
    pub learned_lambda: f64,
    pub proactive: Vec<LocationDecision>,
    pub proactive_total_kb: f64,
    pub deadline_after_turn: DeadlineDecision,
    pub even_split: EvenSplitDecision,
    pub learning_budget_violations: usize,
    pub learning_mean_qoe: f64,
}

fn single_player_view(probs: [f64; 4], realized: usize) -> ByteUserView {
    ByteUserView {
        neighbors: (0..4).map(|k| table_options(Cell::new(k as i32, 0))).collect(),
        probs: probs.to_vec(),
        realized,
    }
}

/// Single player with fixed movement probabilities: learns the price over
/// `learning_intervals`, then reports both phases' decisions at that price.
pub fn single_player_scenario(settings: &ScenarioSettings) -> Result<ScenarioReport> {
    settings.budgets.validate()?;
    let sum: f64 = settings.probabilities.iter().sum();
    if settings.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("movement probabilities {:?} are not a distribution", settings.probabilities)));
    }
    if settings.sudden_turn >= 4 {
        return Err(Error::input("sudden turn must name one of the four neighbours"));
    }
    let mut rng = crate::sim::stream_rng(settings.seed, 0);
    let mut state = OnlineState::new(StepSchedule::harmonic(settings.step_c)?);
    let mut violations = 0;
    let mut total_qoe = 0.0;
    for _ in 0..settings.learning_intervals {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut realized = 3;
        for (k, p) in settings.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                realized = k;
                break;
            }
        }
        let trace = run_byte_interval(&mut state, &[single_player_view(settings.probabilities, realized)], &settings.budgets)?;
        if !trace.within_budget(&settings.budgets) {
            violations += 1;
        }
        total_qoe += trace.qoe;
    }
    let lambda = state.lambda;

    let view = single_player_view(settings.probabilities, settings.sudden_turn);
    let proactive = proactive_knapsack(&view.neighbors, &view.probs, lambda, settings.budgets.proactive_kb)?;
    let decisions: Vec<LocationDecision> = proactive
        .chosen
        .iter()
        .enumerate()
        .map(|(k, &i)| LocationDecision {
            location: NEIGHBOR_LABELS[k].to_string(),
            probability: settings.probabilities[k],
            resolution: view.neighbors[k][i].resolution,
            size_kb: view.neighbors[k][i].size_kb,
        })
        .collect();
    let before = view.neighbors[settings.sudden_turn][proactive.chosen[settings.sudden_turn]];
    let request = UpgradeRequest { options: view.neighbors[settings.sudden_turn].clone(), delivered_qoe: before.qoe };
    let upgrade = deadline_knapsack(std::slice::from_ref(&request), settings.budgets.deadline_kb)?;
    let picked = request.options[upgrade.chosen[0]];
    let (upgrade_res, upgrade_kb) = if picked.qoe > before.qoe { (picked.resolution, picked.size_kb) } else { (Resolution::Null, 0.0) };

    let even = even_split_resolution(settings.budgets.proactive_kb, 4);
    Ok(ScenarioReport {
        settings: settings.clone(),
        learned_lambda: lambda,
        proactive: decisions,
        proactive_total_kb: proactive.total_size_kb,
        deadline_after_turn: DeadlineDecision {
            realized: NEIGHBOR_LABELS[settings.sudden_turn].to_string(),
            delivered_before: before.resolution,
            upgrade: upgrade_res,
            size_kb: upgrade_kb,
            displayed_qoe: before.qoe.max(picked.qoe),
        },
        even_split: EvenSplitDecision {
            resolution: even,
            per_location_kb: even.size_kb(),
            total_kb: 4.0 * even.size_kb(),
            displayed_qoe: even.qoe(),
        },
        learning_budget_violations: violations,
        learning_mean_qoe: if settings.learning_intervals > 0 { total_qoe / settings.learning_intervals as f64 } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search with the same tie rules as the DP.
    fn enumerate(groups: &[Vec<(f64, f64)>], budget_kb: f64) -> (f64, f64) {
        let cap = budget_units(budget_kb);
        let mut best: Option<((f64, u64), f64)> = None;
        let mut idx = vec![0usize; groups.len()];
        loop {
            let size: u64 = idx.iter().zip(groups).map(|(&i, g)| size_units(g[i].0)).sum();
            if size <= cap {
                let value: f64 = idx.iter().zip(groups).map(|(&i, g)| g[i].1).sum();
                let kb: f64 = idx.iter().zip(groups).map(|(&i, g)| g[i].0).sum();
                if best.is_none_or(|(b, _)| better((value, size), b)) {
                    best = Some(((value, size), kb));
                }
            }
            let mut g = 0;
            loop {
                if g == groups.len() {
                    let ((v, _), kb) = best.unwrap();
                    return (v, kb);
                }
                idx[g] += 1;
                if idx[g] < groups[g].len() {
                    break;
                }
                idx[g] = 0;
                g += 1;
            }
        }
    }

    #[test]
    fn table_pattern() {
        let opts = table_options(Cell::new(0, 0));
        assert!(opts[0].is_null() && opts[0].qoe == 0.0);
        for w in opts[1..].windows(2) {
            assert!(w[1].qoe > w[0].qoe);
            assert!(w[1].qoe / w[1].size_kb < w[0].qoe / w[0].size_kb);
        }
        assert!((512.0 / 15.07 - 33.97_f64).abs() < 0.01);
    }

    #[test]
    fn frame_alpha_examples() {
        let a = frame_alpha(2048.0, 185.86, 0.7, 5.0);
        assert!((a - 650.51).abs() < 1e-9, "{a}");
        for r in &Resolution::ALL[1..] {
            let a = frame_alpha(r.qoe(), r.size_kb(), 0.3, 40.0);
            assert!((a - r.qoe() * 0.3).abs() < 1e-12);
            assert_eq!(frame_alpha(r.qoe(), r.size_kb(), 0.3, 0.0), 0.0);
        }
        assert_eq!(frame_alpha(0.0, 0.0, 0.9, 3.0), 0.0);
    }

    #[test]
    fn grid_rounding_is_conservative() {
        assert_eq!(size_units(15.07), 1507);
        assert_eq!(size_units(185.86), 18586);
        assert_eq!(size_units(0.001), 1);
        assert_eq!(budget_units(60.0), 6000);
        assert_eq!(budget_units(0.019), 1);
    }

    #[test]
    fn forward_location_gets_2k() {
        let groups: Vec<_> = (0..4).map(|k| table_options(Cell::new(k, 0))).collect();
        let probs = [0.7, 0.1, 0.1, 0.1];
        for lambda in [0.5, 5.0, 11.0, 15.0, 20.4, 30.0, 40.0, 500.0] {
            let c = proactive_knapsack(&groups, &probs, lambda, 200.0).unwrap();
            assert_eq!(c.chosen, vec![3, 0, 0, 0], "lambda {lambda}");
        }
        let c = proactive_knapsack(&groups, &probs, 8.0, 0.0).unwrap();
        assert_eq!(c.chosen, vec![0; 4]);
        // At zero price every score is zero; the smallest total size wins.
        let c = proactive_knapsack(&groups, &probs, 0.0, 200.0).unwrap();
        assert_eq!(c.chosen, vec![0; 4]);
    }

    #[test]
    fn deadline_examples() {
        let opts = table_options(Cell::new(1, 0));
        let req = |delivered: f64| vec![UpgradeRequest { options: opts.clone(), delivered_qoe: delivered }];
        let c = deadline_knapsack(&req(0.0), 60.0).unwrap();
        assert_eq!(opts[c.chosen[0]].resolution, Resolution::R1024);
        let c = deadline_knapsack(&req(2048.0), 500.0).unwrap();
        assert_eq!(opts[c.chosen[0]].resolution, Resolution::Null);
        let c = deadline_knapsack(&req(0.0), 185.86).unwrap();
        assert_eq!(opts[c.chosen[0]].resolution, Resolution::R2K);
        let c = deadline_knapsack(&req(512.0), 14.0).unwrap();
        assert_eq!(opts[c.chosen[0]].resolution, Resolution::Null);
    }

    #[test]
    fn byte_lambda_examples() {
        assert!((byte_lambda_update(10.0, 0.1, 60.0, 185.86) - 22.586).abs() < 1e-9);
        assert_eq!(byte_lambda_update(7.5, 0.3, 60.0, 60.0), 7.5);
        assert_eq!(byte_lambda_update(0.0, 1.0, 60.0, 10.0), 0.0);
    }

    #[test]
    fn rejects_groups_without_null() {
        assert!(solve_multiple_choice(&[vec![(1.0, 1.0)]], 10.0).is_err());
        assert!(solve_multiple_choice(&[vec![(0.0, 0.0)]], -1.0).is_err());
    }

    #[test]
    fn dp_matches_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let groups_n = rng.random_range(1..=4);
            let mut groups = Vec::new();
            let mut total = 0;
            for _ in 0..groups_n {
                let k = rng.random_range(1..=3).min(12 - total - 1).max(1);
                total += k + 1;
                let mut g = vec![(0.0, 0.0)];
                for _ in 0..k {
                    let size = (rng.random_range(1.0..80.0_f64) * 100.0).round() / 100.0;
                    g.push((size, rng.random_range(0.0..100.0)));
                }
                groups.push(g);
            }
            let budget = rng.random_range(0.0..150.0);
            let dp = solve_multiple_choice(&groups, budget).unwrap();
            let (value, _) = enumerate(&groups, budget);
            assert!((dp.total_value - value).abs() <= 1e-9 * (1.0 + value.abs()));
            assert!(dp.total_size_kb <= budget + 1e-9);
        }
    }

    #[test]
    fn interval_respects_byte_budgets() {
        let mut state = OnlineState::new(StepSchedule::default());
        let budgets = ByteBudgets::default();
        for realized in [0, 1, 2, 3, 0, 0, 3] {
            let trace = run_byte_interval(&mut state, &[single_player_view([0.7, 0.1, 0.1, 0.1], realized)], &budgets).unwrap();
            assert!(trace.within_budget(&budgets));
            assert!(trace.lambda_after >= 0.0);
        }
    }

    #[test]
    fn scenario_defaults() {
        let report = single_player_scenario(&ScenarioSettings::default()).unwrap();
        assert!(report.learned_lambda > 0.0);
        let res: Vec<Resolution> = report.proactive.iter().map(|d| d.resolution).collect();
        assert_eq!(res, vec![Resolution::R2K, Resolution::Null, Resolution::Null, Resolution::Null]);
        assert_eq!(report.deadline_after_turn.upgrade, Resolution::R1024);
        assert_eq!(report.even_split.resolution, Resolution::R1024);
        assert_eq!(report.learning_budget_violations, 0);
        let zero = single_player_scenario(&ScenarioSettings {
            budgets: ByteBudgets::new(0.0, 60.0).unwrap(),
            ..Default::default()
        })
        .unwrap();
        assert!(zero.proactive.iter().all(|d| d.resolution == Resolution::Null));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn proactive_value_monotone_in_budget(
                probs in proptest::array::uniform4(0.0f64..=1.0),
                lambda in 0.0f64..50.0,
                budget in 0.0f64..300.0,
                extra in 0.0f64..100.0,
            ) {
                let groups: Vec<_> = (0..4).map(|k| table_options(Cell::new(k, 0))).collect();
                let small = proactive_knapsack(&groups, &probs, lambda, budget).unwrap();
                let large = proactive_knapsack(&groups, &probs, lambda, budget + extra).unwrap();
                prop_assert!(large.total_value >= small.total_value - 1e-9);
                prop_assert!(small.total_size_kb <= budget + 1e-9);
            }
        }
    }
}
