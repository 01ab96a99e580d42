//! Shared domain types and the QoE accounting rule.
//!
//! QoE is additive: every delivered packet that is also wanted contributes its
//! value, independent of which other layers of the same image arrived.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for every constraint check.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Number of packets one panoramic image is split into.
pub const PACKETS_PER_IMAGE: usize = 44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketId(pub u32);

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

/// A grid point of the virtual world. Each cell has its own panoramic image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    Base,
    Enh1,
    Enh2,
    Enh3,
    Enh4,
}

impl Layer {
    pub const ALL: [Layer; 5] = [Layer::Base, Layer::Enh1, Layer::Enh2, Layer::Enh3, Layer::Enh4];

    /// Packets per image in this layer.
    pub const fn packet_count(self) -> usize {
        match self {
            Layer::Base => 1,
            Layer::Enh1 => 1,
            Layer::Enh2 => 3,
            Layer::Enh3 => 12,
            Layer::Enh4 => 27,
        }
    }

    /// QoE value of a single packet of this layer (quality increment over the
    /// previous layer divided by the layer's packet count).
    pub const fn packet_value(self) -> f64 {
        match self {
            Layer::Base => 27.924,
            Layer::Enh1 => 4.088,
            Layer::Enh2 => 1.798,
            Layer::Enh3 => 0.419,
            Layer::Enh4 => 0.194,
        }
    }

    /// Layer of the `slot`-th packet of an image, packets ordered base first.
    pub fn of_slot(slot: usize) -> Option<Layer> {
        let mut start = 0;
        for layer in Layer::ALL {
            start += layer.packet_count();
            if slot < start {
                return Some(layer);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    pub id: PacketId,
    pub value: f64,
    pub layer: Layer,
    pub owner: UserId,
    pub location: Cell,
}

/// The 44 packets of one image, ids starting at `first_id`.
pub fn image_packets(owner: UserId, location: Cell, first_id: u32) -> Vec<PacketSpec> {
    (0..PACKETS_PER_IMAGE)
        .map(|slot| {
            let layer = Layer::of_slot(slot).expect("slot within image");
            PacketSpec {
                id: PacketId(first_id + slot as u32),
                value: layer.packet_value(),
                layer,
                owner,
                location,
            }
        })
        .collect()
}

/// Packets of a single image for user 0 at the origin, ids `0..44`.
pub fn default_layer_catalog() -> Vec<PacketSpec> {
    image_packets(UserId(0), Cell::new(0, 0), 0)
}

/// A set of packet ids kept as a sorted, deduplicated vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketSet(Vec<PacketId>);

impl PacketSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn contains(&self, id: PacketId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn insert(&mut self, id: PacketId) -> bool {
        match self.0.binary_search(&id) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, id);
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = PacketId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[PacketId] {
        &self.0
    }

    pub fn is_disjoint(&self, other: &PacketSet) -> bool {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.iter().all(|id| !large.contains(id))
    }

    pub fn is_subset(&self, other: &PacketSet) -> bool {
        self.iter().all(|id| other.contains(id))
    }

    pub fn intersection(&self, other: &PacketSet) -> PacketSet {
        PacketSet(self.iter().filter(|&id| other.contains(id)).collect())
    }
}

impl FromIterator<PacketId> for PacketSet {
    fn from_iter<I: IntoIterator<Item = PacketId>>(iter: I) -> Self {
        let mut ids: Vec<PacketId> = iter.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        PacketSet(ids)
    }
}

/// Packets indexed by id. Ids are unique and values nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    packets: Vec<PacketSpec>,
}

impl Catalog {
    pub fn new(mut packets: Vec<PacketSpec>) -> Result<Self> {
        if !packets.windows(2).all(|w| w[0].id < w[1].id) {
            packets.sort_by_key(|p| p.id);
            if let Some(w) = packets.windows(2).find(|w| w[0].id == w[1].id) {
                return Err(Error::input(format!("duplicate packet id {}", w[0].id)));
            }
        }
        if let Some(p) = packets.iter().find(|p| !(p.value >= 0.0 && p.value.is_finite())) {
            return Err(Error::input(format!("packet {} has invalid value {}", p.id, p.value)));
        }
        Ok(Self { packets })
    }

    pub fn get(&self, id: PacketId) -> Option<&PacketSpec> {
        self.position(id).map(|i| &self.packets[i])
    }

    pub fn position(&self, id: PacketId) -> Option<usize> {
        self.packets.binary_search_by_key(&id, |p| p.id).ok()
    }

    pub fn value(&self, id: PacketId) -> Result<f64> {
        self.get(id).map(|p| p.value).ok_or(Error::UnknownPacket(id))
    }

    pub fn packets(&self) -> &[PacketSpec] {
        &self.packets
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn total_value(&self) -> f64 {
        self.packets.iter().map(|p| p.value).sum()
    }
}

/// QoE delivered in one interval: the sum of values over wanted ∩ delivered.
pub fn interval_qoe(wanted: &PacketSet, delivered: &PacketSet, catalog: &Catalog) -> Result<f64> {
    for id in wanted.iter().chain(delivered.iter()) {
        if catalog.position(id).is_none() {
            return Err(Error::UnknownPacket(id));
        }
    }
    let mut total = 0.0;
    for id in wanted.iter() {
        if delivered.contains(id) {
            total += catalog.value(id)?;
        }
    }
    Ok(total)
}

/// Slot budgets of one interval: `M` slots, the first `N1` proactive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawIntervalConfig", deny_unknown_fields)]
pub struct IntervalConfig {
    pub total_slots: u32,
    pub proactive_slots: u32,
    pub deadline_slots: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntervalConfig {
    total_slots: u32,
    proactive_slots: u32,
    deadline_slots: u32,
}

impl TryFrom<RawIntervalConfig> for IntervalConfig {
    type Error = Error;

    fn try_from(raw: RawIntervalConfig) -> Result<Self> {
        let cfg = IntervalConfig {
            total_slots: raw.total_slots,
            proactive_slots: raw.proactive_slots,
            deadline_slots: raw.deadline_slots,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl IntervalConfig {
    /// Splits `total_slots` so that the last `total_slots - proactive_slots` are deadline slots.
    pub fn new(total_slots: u32, proactive_slots: u32) -> Result<Self> {
        if proactive_slots > total_slots {
            return Err(Error::input(format!(
                "proactive slots {proactive_slots} exceed total slots {total_slots}"
            )));
        }
        let cfg = Self {
            total_slots,
            proactive_slots,
            deadline_slots: total_slots - proactive_slots,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_slots == 0 {
            return Err(Error::input("an interval needs at least one slot"));
        }
        self.check_split()
    }

    /// Only checks that the two phases add up; an all-zero interval passes.
    pub fn check_split(&self) -> Result<()> {
        if self.proactive_slots as u64 + self.deadline_slots as u64 != self.total_slots as u64 {
            return Err(Error::input(format!(
                "proactive ({}) + deadline ({}) slots must equal total slots ({})",
                self.proactive_slots, self.deadline_slots, self.total_slots
            )));
        }
        Ok(())
    }

    pub fn n1(&self) -> usize {
        self.proactive_slots as usize
    }

    pub fn n2(&self) -> usize {
        self.deadline_slots as usize
    }
}

/// Stationary weights `f_s` and want-probabilities `p_{s,i}` over a finite state space.
///
/// Packets missing from a state's map have want-probability zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    states: Vec<String>,
    stationary: Vec<f64>,
    want_prob: Vec<BTreeMap<PacketId, f64>>,
}

impl DemandModel {
    pub fn new(
        states: Vec<String>,
        stationary: Vec<f64>,
        want_prob: Vec<BTreeMap<PacketId, f64>>,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::input("demand model needs at least one state"));
        }
        if stationary.len() != states.len() || want_prob.len() != states.len() {
            return Err(Error::input(format!(
                "{} states but {} stationary weights and {} want-probability rows",
                states.len(),
                stationary.len(),
                want_prob.len()
            )));
        }
        if let Some((s, f)) = stationary.iter().enumerate().find(|(_, f)| !(**f >= 0.0)) {
            return Err(Error::input(format!("stationary weight of state {s} is {f}")));
        }
        let sum: f64 = stationary.iter().sum();
        if (sum - 1.0).abs() > CONSTRAINT_TOL {
            return Err(Error::input(format!("stationary weights sum to {sum}, expected 1")));
        }
        for (s, row) in want_prob.iter().enumerate() {
            if let Some((id, p)) = row.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
                return Err(Error::input(format!(
                    "want-probability of packet {id} in state {s} is {p}"
                )));
            }
        }
        Ok(Self {
            states,
            stationary,
            want_prob,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn want(&self, state: usize, id: PacketId) -> f64 {
        self.want_prob[state].get(&id).copied().unwrap_or(0.0)
    }

    pub fn want_row(&self, state: usize) -> &BTreeMap<PacketId, f64> {
        &self.want_prob[state]
    }
}

/// Decision variables of the offline problem plus the dual price they came from.
///
/// `x[s][k]` and `y[s][k]` refer to packet `packets[k]` in state `states[s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub states: Vec<String>,
    pub packets: Vec<PacketId>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub lambda: f64,
    /// Expected QoE `Σ_s f_s Σ_i v_i (x p + y)` of this plan.
    pub objective: f64,
    /// Smallest dual value observed while solving; an upper bound on the optimum.
    pub dual_value: f64,
}

impl SchedulePlan {
    /// Lists every violated LP constraint, empty when the plan is feasible.
    pub fn violations(&self, demand: &DemandModel, budgets: &IntervalConfig) -> Vec<String> {
        let mut out = Vec::new();
        let n1 = budgets.proactive_slots as f64;
        let n2 = budgets.deadline_slots as f64;
        let mut deadline_mass = 0.0;
        for (s, f) in demand.stationary().iter().enumerate() {
            let mut proactive = 0.0;
            for (k, &id) in self.packets.iter().enumerate() {
                let p = demand.want(s, id);
                let (x, y) = (self.x[s][k], self.y[s][k]);
                if !(-CONSTRAINT_TOL..=1.0 + CONSTRAINT_TOL).contains(&x) {
                    out.push(format!("x[{s}][{id}] = {x} outside [0,1]"));
                }
                if y < -CONSTRAINT_TOL {
                    out.push(format!("y[{s}][{id}] = {y} negative"));
                }
                if y > p * (1.0 - x) + CONSTRAINT_TOL {
                    out.push(format!("y[{s}][{id}] = {y} exceeds p(1-x) = {}", p * (1.0 - x)));
                }
                proactive += x;
                deadline_mass += f * y;
            }
            if proactive > n1 + CONSTRAINT_TOL {
                out.push(format!("state {s} sends {proactive} proactive packets, budget {n1}"));
            }
        }
        if deadline_mass > n2 + CONSTRAINT_TOL {
            out.push(format!("average deadline load {deadline_mass} exceeds {n2}"));
        }
        out
    }
}

/// Record of one online interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTrace {
    pub t: u64,
    pub prev_state: u64,
    pub realized_state: u64,
    pub proactive_sent: PacketSet,
    pub deadline_sent: PacketSet,
    /// Packets with `w_i = 1`: wanted and not sent proactively.
    pub w: PacketSet,
    /// Packets with `z_i = 1`: `w_i = 1` and `v_i >= λ(t)`.
    pub z: PacketSet,
    /// Price used during the interval.
    pub lambda: f64,
    pub lambda_after: f64,
    pub qoe: f64,
}

impl IntervalTrace {
    /// Checks the per-interval invariants against the budgets and the realized wants.
    pub fn check(&self, budgets: &IntervalConfig, wanted: &PacketSet) -> Result<()> {
        let fail = |msg: String| Err(Error::input(format!("interval {}: {msg}", self.t)));
        if self.proactive_sent.len() > budgets.n1() {
            return fail(format!("{} proactive packets > N1 = {}", self.proactive_sent.len(), budgets.n1()));
        }
        if self.deadline_sent.len() > budgets.n2() {
            return fail(format!("{} deadline packets > N2 = {}", self.deadline_sent.len(), budgets.n2()));
        }
        if !self.proactive_sent.is_disjoint(&self.deadline_sent) {
            return fail("a packet was sent in both phases".into());
        }
        if !self.w.is_subset(wanted) || !self.w.is_disjoint(&self.proactive_sent) {
            return fail("w marks a packet that is unwanted or already sent".into());
        }
        if !self.z.is_subset(&self.w) {
            return fail("z_i = 1 without w_i = 1".into());
        }
        if self.lambda_after < 0.0 {
            return fail(format!("negative price {}", self.lambda_after));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[u32]) -> PacketSet {
        ids.iter().map(|&i| PacketId(i)).collect()
    }

    #[test]
    fn catalog_matches_layer_table() {
        let cat = default_layer_catalog();
        assert_eq!(cat.len(), 44);
        let count = |l: Layer| cat.iter().filter(|p| p.layer == l).count();
        assert_eq!(
            [count(Layer::Base), count(Layer::Enh1), count(Layer::Enh2), count(Layer::Enh3), count(Layer::Enh4)],
            [1, 1, 3, 12, 27]
        );
        assert!(cat.iter().all(|p| p.value >= 0.0));
        let total: f64 = cat.iter().map(|p| p.value).sum();
        let by_hand = 27.924 + 4.088 + 3.0 * 1.798 + 12.0 * 0.419 + 27.0 * 0.194;
        assert!((total - by_hand).abs() < 1e-9);
        assert!((total - 47.672).abs() < 1e-9);
    }

    #[test]
    fn qoe_examples() {
        let cat = Catalog::new(default_layer_catalog()).unwrap();
        let base = PacketId(0);
        let e1 = PacketId(1);
        let q = interval_qoe(&set(&[0]), &set(&[0]), &cat).unwrap();
        assert!((q - 27.924).abs() < 1e-12);
        assert_eq!(interval_qoe(&PacketSet::new(), &set(&[0, 1, 2]), &cat).unwrap(), 0.0);
        let q = interval_qoe(&[base, e1].into_iter().collect(), &set(&[1]), &cat).unwrap();
        assert!((q - 4.088).abs() < 1e-12);
    }

    #[test]
    fn qoe_rejects_unknown_ids() {
        let cat = Catalog::new(default_layer_catalog()).unwrap();
        let err = interval_qoe(&set(&[0]), &set(&[99]), &cat).unwrap_err();
        assert!(matches!(err, Error::UnknownPacket(PacketId(99))));
    }

    #[test]
    fn catalog_rejects_duplicates_and_negative_values() {
        let mut packets = default_layer_catalog();
        packets[3].id = PacketId(0);
        assert!(Catalog::new(packets).is_err());
        let mut packets = default_layer_catalog();
        packets[0].value = -1.0;
        assert!(Catalog::new(packets).is_err());
    }

    #[test]
    fn interval_config_requires_split() {
        assert!(IntervalConfig::new(40, 36).is_ok());
        assert!(IntervalConfig::new(40, 41).is_err());
        assert!(IntervalConfig::new(0, 0).is_err());
        let bad = IntervalConfig { total_slots: 10, proactive_slots: 5, deadline_slots: 4 };
        assert!(bad.validate().is_err());
        let parsed: std::result::Result<IntervalConfig, _> =
            toml::from_str("total_slots = 10\nproactive_slots = 5\ndeadline_slots = 4");
        assert!(parsed.is_err());
    }

    #[test]
    fn demand_model_validates() {
        let row: BTreeMap<PacketId, f64> = [(PacketId(0), 0.5)].into();
        assert!(DemandModel::new(vec!["a".into()], vec![1.0], vec![row.clone()]).is_ok());
        assert!(DemandModel::new(vec!["a".into()], vec![0.9], vec![row.clone()]).is_err());
        let bad: BTreeMap<PacketId, f64> = [(PacketId(0), 1.5)].into();
        assert!(DemandModel::new(vec!["a".into()], vec![1.0], vec![bad]).is_err());
        assert!(DemandModel::new(
            vec!["a".into(), "b".into()],
            vec![1.5, -0.5],
            vec![row.clone(), row]
        )
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn qoe_monotone_and_restricted(
                wanted in proptest::collection::vec(0u32..44, 0..44),
                delivered in proptest::collection::vec(0u32..44, 0..44),
                extra in 0u32..44,
            ) {
                let cat = Catalog::new(default_layer_catalog()).unwrap();
                let wanted = set(&wanted);
                let delivered = set(&delivered);
                let base = interval_qoe(&wanted, &delivered, &cat).unwrap();
                let mut more = delivered.clone();
                more.insert(PacketId(extra));
                prop_assert!(interval_qoe(&wanted, &more, &cat).unwrap() >= base);
                let restricted = delivered.intersection(&wanted);
                prop_assert_eq!(interval_qoe(&wanted, &restricted, &cat).unwrap(), base);
            }
        }
    }
}
