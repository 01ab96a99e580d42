//! Grid mobility with direction memory, and stationary distributions of finite chains.
//!
//! A user sits on a grid point and remembers the direction of its last move.
//! Each interval it moves forward with probability `q`, turns left or right
//! with probability `2(1-q)/5` each, or moves backward with `(1-q)/5`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Catalog, Cell, PacketId};

/// Direction of travel. On the grid `N` decreases `y` and `E` increases `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heading {
    N,
    E,
    S,
    W,
}

impl Heading {
    /// Clockwise order; `index()` follows it.
    pub const ALL: [Heading; 4] = [Heading::N, Heading::E, Heading::S, Heading::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Heading::ALL[i % 4]
    }

    pub fn turn(self, movement: Movement) -> Heading {
        let offset = match movement {
            Movement::Forward => 0,
            Movement::Right => 1,
            Movement::Backward => 2,
            Movement::Left => 3,
        };
        Heading::from_index(self.index() + offset)
    }

    /// The movement that turns `self` into `target`.
    pub fn movement_to(self, target: Heading) -> Movement {
        match (target.index() + 4 - self.index()) % 4 {
            0 => Movement::Forward,
            1 => Movement::Right,
            2 => Movement::Backward,
            _ => Movement::Left,
        }
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::N => (0, -1),
            Heading::E => (1, 0),
            Heading::S => (0, 1),
            Heading::W => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Movement {
    Forward,
    Left,
    Right,
    Backward,
}

impl Movement {
    pub const ALL: [Movement; 4] = [Movement::Forward, Movement::Left, Movement::Right, Movement::Backward];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Topology {
    #[default]
    Torus,
    /// Moves off the edge are impossible; the remaining moves are renormalized.
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMobilityParams {
    pub q: f64,
    pub grid_width: u32,
    pub grid_height: u32,
    #[serde(default)]
    pub topology: Topology,
}

impl GridMobilityParams {
    pub fn new(q: f64, grid_width: u32, grid_height: u32, topology: Topology) -> Result<Self> {
        let params = Self { q, grid_width, grid_height, topology };
        params.validate()?;
        Ok(params)
    }

    pub fn torus(q: f64, size: u32) -> Result<Self> {
        Self::new(q, size, size, Topology::Torus)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::input(format!("forward probability q = {} outside [0,1]", self.q)));
        }
        // Four distinct neighbours on a torus need at least three cells per axis.
        let min = match self.topology {
            Topology::Torus => 3,
            Topology::Bounded => 2,
        };
        if self.grid_width < min || self.grid_height < min {
            return Err(Error::input(format!(
                "{:?} grid must be at least {min}x{min}, got {}x{}",
                self.topology, self.grid_width, self.grid_height
            )));
        }
        Ok(())
    }

    /// Same grid, different forward probability (clamped to `[0,1]`).
    pub fn with_q(&self, q: f64) -> Self {
        Self { q: q.clamp(0.0, 1.0), ..*self }
    }

    pub fn contains(&self, cell: Cell) -> bool {
        (0..self.grid_width as i32).contains(&cell.x) && (0..self.grid_height as i32).contains(&cell.y)
    }

    pub fn num_cells(&self) -> usize {
        self.grid_width as usize * self.grid_height as usize
    }

    /// Cell reached by moving one step in `dir`, `None` if that leaves a bounded grid.
    pub fn neighbor(&self, cell: Cell, dir: Heading) -> Option<Cell> {
        let (dx, dy) = dir.delta();
        let (w, h) = (self.grid_width as i32, self.grid_height as i32);
        match self.topology {
            Topology::Torus => Some(Cell::new((cell.x + dx).rem_euclid(w), (cell.y + dy).rem_euclid(h))),
            Topology::Bounded => {
                let next = Cell::new(cell.x + dx, cell.y + dy);
                self.contains(next).then_some(next)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovementDistribution {
    pub forward: f64,
    pub left: f64,
    pub right: f64,
    pub backward: f64,
}

impl MovementDistribution {
    pub fn probability(&self, movement: Movement) -> f64 {
        match movement {
            Movement::Forward => self.forward,
            Movement::Left => self.left,
            Movement::Right => self.right,
            Movement::Backward => self.backward,
        }
    }

    pub fn sum(&self) -> f64 {
        self.forward + self.left + self.right + self.backward
    }
}

pub fn movement_distribution(q: f64) -> Result<MovementDistribution> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::input(format!("forward probability q = {q} outside [0,1]")));
    }
    let turn = 2.0 * (1.0 - q) / 5.0;
    Ok(MovementDistribution {
        forward: q,
        left: turn,
        right: turn,
        // Written as the complement so the four terms sum to one exactly.
        backward: 1.0 - q - 2.0 * turn,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UserState {
    pub position: Cell,
    pub heading: Heading,
}

impl UserState {
    pub fn new(position: Cell, heading: Heading) -> Self {
        Self { position, heading }
    }

    /// Uniform position and heading.
    pub fn random<R: Rng + ?Sized>(params: &GridMobilityParams, rng: &mut R) -> Self {
        let x = rng.random_range(0..params.grid_width) as i32;
        let y = rng.random_range(0..params.grid_height) as i32;
        let heading = Heading::from_index(rng.random_range(0..4));
        Self::new(Cell::new(x, y), heading)
    }
}

/// Probability of moving in each absolute direction, indexed by `Heading::index()`.
///
/// On a bounded grid, off-grid directions get zero and the rest are renormalized.
pub fn direction_probabilities(state: &UserState, params: &GridMobilityParams) -> [f64; 4] {
    let dist = movement_distribution(params.q.clamp(0.0, 1.0)).expect("q clamped");
    let mut probs = [0.0; 4];
    for dir in Heading::ALL {
        if params.neighbor(state.position, dir).is_some() {
            probs[dir.index()] = dist.probability(state.heading.movement_to(dir));
        }
    }
    let total: f64 = probs.iter().sum();
    if params.topology == Topology::Bounded && total > 0.0 && total < 1.0 {
        probs.iter_mut().for_each(|p| *p /= total);
    } else if total == 0.0 {
        // Every reachable move has probability zero (q = 1 facing a wall).
        // Fall back to a uniform choice over the legal moves.
        let legal: Vec<Heading> = Heading::ALL
            .into_iter()
            .filter(|&d| params.neighbor(state.position, d).is_some())
            .collect();
        for d in &legal {
            probs[d.index()] = 1.0 / legal.len() as f64;
        }
    }
    probs
}

/// Moves one step using a uniform draw `u` in `[0,1)`.
pub fn step_with_draw(state: &UserState, params: &GridMobilityParams, u: f64) -> UserState {
    let probs = direction_probabilities(state, params);
    // Forward, left, right, backward order so a small draw means "forward".
    let order = [
        state.heading,
        state.heading.turn(Movement::Left),
        state.heading.turn(Movement::Right),
        state.heading.turn(Movement::Backward),
    ];
    let mut acc = 0.0;
    let mut chosen = None;
    for dir in order {
        let p = probs[dir.index()];
        if p <= 0.0 {
            continue;
        }
        acc += p;
        chosen = Some(dir);
        if u < acc {
            break;
        }
    }
    let dir = chosen.expect("at least one legal move");
    let position = params.neighbor(state.position, dir).expect("chosen move is legal");
    UserState::new(position, dir)
}

pub fn step<R: Rng + ?Sized>(state: &UserState, params: &GridMobilityParams, rng: &mut R) -> UserState {
    step_with_draw(state, params, rng.random::<f64>())
}

/// Want-probability of every catalog packet given the user's current state.
///
/// A packet gets the probability of the move that leads to its location; packets
/// located elsewhere get zero.
pub fn demand_probabilities(
    state: &UserState,
    params: &GridMobilityParams,
    catalog: &Catalog,
) -> BTreeMap<PacketId, f64> {
    let probs = direction_probabilities(state, params);
    let targets: Vec<(Cell, f64)> = Heading::ALL
        .into_iter()
        .filter_map(|d| params.neighbor(state.position, d).map(|c| (c, probs[d.index()])))
        .collect();
    catalog
        .packets()
        .iter()
        .map(|p| {
            let prob = targets
                .iter()
                .filter(|(c, _)| *c == p.location)
                .map(|(_, pr)| *pr)
                .sum::<f64>();
            (p.id, prob)
        })
        .collect()
}

/// Per-user perceived forward-probability offsets `e_i ~ U[-h, h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub halfwidth: f64,
    pub per_user_offset: Vec<f64>,
}

impl ErrorModel {
    pub fn none(num_users: usize) -> Self {
        Self { halfwidth: 0.0, per_user_offset: vec![0.0; num_users] }
    }

    /// Draws one offset per user, each from its own generator.
    pub fn draw<R: Rng>(halfwidth: f64, rngs: &mut [R]) -> Self {
        let per_user_offset = rngs
            .iter_mut()
            .map(|rng| if halfwidth > 0.0 { rng.random_range(-halfwidth..=halfwidth) } else { 0.0 })
            .collect();
        Self { halfwidth, per_user_offset }
    }

    pub fn perceived_q(&self, q: f64, user: usize) -> f64 {
        (q + self.per_user_offset[user]).clamp(0.0, 1.0)
    }
}

/// Dense row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::input("empty transition matrix"));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::input(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NonStochastic { row: i, sum });
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Chains up to this size are solved directly; larger ones by power iteration.
const DIRECT_SOLVE_MAX: usize = 1024;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 1_000_000;

/// Stationary distribution `π` with `πP = π`, `Σπ = 1`.
pub fn stationary_distribution(transition: &TransitionMatrix) -> Result<Vec<f64>> {
    if transition.len() <= DIRECT_SOLVE_MAX {
        direct_stationary(transition)
    } else {
        power_stationary(transition)
    }
}

fn direct_stationary(transition: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = transition.len();
    // (Pᵀ - I) π = 0 with the last equation replaced by Σπ = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = transition.get(i, j);
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or(Error::NoConvergence { iterations: 0 })?;
    if pi.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(Error::NoConvergence { iterations: 0 });
    }
    let mut pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

fn power_stationary(transition: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = transition.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..POWER_MAX_ITERS {
        // Lazy chain (P + I)/2 has the same fixed point and is aperiodic.
        next.iter_mut().zip(&pi).for_each(|(nx, p)| *nx = 0.5 * p);
        for (i, &mass) in pi.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (nx, &p) in next.iter_mut().zip(transition.row(i)) {
                *nx += 0.5 * mass * p;
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < POWER_TOL {
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|v| *v /= total);
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITERS })
}

/// Index of `(cell, heading)` in [`grid_transition_matrix`].
pub fn grid_state_index(params: &GridMobilityParams, state: &UserState) -> usize {
    let cell = (state.position.y as usize) * params.grid_width as usize + state.position.x as usize;
    cell * 4 + state.heading.index()
}

/// Transition matrix of one user's `(cell, heading)` chain.
pub fn grid_transition_matrix(params: &GridMobilityParams) -> Result<TransitionMatrix> {
    params.validate()?;
    let n = params.num_cells() * 4;
    let mut rows = vec![vec![0.0; n]; n];
    for y in 0..params.grid_height as i32 {
        for x in 0..params.grid_width as i32 {
            for heading in Heading::ALL {
                let state = UserState::new(Cell::new(x, y), heading);
                let from = grid_state_index(params, &state);
                let probs = direction_probabilities(&state, params);
                for dir in Heading::ALL {
                    if let Some(cell) = params.neighbor(state.position, dir) {
                        let to = grid_state_index(params, &UserState::new(cell, dir));
                        rows[from][to] += probs[dir.index()];
                    }
                }
            }
        }
    }
    TransitionMatrix::from_rows(rows)
}

/// Heading-only chain. On a torus the heading evolves independently of position.
pub fn heading_transition_matrix(q: f64) -> Result<TransitionMatrix> {
    let dist = movement_distribution(q)?;
    let rows = Heading::ALL
        .iter()
        .map(|&from| {
            Heading::ALL
                .iter()
                .map(|&to| dist.probability(from.movement_to(to)))
                .collect()
        })
        .collect();
    TransitionMatrix::from_rows(rows)
}
