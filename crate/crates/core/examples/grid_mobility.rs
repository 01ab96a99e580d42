//! Grid mobility with direction memory: movement probabilities, a sample walk,
//! and the stationary distribution of the full position-heading chain.

use predsched::mobility::{
    direction_probabilities, grid_transition_matrix, movement_distribution, stationary_distribution, step,
    GridMobilityParams, Heading, UserState,
};
use predsched::model::Cell;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = 0.6;
    let m = movement_distribution(q)?;
    println!("q = {q}: forward {:.2}, left {:.2}, right {:.2}, backward {:.2}", m.forward, m.left, m.right, m.backward);

    let params = GridMobilityParams::torus(q, 6)?;
    let mut user = UserState::new(Cell::new(0, 0), Heading::N);
    println!("from {:?}: direction probabilities (N, E, S, W) = {:?}", user, direction_probabilities(&user, &params));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..8 {
        user = step(&user, &params, &mut rng);
        print!("({},{}){:?} ", user.position.x, user.position.y, user.heading);
    }
    println!();

    let chain = grid_transition_matrix(&params)?;
    let f = stationary_distribution(&chain)?;
    let (min, max) = f.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &x| (a.min(x), b.max(x)));
    println!("{} states, stationary mass between {min:.5} and {max:.5}", f.len());
    Ok(())
}
