//! Learns the price online for one user whose next heading follows the
//! mobility model, and compares it with the offline optimum of the same model.

use predsched::mobility::{heading_transition_matrix, stationary_distribution};
use predsched::model::{image_packets, Catalog, Cell, IntervalConfig, PacketId, PacketSet, UserId, PACKETS_PER_IMAGE};
use predsched::offline::{solve, OfflineProblem, StepSchedule, StopRule};
use predsched::online::{run_interval, CandidatePool, OnlineState, PolicyKind, StatePair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = 0.6;
    let budgets = IntervalConfig::new(20, 16)?;
    let chain = heading_transition_matrix(q)?;

    // One image per absolute direction; the state is the current heading.
    let packets = (0..4).flat_map(|d| image_packets(UserId(0), Cell::new(d, 0), (d as usize * PACKETS_PER_IMAGE) as u32));
    let catalog = Catalog::new(packets.collect())?;
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|s| (0..catalog.len()).map(|k| chain.get(s, k / PACKETS_PER_IMAGE)).collect())
        .collect();
    let values: Vec<f64> = catalog.packets().iter().map(|p| p.value).collect();
    let problem = OfflineProblem::from_dense(&values, stationary_distribution(&chain)?, rows.clone(), budgets)?;
    let offline = solve(&problem, StepSchedule::default(), StopRule::default()).plan;

    let mut pool = CandidatePool::new(catalog, rows[0].clone())?;
    let mut state = OnlineState::new(StepSchedule::default());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut heading = 0;
    let mut qoe = 0.0;
    for t in 1..=20_000 {
        pool.set_probs(rows[heading].clone())?;
        let u: f64 = rng.random();
        let mut next = 3;
        let mut acc = 0.0;
        for d in 0..4 {
            acc += chain.get(heading, d);
            if u < acc {
                next = d;
                break;
            }
        }
        let wanted: PacketSet = (0..PACKETS_PER_IMAGE).map(|k| PacketId((next * PACKETS_PER_IMAGE + k) as u32)).collect();
        let trace = run_interval(&mut state, &pool, &wanted, StatePair::default(), &budgets, PolicyKind::Predictive)?;
        qoe += trace.qoe;
        if [1, 10, 100, 1000, 20_000].contains(&t) {
            println!("interval {t:>6}: lambda {:.4}, mean QoE so far {:.3}", state.lambda, qoe / t as f64);
        }
        heading = next;
    }
    println!("offline lambda* {:.4}, offline expected QoE {:.3}", offline.lambda, offline.objective);
    Ok(())
}
