//! The online policy's realized demand matches the offline dual quantities.

use predsched::mobility::{heading_transition_matrix, stationary_distribution, TransitionMatrix};
use predsched::model::{image_packets, Catalog, Cell, IntervalConfig, PacketId, PacketSet, UserId, PACKETS_PER_IMAGE};
use predsched::offline::{solve, subgradient, OfflineProblem, StepSchedule, StopRule};
use predsched::online::{run_interval, CandidatePool, OnlineState, PolicyKind, StatePair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn heading_setup(q: f64, budgets: IntervalConfig) -> (OfflineProblem, Catalog, Vec<Vec<f64>>, TransitionMatrix) {
    let chain = heading_transition_matrix(q).unwrap();
    let f = stationary_distribution(&chain).unwrap();
    let packets = (0..4)
        .flat_map(|d| image_packets(UserId(0), Cell::new(d, 0), (d as usize * PACKETS_PER_IMAGE) as u32))
        .collect();
    let catalog = Catalog::new(packets).unwrap();
    let values: Vec<f64> = catalog.packets().iter().map(|p| p.value).collect();
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|s| (0..4 * PACKETS_PER_IMAGE).map(|k| chain.get(s, k / PACKETS_PER_IMAGE)).collect())
        .collect();
    let problem = OfflineProblem::from_dense(&values, f, rows.clone(), budgets).unwrap();
    (problem, catalog, rows, chain)
}

fn next_heading(chain: &TransitionMatrix, from: usize, u: f64) -> usize {
    let mut acc = 0.0;
    for d in 0..4 {
        acc += chain.get(from, d);
        if u < acc {
            return d;
        }
    }
    3
}

/// Mean and standard error of `N2 - Σz` with the price frozen at `lambda`.
fn frozen_price_subgradient(q: f64, budgets: IntervalConfig, lambda: f64, intervals: usize) -> (f64, f64) {
    let (_, catalog, rows, chain) = heading_setup(q, budgets);
    let mut pool = CandidatePool::new(catalog, rows[0].clone()).unwrap();
    let mut state = OnlineState { lambda, t: 1, steps: StepSchedule::Constant { h: 0.0 } };
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut heading = 0;
    let mut samples = Vec::with_capacity(intervals);
    for _ in 0..intervals {
        pool.set_probs(rows[heading].clone()).unwrap();
        let next = next_heading(&chain, heading, rng.random());
        let wanted: PacketSet = (0..PACKETS_PER_IMAGE).map(|k| PacketId((next * PACKETS_PER_IMAGE + k) as u32)).collect();
        let trace = run_interval(&mut state, &pool, &wanted, StatePair::default(), &budgets, PolicyKind::Predictive).unwrap();
        trace.check(&budgets, &wanted).unwrap();
        assert_eq!(trace.lambda_after, lambda);
        samples.push(budgets.n2() as f64 - trace.z.len() as f64);
        heading = next;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn realized_demand_estimates_the_subgradient() {
    for (q, budgets) in [(0.6, IntervalConfig::new(20, 16).unwrap()), (0.3, IntervalConfig::new(40, 36).unwrap())] {
        let (problem, ..) = heading_setup(q, budgets);
        let lambda_star = solve(&problem, StepSchedule::default(), StopRule::default()).plan.lambda;
        for lambda in [lambda_star, 0.0, 1.0, 3.0, 20.0] {
            let (mean, se) = frozen_price_subgradient(q, budgets, lambda, 20_000);
            let exact = subgradient(&problem, lambda);
            assert!((mean - exact).abs() <= 3.0 * se.max(1e-12), "q={q} lambda={lambda}: {mean} vs {exact} (se {se})");
        }
    }
}

#[test]
fn learned_price_approaches_offline_optimum() {
    let budgets = IntervalConfig::new(40, 36).unwrap();
    let (problem, catalog, rows, chain) = heading_setup(0.3, budgets);
    let lambda_star = solve(&problem, StepSchedule::default(), StopRule::default()).plan.lambda;
    let mut pool = CandidatePool::new(catalog, rows[0].clone()).unwrap();
    let mut state = OnlineState::new(StepSchedule::default());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut heading = 0;
    // the first interval drives the price near v_max; harmonic steps need ~35k intervals to come back
    let mut tail = Vec::new();
    for t in 0..60_000 {
        pool.set_probs(rows[heading].clone()).unwrap();
        let next = next_heading(&chain, heading, rng.random());
        let wanted: PacketSet = (0..PACKETS_PER_IMAGE).map(|k| PacketId((next * PACKETS_PER_IMAGE + k) as u32)).collect();
        if t >= 45_000 {
            tail.push(state.lambda);
        }
        run_interval(&mut state, &pool, &wanted, StatePair::default(), &budgets, PolicyKind::Predictive).unwrap();
        heading = next;
    }
    let avg = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!((avg - lambda_star).abs() <= 0.05_f64.max(0.05 * lambda_star), "{avg} vs {lambda_star}");
}
