//! Solves a small expected-QoE problem with the dual method and checks it
//! against the reference LP.

use predsched::model::IntervalConfig;
use predsched::offline::{lp_oracle, solve, OfflineProblem, StepSchedule, StopRule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two states visited equally often; three packets with different values.
    let values = [10.0, 4.0, 1.0];
    let stationary = vec![0.5, 0.5];
    let probs = vec![vec![0.9, 0.2, 0.5], vec![0.1, 0.8, 0.5]];
    let budgets = IntervalConfig::new(3, 2)?;
    let problem = OfflineProblem::from_dense(&values, stationary, probs, budgets)?;

    let solution = solve(&problem, StepSchedule::harmonic(1.0)?, StopRule::default());
    let plan = &solution.plan;
    println!("lambda* = {:.4} after {} subgradient steps", plan.lambda, solution.history.len());
    println!("primal objective {:.6}, dual bound {:.6}", plan.objective, plan.dual_value);
    println!("reference LP      {:.6}", lp_oracle(&problem)?);
    for (s, name) in plan.states.iter().enumerate() {
        println!("{name}: x = {:?}, y = {:?}", plan.x[s], plan.y[s]);
    }
    Ok(())
}
