//! Compares the four policies over the forward-probability sweep at desk scale.
//!
//! Usage: cargo run --release --example policy_sweep -- [users] [replications] [intervals]

use predsched::online::PolicyKind;
use predsched::sim::{compare, desk_budgets, ScenarioConfig, Q_SWEEP};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let users = args.first().copied().unwrap_or(10);
    let replications = args.get(1).copied().unwrap_or(10);
    let intervals = args.get(2).copied().unwrap_or(1000);

    let configs: Vec<ScenarioConfig> = Q_SWEEP
        .iter()
        .flat_map(|&q| {
            PolicyKind::ALL.map(|policy| {
                let mut c = ScenarioConfig::slots(users, q, desk_budgets(36), policy, intervals);
                c.replications = replications;
                c
            })
        })
        .collect();
    println!("{:>4}  {:>10}  {:>9}  {:>8}", "q", "policy", "mean_qoe", "stddev");
    for row in compare(&configs)? {
        println!("{:>4}  {:>10}  {:>9.4}  {:>8.4}", row.q, row.policy, row.mean_qoe, row.stddev);
    }
    Ok(())
}
