//! Instantaneous QoE and price over the first intervals, averaged over
//! replications that all start from a zero price.

use predsched::online::PolicyKind;
use predsched::sim::{convergence_probe, desk_budgets, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ScenarioConfig::slots(10, 0.5, desk_budgets(36), PolicyKind::Predictive, 400);
    config.replications = 50;
    let rows = convergence_probe(&config)?;
    for r in rows.iter().filter(|r| r.interval <= 10 || r.interval % 100 == 0) {
        println!("interval {:>3}: QoE {:.3} ± {:.3}, lambda {:.3}", r.interval, r.mean, r.stddev, r.lambda);
    }
    let tail = &rows[rows.len() * 3 / 4..];
    println!("last-quartile mean {:.3}", tail.iter().map(|r| r.mean).sum::<f64>() / tail.len() as f64);
    Ok(())
}
