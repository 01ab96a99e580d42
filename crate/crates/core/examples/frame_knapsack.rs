//! Byte-budget decisions for one player who usually walks forward: which
//! resolution to prefetch for each neighbour, and which upgrade to send after
//! an unexpected turn.

use predsched::knapsack::{single_player_scenario, ScenarioSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = single_player_scenario(&ScenarioSettings::default())?;
    println!("learned price {:.3} QoE/KB", report.learned_lambda);
    for d in &report.proactive {
        println!("  {:<8} p={:.1}  {:>5}  {:>7.2} KB", d.location, d.probability, d.resolution.label(), d.size_kb);
    }
    let dl = &report.deadline_after_turn;
    println!(
        "turned {}: had {}, upgraded to {} ({:.2} KB), displays QoE {}",
        dl.realized,
        dl.delivered_before.label(),
        dl.upgrade.label(),
        dl.size_kb,
        dl.displayed_qoe
    );
    let even = &report.even_split;
    println!("even split instead: {} everywhere, {:.2} KB in total", even.resolution.label(), even.total_kb);
    Ok(())
}
