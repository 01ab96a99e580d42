//! Predictive scheduling when the server misjudges each user's forward
//! probability by up to 0.1, against the same runs with exact knowledge.

use predsched::online::PolicyKind;
use predsched::sim::{desk_budgets, run, ErrorSpec, ScenarioConfig, Q_SWEEP};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>4}  {:>9}  {:>9}  {:>7}", "q", "perfect", "noisy", "gap");
    for &q in &Q_SWEEP {
        let mut perfect = ScenarioConfig::slots(10, q, desk_budgets(36), PolicyKind::Predictive, 1000);
        perfect.replications = 10;
        let mut noisy = perfect.clone();
        noisy.q_error = Some(ErrorSpec { uniform_halfwidth: 0.1 });
        let (a, b) = (run(&perfect)?, run(&noisy)?);
        println!(
            "{q:>4}  {:>9.4}  {:>9.4}  {:>6.2}%",
            a.mean_qoe,
            b.mean_qoe,
            100.0 * (b.mean_qoe - a.mean_qoe) / a.mean_qoe
        );
    }
    Ok(())
}
