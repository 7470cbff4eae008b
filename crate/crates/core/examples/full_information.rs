//! Optimal transport when both weight and latent state are observed.
//!
//! `cargo run --release --example full_information -- [n]`

use fpimpulse::optimize::{active_intervals, optimize_full, Scenario};

fn main() -> fpimpulse::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(101);
    let sc = Scenario::baseline(0.048, 0.051).with_resolution(n, 0.01);
    let report = optimize_full(&sc)?;
    println!("objective {:.6e}", report.objective_value);
    for (j, tau) in sc.schedule.times.iter().enumerate() {
        let nodes = report.policy.controls[j].iter().filter(|&&u| u > 0.0).count();
        println!("tau = {tau:>4}: {nodes:>6} active nodes, w-projection {:?}", active_intervals(&report.policy, j));
    }
    Ok(())
}
