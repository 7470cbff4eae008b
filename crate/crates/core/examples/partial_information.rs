//! Picard iteration for the size-based transport policy.
//!
//! `cargo run --release --example partial_information -- [n] [c]`

use fpimpulse::optimize::{active_intervals, optimize_partial, Scenario};

fn main() -> fpimpulse::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(101);
    let c: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let sc = Scenario::baseline(0.048, 0.051).with_resolution(n, 0.01).with_cost(c);
    let report = optimize_partial(&sc, 50, None)?;
    println!(
        "converged {} after {} iterations, sup-norm changes {:?}",
        report.converged, report.iterations, report.delta_history
    );
    println!("objective {:.6e}", report.objective_value);
    for (j, tau) in sc.schedule.times.iter().enumerate() {
        let runs: Vec<String> = active_intervals(&report.policy, j)
            .iter()
            .map(|(a, b)| format!("[{:.1} g, {:.1} g]", a.exp(), b.exp()))
            .collect();
        println!("tau = {tau:>4}: {}", if runs.is_empty() { "none".into() } else { runs.join(" ") });
    }
    Ok(())
}
