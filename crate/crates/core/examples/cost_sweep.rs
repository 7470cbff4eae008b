//! Active transport sets as the unit cost grows.
//!
//! `cargo run --release --example cost_sweep -- [n]`

use fpimpulse::optimize::{active_count, cost_sweep, Scenario};

fn main() -> fpimpulse::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(61);
    let cs: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    for (r1, r2) in [(0.048, 0.051), (0.051, 0.048)] {
        let sc = Scenario::baseline(r1, r2).with_resolution(n, 0.01);
        println!("r1 = {r1}, r2 = {r2}: active nodes per impulse");
        for entry in cost_sweep(&sc, &cs, 50)? {
            let counts: Vec<usize> = (0..sc.schedule.len()).map(|j| active_count(&entry.report.policy, j)).collect();
            println!("  c = {:.1}: {counts:?}  phi = {:.4e}", entry.c, entry.report.objective_value);
        }
    }
    Ok(())
}
