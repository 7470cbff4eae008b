//! Monte-Carlo weight statistics of the growth model.
//!
//! `cargo run --release --example growth_simulation -- [paths]`

use fpimpulse::growth::{
    deterministic_solution, simulate_noiseless, simulate_weight_stats, GrowthParams, ModelKind,
};

fn main() -> fpimpulse::Result<()> {
    let paths: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let params = GrowthParams::identified_2019();
    let times = [30.0, 60.0, 90.0];
    let dt = 0.004;

    println!("{paths} paths, dt = {dt}");
    println!("{:>8} {:>5} {:>9} {:>9} {:>9}", "model", "day", "Ave (g)", "Std (g)", "Skw");
    for kind in [ModelKind::Proposed, ModelKind::Legacy] {
        let stats = simulate_weight_stats(&params, kind, &times, dt, paths, 2019)?;
        for (t, (avg, std, skew)) in times.iter().zip(stats) {
            let skew = skew.map_or("-".to_string(), |s| format!("{s:.3}"));
            println!("{:>8} {t:>5} {avg:>9.2} {std:>9.2} {skew:>9}", format!("{kind:?}"));
        }
    }

    // Without noise the scheme follows the closed-form solution.
    let quiet = simulate_noiseless(&params, ModelKind::Proposed, &times, dt)?;
    for (t, (w, z)) in times.iter().zip(quiet) {
        let (we, ze) = deterministic_solution(&params, *t);
        println!("noise-free day {t}: weight {:.3} g (exact {:.3}), z {z:.5} (exact {ze:.5})", w.exp(), we.exp());
    }
    Ok(())
}
