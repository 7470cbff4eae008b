//! Population densities in both habitats under a fixed transport policy.
//!
//! `cargo run --release --example forward_transport -- [n]`

use fpimpulse::optimize::{objective, Scenario};
use fpimpulse::pde::{solve_forward, ControlPolicy, InfoMode};

fn main() -> fpimpulse::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(81);
    let sc = Scenario::baseline(0.048, 0.051).with_resolution(n, 0.01);
    // Move the full cap of every size class at every impulse.
    let policy = ControlPolicy::constant(InfoMode::Partial, sc.grid, sc.schedule.len(), sc.cap_u, sc.cap_u);
    let fwd = solve_forward(&sc, &policy)?;

    println!("{:>6} {:>14} {:>14}", "day", "habitat 1", "habitat 2");
    for &(t, m1, m2) in fwd.mass_history.iter().filter(|m| (m.0 / 10.0).fract().abs() < 1e-9) {
        println!("{t:>6.1} {m1:>14.1} {m2:>14.1}");
    }
    let (y1, y2) = &fwd.terminal;
    let (lo, hi) = sc.window().expect("nonempty window");
    println!(
        "day {}: {:.1} fish in habitat 2 within [{:.2}, {:.2}] of log weight, min density {:.2e}",
        fwd.horizon,
        y2.window_integral(lo, hi)?,
        lo,
        hi,
        y1.min().min(y2.min())
    );
    println!("objective {:.6e}", objective(&sc, &policy, &fwd)?);
    Ok(())
}
