//! Adjoint directional derivatives against finite differences.
//!
//! `cargo run --release --example gradient_check -- [n]`

use std::f64::consts::PI;

use fpimpulse::optimize::{adjoint_for_policy, gateaux_derivative, objective, Scenario};
use fpimpulse::pde::{solve_forward, ControlPolicy, InfoMode, Scheme};

fn main() -> fpimpulse::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(61);
    for scheme in [Scheme::FirstOrder, Scheme::Weno] {
        let mut sc = Scenario::baseline(0.048, 0.051).with_resolution(n, 0.01);
        sc.scheme = scheme;
        let m = sc.schedule.len();
        let u = ControlPolicy::constant(InfoMode::Partial, sc.grid, m, sc.cap_u, 0.5 * sc.cap_u);
        let fwd = solve_forward(&sc, &u)?;
        let adj = adjoint_for_policy(&sc, &u)?;
        let phi = |p: &ControlPolicy| -> fpimpulse::Result<f64> { objective(&sc, p, &solve_forward(&sc, p)?) };
        for mode in 1..=3 {
            let mut v = ControlPolicy::zeros(InfoMode::Partial, sc.grid, m, sc.cap_u);
            for line in v.controls.iter_mut() {
                for (i, x) in line.iter_mut().enumerate() {
                    *x = 0.1 * (mode as f64 * PI * i as f64 / (n - 1) as f64).sin();
                }
            }
            let eps = 1e-3;
            let step = |s: f64| {
                let mut p = u.clone();
                for (a, d) in p.controls.iter_mut().flatten().zip(v.controls.iter().flatten()) {
                    *a += s * d;
                }
                p
            };
            let fd = (phi(&step(eps))? - phi(&step(-eps))?) / (2.0 * eps);
            let g = gateaux_derivative(&sc, &u, &v, &adj, &fwd)?;
            println!("{scheme:?} mode {mode}: adjoint {g:.6e}, difference {fd:.6e}, rel {:.2e}", ((g - fd) / fd).abs());
        }
    }
    Ok(())
}
