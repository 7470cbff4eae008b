//! Observed orders of the WENO derivative operators and of Heun's method.

use std::f64::consts::PI;

use fpimpulse::numerics::{heun_step_slice, weno5_flux_derivative, weno5_upwind_derivative, Boundary};

fn max_error(n: usize, conservative: bool) -> f64 {
    let dx = 1.0 / n as f64;
    let u: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 * dx).sin()).collect();
    let d = if conservative {
        weno5_flux_derivative(&u, |v| v, 1.0, dx, Boundary::Periodic)
    } else {
        weno5_upwind_derivative(&u, 1.0, dx, Boundary::Periodic)
    };
    d.iter()
        .enumerate()
        .map(|(i, v)| (v - 2.0 * PI * (2.0 * PI * i as f64 * dx).cos()).abs())
        .fold(0.0, f64::max)
}

fn heun_error(steps: usize) -> f64 {
    let dt = 1.0 / steps as f64;
    let mut y = vec![1.0];
    for _ in 0..steps {
        y = heun_step_slice(&y, |v| vec![-v[0]], dt);
    }
    (y[0] - (-1.0f64).exp()).abs()
}

fn main() {
    println!("{:>5} {:>12} {:>6} {:>12} {:>6}", "n", "flux err", "order", "upwind err", "order");
    let mut prev: Option<(f64, f64)> = None;
    for n in [20, 40, 80, 160] {
        let (a, b) = (max_error(n, true), max_error(n, false));
        let (oa, ob) = prev.map_or((f64::NAN, f64::NAN), |(pa, pb)| ((pa / a).log2(), (pb / b).log2()));
        println!("{n:>5} {a:>12.3e} {oa:>6.2} {b:>12.3e} {ob:>6.2}");
        prev = Some((a, b));
    }
    for steps in [10, 20, 40, 80] {
        let e = heun_error(steps);
        println!("Heun, {steps:>3} steps: error {e:.3e}, order {:.3}", (heun_error(steps / 2) / e).log2());
    }
}
