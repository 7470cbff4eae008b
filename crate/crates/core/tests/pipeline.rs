use std::f64::consts::PI;

use fpimpulse::numerics::Field2D;
use fpimpulse::optimize::{
    active_count, adjoint_for_policy, cost_sweep, gateaux_derivative, objective, optimize_partial, Scenario,
};
use fpimpulse::pde::{solve_forward, ControlPolicy, ForwardSolution, InfoMode, Scheme};

fn coarse(n: usize, scheme: Scheme) -> Scenario {
    let mut sc = Scenario::baseline(0.048, 0.051).with_resolution(n, 0.01);
    sc.scheme = scheme;
    sc
}

fn half_cap(sc: &Scenario) -> ControlPolicy {
    ControlPolicy::constant(InfoMode::Partial, sc.grid, sc.schedule.len(), sc.cap_u, 0.5 * sc.cap_u)
}

/// Smooth partial direction with `|v| <= U/2`, different on every impulse.
fn smooth_direction(sc: &Scenario) -> ControlPolicy {
    let mut v = ControlPolicy::zeros(InfoMode::Partial, sc.grid, sc.schedule.len(), sc.cap_u);
    for (j, line) in v.controls.iter_mut().enumerate() {
        let n = line.len();
        for (i, x) in line.iter_mut().enumerate() {
            let s = i as f64 / (n - 1) as f64;
            *x = 0.5 * sc.cap_u * ((j + 1) as f64 * PI * s).sin() * if j % 2 == 0 { 1.0 } else { -0.6 };
        }
    }
    v
}

fn shifted(u: &ControlPolicy, v: &ControlPolicy, s: f64) -> ControlPolicy {
    let mut p = u.clone();
    for (a, d) in p.controls.iter_mut().flatten().zip(v.controls.iter().flatten()) {
        *a += s * d;
    }
    p
}

fn phi(sc: &Scenario, p: &ControlPolicy) -> f64 {
    objective(sc, p, &solve_forward(sc, p).unwrap()).unwrap()
}

#[test]
fn first_order_gradient_is_exact() {
    let sc = coarse(41, Scheme::FirstOrder);
    let u = half_cap(&sc);
    let v = smooth_direction(&sc);
    let g = gateaux_derivative(&sc, &u, &v, &adjoint_for_policy(&sc, &u).unwrap(), &solve_forward(&sc, &u).unwrap())
        .unwrap();
    // Along a line the objective is a polynomial, so the central
    // difference error is O(eps^2).
    let eps = 1e-4;
    let fd = (phi(&sc, &shifted(&u, &v, eps)) - phi(&sc, &shifted(&u, &v, -eps))) / (2.0 * eps);
    assert!(((g - fd) / fd).abs() < 1e-7, "adjoint {g}, difference {fd}");
}

#[test]
fn weno_gradient_matches_one_sided_difference() {
    let sc = coarse(81, Scheme::Weno);
    let u = half_cap(&sc);
    let v = smooth_direction(&sc);
    let g = gateaux_derivative(&sc, &u, &v, &adjoint_for_policy(&sc, &u).unwrap(), &solve_forward(&sc, &u).unwrap())
        .unwrap();
    let eps = 1e-3;
    let fd = (phi(&sc, &shifted(&u, &v, eps)) - phi(&sc, &u)) / eps;
    assert!(((g - fd) / fd).abs() < 0.02, "adjoint {g}, difference {fd}");
}

fn dot(a: &Field2D, b: &Field2D) -> f64 {
    Field2D::from_values(a.grid, a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect())
        .unwrap()
        .integrate()
}

fn diff(a: &Field2D, b: &Field2D, h: f64) -> Field2D {
    Field2D::from_values(a.grid, a.values.iter().zip(&b.values).map(|(x, y)| (x - y) / h).collect()).unwrap()
}

/// Sum over impulses of the jumps of `<s, q>` and the terminal pairing.
fn interface_identity(sc: &Scenario) -> (f64, f64) {
    let u = half_cap(sc);
    let v = smooth_direction(sc);
    let eps = 1e-4;
    let plus: ForwardSolution = solve_forward(sc, &shifted(&u, &v, eps)).unwrap();
    let minus: ForwardSolution = solve_forward(sc, &shifted(&u, &v, -eps)).unwrap();
    let adj = adjoint_for_policy(sc, &u).unwrap();
    let h = 2.0 * eps;
    let mut jumps = 0.0;
    for j in 0..sc.schedule.len() {
        let (q1p, q2p) = &adj.plus[j];
        let (q1, q2) = &adj.at_tau[j];
        let s_post = (diff(&plus.post[j].0, &minus.post[j].0, h), diff(&plus.post[j].1, &minus.post[j].1, h));
        let s_pre = (diff(&plus.pre[j].0, &minus.pre[j].0, h), diff(&plus.pre[j].1, &minus.pre[j].1, h));
        jumps += dot(&s_post.0, q1p) + dot(&s_post.1, q2p) - dot(&s_pre.0, q1) - dot(&s_pre.1, q2);
    }
    let (q1t, q2t) = fpimpulse::pde::terminal_adjoint(sc).unwrap();
    let terminal = dot(&diff(&plus.terminal.0, &minus.terminal.0, h), &q1t)
        + dot(&diff(&plus.terminal.1, &minus.terminal.1, h), &q2t);
    (jumps, terminal)
}

#[test]
fn interface_jumps_add_up_to_terminal_pairing() {
    let (jumps, terminal) = interface_identity(&coarse(41, Scheme::FirstOrder));
    assert!(((jumps - terminal) / terminal).abs() < 1e-7, "jumps {jumps}, terminal {terminal}");
    let (jumps, terminal) = interface_identity(&coarse(81, Scheme::Weno));
    assert!(((jumps - terminal) / terminal).abs() < 0.05, "jumps {jumps}, terminal {terminal}");
}

#[test]
fn free_transport_gives_the_largest_active_sets() {
    let sc = coarse(41, Scheme::Weno);
    let free = optimize_partial(&sc.clone().with_cost(0.0), 50, None).unwrap();
    let paid = optimize_partial(&sc.clone().with_cost(0.1), 50, None).unwrap();
    assert!(free.converged && paid.converged);
    for (a, b) in free.policy.controls.iter().zip(&paid.policy.controls) {
        for (x, y) in a.iter().zip(b) {
            assert!(*y == 0.0 || *x > 0.0);
        }
    }
    assert!(free.objective_value <= paid.objective_value);
}

#[test]
fn coarse_sweep_active_measure_shrinks_with_cost() {
    let sc = coarse(41, Scheme::Weno);
    let cs = [0.1, 0.3, 0.5, 0.7, 1.0];
    let sweep = cost_sweep(&sc, &cs, 50).unwrap();
    assert_eq!(sweep.len(), cs.len());
    for j in 0..sc.schedule.len() {
        let counts: Vec<usize> = sweep.iter().map(|e| active_count(&e.report.policy, j)).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "impulse {j}: {counts:?}");
    }
    for e in &sweep {
        assert!(e.report.converged);
        assert_eq!(e.intervals.len(), sc.schedule.len());
    }
}
