//! Objective evaluation, bang-bang control extraction and the Picard loop.
//!
//! The objective of a policy `u` is
//!
//! ```text
//! phi(u) = sum_j c * int u_j y1(tau_j) dw dz - int_{window x (0,1)} y2(T) dw dz
//! ```
//!
//! Its Gateaux derivative in a direction `v` is
//! `sum_j int v_j y1(tau_j) (c - q1(tau_j+) + q2(tau_j+))`, which makes the
//! optimal controls bang-bang.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Field2D, Grid2D};
use crate::pde::{
    solve_adjoint, solve_backward, solve_forward, AdjointSolution, ControlPolicy, ControlRule,
    ForwardSolution, HabitatParams, ImpulseSchedule, InfoMode, InitialHump, Scheme,
};
use crate::stats::NeumaierSum;

fn default_record_interval() -> f64 {
    1.0
}

/// Complete two-habitat transport problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub habitat1: HabitatParams,
    pub habitat2: HabitatParams,
    pub schedule: ImpulseSchedule,
    /// Per-unit transport cost `c`.
    pub cost_c: f64,
    /// Cap `U` on the transported fraction.
    pub cap_u: f64,
    /// Target window `(w_lo, w_hi)`; `w_lo == w_hi` means an empty target.
    pub target_window: [f64; 2],
    pub init: InitialHump,
    pub grid: Grid2D,
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Spacing of the recorded conditional densities, day.
    #[serde(default = "default_record_interval")]
    pub record_interval: f64,
}

impl Scenario {
    /// The reference problem with growth rates `r1`, `r2`.
    pub fn baseline(r1: f64, r2: f64) -> Self {
        let w_max = 5.3;
        Scenario {
            habitat1: HabitatParams::baseline(r1),
            habitat2: HabitatParams::baseline(r2),
            schedule: ImpulseSchedule::uniform(10.0, 6, 70.0),
            cost_c: 0.2,
            cap_u: 0.2,
            target_window: [0.3 * w_max, 0.7 * w_max],
            init: InitialHump::default(),
            grid: Grid2D {
                w_max,
                n_w: 201,
                n_z: 201,
            },
            dt: 0.01,
            scheme: Scheme::Weno,
            record_interval: 1.0,
        }
    }

    /// Same problem on an `n x n` grid with time step `dt`.
    pub fn with_resolution(mut self, n: usize, dt: f64) -> Self {
        self.grid.n_w = n;
        self.grid.n_z = n;
        self.dt = dt;
        self
    }

    pub fn with_cost(mut self, c: f64) -> Self {
        self.cost_c = c;
        self
    }

    /// The target window, or `None` when it is empty.
    pub fn window(&self) -> Option<(f64, f64)> {
        let [lo, hi] = self.target_window;
        (hi > lo).then_some((lo, hi))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.habitat1.validate()?;
        self.habitat2.validate()?;
        self.init.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        self.schedule.step_indices(self.dt)?;
        if !(self.cost_c >= 0.0 && self.cost_c.is_finite()) {
            return Err(Error::param("cost_c", "must be finite and >= 0"));
        }
        if !(self.cap_u > 0.0 && self.cap_u < 1.0) {
            return Err(Error::param("cap_u", "must satisfy 0 < U < 1"));
        }
        let [lo, hi] = self.target_window;
        if !(0.0 <= lo && lo <= hi && hi <= self.grid.w_max) {
            return Err(Error::param(
                "target_window",
                format!("must satisfy 0 <= w_lo <= w_hi <= {}", self.grid.w_max),
            ));
        }
        if !(self.record_interval > 0.0) {
            return Err(Error::param("record_interval", "must be positive"));
        }
        Ok(())
    }
}

/// Result of one optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub policy: ControlPolicy,
    pub objective_value: f64,
    pub iterations: usize,
    pub delta_history: Vec<f64>,
    pub converged: bool,
}

/// `int u y1 dw dz` with partial controls broadcast along `z`.
fn weighted_integral(grid: &Grid2D, field: impl Fn(usize, usize) -> f64) -> f64 {
    let ww = grid.w_weights();
    let wz = grid.z_weights();
    let mut total = NeumaierSum::default();
    for (i, &a) in ww.iter().enumerate() {
        let row: f64 = wz.iter().enumerate().map(|(j, &b)| b * field(i, j)).sum();
        total.add(a * row);
    }
    total.value()
}

/// Transport cost plus negative harvest in the target window.
pub fn objective(scenario: &Scenario, policy: &ControlPolicy, forward: &ForwardSolution) -> Result<f64> {
    if forward.pre.len() != policy.n_impulses() {
        return Err(Error::Input("forward snapshots do not match the policy".into()));
    }
    let grid = scenario.grid;
    if policy.grid != grid || forward.terminal.1.grid != grid {
        return Err(Error::Input("grid mismatch between scenario, policy and forward".into()));
    }
    let mut total = NeumaierSum::default();
    for (j, (y1, _)) in forward.pre.iter().enumerate() {
        let u = policy.impulse(j);
        total.add(scenario.cost_c * weighted_integral(&grid, |i, k| u.at(&grid, i, k) * y1.at(i, k)));
    }
    if let Some((lo, hi)) = scenario.window() {
        total.add(-forward.terminal.1.window_integral(lo, hi)?);
    }
    Ok(total.value())
}

/// Full-information bang-bang control: `U` where `c - q1+ + q2+ < 0`.
pub fn extract_control_full(q1_plus: &Field2D, q2_plus: &Field2D, c: f64, cap: f64) -> Vec<f64> {
    q1_plus
        .values
        .iter()
        .zip(&q2_plus.values)
        .map(|(a, b)| if c - a + b < 0.0 { cap } else { 0.0 })
        .collect()
}

/// `L(w) = int_0^1 y1 (c - q1+ + q2+) dz` per `w` row.
pub fn switching_function_partial(
    y1_at_tau: &Field2D,
    q1_plus: &Field2D,
    q2_plus: &Field2D,
    c: f64,
) -> Result<Vec<f64>> {
    let grid = y1_at_tau.grid;
    if q1_plus.grid != grid || q2_plus.grid != grid {
        return Err(Error::Input("switching function fields on different grids".into()));
    }
    let wz = grid.z_weights();
    Ok((0..grid.n_w)
        .map(|i| {
            (0..grid.n_z)
                .map(|j| wz[j] * y1_at_tau.at(i, j) * (c - q1_plus.at(i, j) + q2_plus.at(i, j)))
                .sum()
        })
        .collect())
}

/// Partial-information bang-bang control: `U` where `L < 0`, else `0`.
pub fn extract_control_partial(l: &[f64], cap: f64) -> Vec<f64> {
    l.iter().map(|&v| if v < 0.0 { cap } else { 0.0 }).collect()
}

/// Single backward sweep with on-the-fly extraction, then one forward solve.
pub fn optimize_full(scenario: &Scenario) -> Result<OptimizationReport> {
    let (_, policy) = solve_backward(scenario, InfoMode::Full, None)?;
    let forward = solve_forward(scenario, &policy)?;
    let objective_value = objective(scenario, &policy, &forward)?;
    Ok(OptimizationReport {
        policy,
        objective_value,
        iterations: 1,
        delta_history: Vec::new(),
        converged: true,
    })
}

/// Picard iteration between forward solves and partial-information extraction.
///
/// Starts from `initial_guess` (zero policy when `None`) and stops at the
/// first iteration whose extracted policy equals its input exactly.
pub fn optimize_partial(
    scenario: &Scenario,
    max_iters: usize,
    initial_guess: Option<ControlPolicy>,
) -> Result<OptimizationReport> {
    if max_iters == 0 {
        return Err(Error::param("max_iters", "must be >= 1"));
    }
    let mut policy = match initial_guess {
        Some(p) if p.mode == InfoMode::Partial => p,
        Some(_) => return Err(Error::Policy("initial guess must be partial-information".into())),
        None => ControlPolicy::zeros(InfoMode::Partial, scenario.grid, scenario.schedule.len(), scenario.cap_u),
    };
    let mut delta_history = Vec::new();
    let mut forward = solve_forward(scenario, &policy)?;
    for iter in 1..=max_iters {
        let (_, next) = solve_backward(scenario, InfoMode::Partial, Some(&forward))?;
        let delta = next.sup_distance(&policy);
        delta_history.push(delta);
        if delta == 0.0 {
            let objective_value = objective(scenario, &policy, &forward)?;
            return Ok(OptimizationReport {
                policy,
                objective_value,
                iterations: iter,
                delta_history,
                converged: true,
            });
        }
        policy = next;
        forward = solve_forward(scenario, &policy)?;
    }
    let objective_value = objective(scenario, &policy, &forward)?;
    Ok(OptimizationReport {
        policy,
        objective_value,
        iterations: max_iters,
        delta_history,
        converged: false,
    })
}

/// Adjoint-based directional derivative of the objective.
pub fn gateaux_derivative(
    scenario: &Scenario,
    policy: &ControlPolicy,
    direction: &ControlPolicy,
    adjoint: &AdjointSolution,
    forward: &ForwardSolution,
) -> Result<f64> {
    let n = policy.n_impulses();
    if direction.n_impulses() != n
        || direction.mode != policy.mode
        || direction.controls.iter().zip(&policy.controls).any(|(a, b)| a.len() != b.len())
        || adjoint.plus.len() != n
        || forward.pre.len() != n
    {
        return Err(Error::Input("direction, adjoint or forward shape mismatch".into()));
    }
    let grid = scenario.grid;
    let c = scenario.cost_c;
    let mut total = NeumaierSum::default();
    for j in 0..n {
        let v = direction.impulse(j);
        let y1 = &forward.pre[j].0;
        let (q1, q2) = &adjoint.plus[j];
        total.add(weighted_integral(&grid, |i, k| {
            v.at(&grid, i, k) * y1.at(i, k) * (c - q1.at(i, k) + q2.at(i, k))
        }));
    }
    Ok(total.value())
}

/// Adjoint under a fixed policy (no extraction), for derivative evaluation.
pub fn adjoint_for_policy(scenario: &Scenario, policy: &ControlPolicy) -> Result<AdjointSolution> {
    Ok(solve_adjoint(scenario, ControlRule::Prescribed(policy))?.0)
}

/// Contiguous runs of nodes at the cap, as closed `w` intervals.
///
/// Full-information controls are projected onto `w`: a row is active when
/// any of its nodes is.
pub fn active_intervals(policy: &ControlPolicy, j: usize) -> Vec<(f64, f64)> {
    let grid = policy.grid;
    let u = &policy.controls[j];
    let active: Vec<bool> = match policy.mode {
        InfoMode::Partial => u.iter().map(|&v| v > 0.0).collect(),
        InfoMode::Full => (0..grid.n_w)
            .map(|i| u[i * grid.n_z..(i + 1) * grid.n_z].iter().any(|&v| v > 0.0))
            .collect(),
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, &a) in active.iter().chain(std::iter::once(&false)).enumerate() {
        match (a, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((grid.w(s), grid.w(i - 1)));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Number of active `w` nodes of impulse `j`.
pub fn active_count(policy: &ControlPolicy, j: usize) -> usize {
    let grid = policy.grid;
    let u = &policy.controls[j];
    match policy.mode {
        InfoMode::Partial => u.iter().filter(|&&v| v > 0.0).count(),
        InfoMode::Full => (0..grid.n_w)
            .filter(|&i| u[i * grid.n_z..(i + 1) * grid.n_z].iter().any(|&v| v > 0.0))
            .count(),
    }
}

/// One cost value of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub c: f64,
    pub report: OptimizationReport,
    /// Active intervals per impulse.
    pub intervals: Vec<Vec<(f64, f64)>>,
}

/// Partial-information optimization for each cost value.
pub fn cost_sweep(scenario: &Scenario, c_values: &[f64], max_iters: usize) -> Result<Vec<SweepEntry>> {
    if c_values.is_empty() {
        return Err(Error::Input("no cost values".into()));
    }
    c_values
        .par_iter()
        .map(|&c| {
            let sc = scenario.clone().with_cost(c);
            let report = optimize_partial(&sc, max_iters, None)?;
            let intervals = (0..report.policy.n_impulses())
                .map(|j| active_intervals(&report.policy, j))
                .collect();
            Ok(SweepEntry {
                c,
                report,
                intervals,
            })
        })
        .collect()
}
