//! Grids, fields and the one-dimensional discretization kernels.
//!
//! Nodes sit at `w_i = i dw`, `z_j = j dz` including both walls. Fields are
//! stored row-major with `z` contiguous (`index = i * n_z + j`).
//!
//! Conservative operators use a node-centred finite-volume layout: face
//! `k` sits between nodes `k-1` and `k`, a wall node owns a half cell, and
//! its flux difference is taken over `dx / 2`. With zero wall fluxes the
//! trapezoidal integral of every conservative tendency vanishes exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::NeumaierSum;

/// Uniform tensor grid on `[0, w_max] x [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub w_max: f64,
    pub n_w: usize,
    pub n_z: usize,
}

impl Grid2D {
    pub fn new(w_max: f64, n_w: usize, n_z: usize) -> Result<Self> {
        let g = Grid2D { w_max, n_w, n_z };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_max > 0.0 && self.w_max.is_finite()) {
            return Err(Error::param("grid.w_max", "must be positive and finite"));
        }
        if self.n_w < 11 || self.n_z < 11 {
            return Err(Error::param("grid", "n_w and n_z must be >= 11"));
        }
        Ok(())
    }

    pub fn dw(&self) -> f64 {
        self.w_max / (self.n_w - 1) as f64
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.n_z - 1) as f64
    }

    pub fn w(&self, i: usize) -> f64 {
        i as f64 * self.dw()
    }

    pub fn z(&self, j: usize) -> f64 {
        j as f64 * self.dz()
    }

    pub fn len(&self) -> usize {
        self.n_w * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_z + j
    }

    pub fn w_nodes(&self) -> Vec<f64> {
        (0..self.n_w).map(|i| self.w(i)).collect()
    }

    pub fn z_nodes(&self) -> Vec<f64> {
        (0..self.n_z).map(|j| self.z(j)).collect()
    }

    /// Trapezoid weights along `w`.
    pub fn w_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_w, self.dw())
    }

    /// Trapezoid weights along `z`.
    pub fn z_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_z, self.dz())
    }
}

/// Composite trapezoid weights for `n` nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// A scalar field sampled at the nodes of a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Field2D {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.n_w {
            let w = grid.w(i);
            for j in 0..grid.n_z {
                values.push(f(w, grid.z(j)));
            }
        }
        Field2D { grid, values }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field2D { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    /// Row of `z` values at `w` index `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.n_z;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Trapezoidal integral over the whole domain.
    pub fn integrate(&self) -> f64 {
        let wz = self.grid.z_weights();
        let ww = self.grid.w_weights();
        let mut total = NeumaierSum::default();
        for (i, &wi) in ww.iter().enumerate() {
            let row: f64 = self.row(i).iter().zip(&wz).map(|(v, q)| v * q).sum();
            total.add(wi * row);
        }
        total.value()
    }

    /// `y(w) = int_0^1 field(w, z) dz` for every `w` node.
    pub fn conditional_density(&self) -> Vec<f64> {
        let wz = self.grid.z_weights();
        (0..self.grid.n_w)
            .map(|i| self.row(i).iter().zip(&wz).map(|(v, q)| v * q).sum())
            .collect()
    }

    /// Integral over `(w_lo, w_hi) x (0, 1)` of the piecewise-linear interpolant in `w`.
    pub fn window_integral(&self, w_lo: f64, w_hi: f64) -> Result<f64> {
        let weights = window_weights(&self.grid, w_lo, w_hi)?;
        let cond = self.conditional_density();
        Ok(cond
            .iter()
            .zip(&weights)
            .map(|(c, q)| c * q)
            .collect::<NeumaierSum>()
            .value())
    }
}

/// Quadrature weights `int_{w_lo}^{w_hi} phi_i(w) dw` of the hat functions.
///
/// Summing `weights[i] * g(w_i)` integrates the piecewise-linear interpolant
/// of `g` over the window exactly; the full window gives trapezoid weights.
pub fn window_weights(grid: &Grid2D, w_lo: f64, w_hi: f64) -> Result<Vec<f64>> {
    if !(0.0 <= w_lo && w_lo < w_hi && w_hi <= grid.w_max) {
        return Err(Error::Input(format!(
            "invalid window ({w_lo}, {w_hi}) for w_max = {}",
            grid.w_max
        )));
    }
    let h = grid.dw();
    // Endpoints within round-off of a node are snapped onto it.
    let snap = |x: f64| {
        let k = (x / h).round();
        if (x - k * h).abs() <= 1e-9 * h {
            k * h
        } else {
            x
        }
    };
    let (w_lo, w_hi) = (snap(w_lo), snap(w_hi));
    let mut weights = vec![0.0; grid.n_w];
    for cell in 0..grid.n_w - 1 {
        let a = grid.w(cell);
        let b = grid.w(cell + 1);
        let lo = w_lo.max(a);
        let hi = w_hi.min(b);
        if hi <= lo {
            continue;
        }
        // Exact integrals of the two linear shape functions over [lo, hi].
        let s0 = (lo - a) / h;
        let s1 = (hi - a) / h;
        let right = 0.5 * h * (s1 * s1 - s0 * s0);
        weights[cell + 1] += right;
        weights[cell] += (hi - lo) - right;
    }
    Ok(weights)
}

/// Terminal indicator weights `-(int_window phi_i) / (int_domain phi_i)`.
///
/// Equals `-1` at nodes strictly inside the window, `0` outside, and the
/// covered fraction of the hat function at the endpoints (`-0.5` for
/// node-aligned endpoints).
pub fn window_indicator(grid: &Grid2D, w_lo: f64, w_hi: f64) -> Result<Vec<f64>> {
    let win = window_weights(grid, w_lo, w_hi)?;
    let full = grid.w_weights();
    Ok(win.iter().zip(&full).map(|(a, b)| -a / b).collect())
}

/// Closure of 1-D stencils at the line ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Node `n` coincides with node `0`.
    Periodic,
    /// Ghost values by constant extrapolation; conservative fluxes vanish at the walls.
    Wall,
}

#[inline]
fn ghost(line: &[f64], k: isize, boundary: Boundary) -> f64 {
    let n = line.len() as isize;
    let idx = match boundary {
        Boundary::Periodic => k.rem_euclid(n),
        Boundary::Wall => k.clamp(0, n - 1),
    };
    line[idx as usize]
}

/// Fifth-order WENO-Z reconstruction at the right face of the centre value `c`
/// from the upwind-biased stencil `(a, b, c, d, e)`.
#[inline(always)]
pub(crate) fn weno5(a: f64, b: f64, c: f64, d: f64, e: f64) -> f64 {
    const EPS: f64 = 1e-40;
    let q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let q2 = (2.0 * c + 5.0 * d - e) / 6.0;
    let b0 = 13.0 / 12.0 * (a - 2.0 * b + c).powi(2) + 0.25 * (a - 4.0 * b + 3.0 * c).powi(2);
    let b1 = 13.0 / 12.0 * (b - 2.0 * c + d).powi(2) + 0.25 * (b - d).powi(2);
    let b2 = 13.0 / 12.0 * (c - 2.0 * d + e).powi(2) + 0.25 * (3.0 * c - 4.0 * d + e).powi(2);
    let tau = (b0 - b2).abs();
    let a0 = 0.1 * (1.0 + (tau / (b0 + EPS)).powi(2));
    let a1 = 0.6 * (1.0 + (tau / (b1 + EPS)).powi(2));
    let a2 = 0.3 * (1.0 + (tau / (b2 + EPS)).powi(2));
    (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)
}

/// Conservative WENO face fluxes with Lax-Friedrichs splitting.
///
/// Returns `n + 1` faces, face `k` between nodes `k - 1` and `k`. With
/// [`Boundary::Wall`] the two outer faces are zero; with
/// [`Boundary::Periodic`] they coincide.
pub fn weno5_face_fluxes(
    line: &[f64],
    flux: impl Fn(f64) -> f64,
    alpha: f64,
    boundary: Boundary,
) -> Vec<f64> {
    let n = line.len() as isize;
    let fp = |k: isize| {
        let u = ghost(line, k, boundary);
        0.5 * (flux(u) + alpha * u)
    };
    let fm = |k: isize| {
        let u = ghost(line, k, boundary);
        0.5 * (flux(u) - alpha * u)
    };
    let mut faces = vec![0.0; line.len() + 1];
    for k in 0..=n {
        if boundary == Boundary::Wall && (k == 0 || k == n) {
            continue;
        }
        // Face between nodes i = k - 1 and k.
        let i = k - 1;
        let plus = weno5(fp(i - 2), fp(i - 1), fp(i), fp(i + 1), fp(i + 2));
        let minus = weno5(fm(i + 3), fm(i + 2), fm(i + 1), fm(i), fm(i - 1));
        faces[k as usize] = plus + minus;
    }
    faces
}

/// Flux difference `(F_{i+1/2} - F_{i-1/2}) / dx` for each node.
pub fn flux_difference(faces: &[f64], dx: f64, boundary: Boundary) -> Vec<f64> {
    let n = faces.len() - 1;
    (0..n)
        .map(|i| {
            let d = (faces[i + 1] - faces[i]) / dx;
            if boundary == Boundary::Wall && (i == 0 || i == n - 1) {
                2.0 * d
            } else {
                d
            }
        })
        .collect()
}

/// Conservative fifth-order approximation of `d f(u) / dx`.
pub fn weno5_flux_derivative(
    line: &[f64],
    flux: impl Fn(f64) -> f64,
    alpha: f64,
    dx: f64,
    boundary: Boundary,
) -> Vec<f64> {
    let faces = weno5_face_fluxes(line, flux, alpha, boundary);
    flux_difference(&faces, dx, boundary)
}

/// Upwind-biased fifth-order WENO approximation of `du/dx` at the nodes.
///
/// `wind_sign > 0` uses the left-biased stencil (information arriving from
/// smaller `x`), `wind_sign < 0` the right-biased one.
pub fn weno5_upwind_derivative(line: &[f64], wind_sign: f64, dx: f64, boundary: Boundary) -> Vec<f64> {
    let n = line.len() as isize;
    let diff = |k: isize| (ghost(line, k + 1, boundary) - ghost(line, k, boundary)) / dx;
    (0..n)
        .map(|i| {
            if wind_sign >= 0.0 {
                weno5(diff(i - 3), diff(i - 2), diff(i - 1), diff(i), diff(i + 1))
            } else {
                weno5(diff(i + 2), diff(i + 1), diff(i), diff(i - 1), diff(i - 2))
            }
        })
        .collect()
}

/// Form of the second-order diffusion term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffusionForm {
    /// `d^2 (coeff u) / dx^2` in flux form, zero flux through walls.
    Conservative,
    /// `coeff d^2 u / dx^2` with homogeneous Neumann ghosts.
    Adjoint,
}

/// Central second-order approximation of the diffusion term.
pub fn central_diffusion(
    line: &[f64],
    coeff: &[f64],
    dx: f64,
    form: DiffusionForm,
    boundary: Boundary,
) -> Vec<f64> {
    let n = line.len() as isize;
    match form {
        DiffusionForm::Conservative => {
            let gu: Vec<f64> = line.iter().zip(coeff).map(|(u, g)| u * g).collect();
            let mut faces = vec![0.0; line.len() + 1];
            for k in 0..=n {
                if boundary == Boundary::Wall && (k == 0 || k == n) {
                    continue;
                }
                faces[k as usize] =
                    -(ghost(&gu, k, boundary) - ghost(&gu, k - 1, boundary)) / dx;
            }
            flux_difference(&faces, dx, boundary)
                .into_iter()
                .map(|d| -d)
                .collect()
        }
        DiffusionForm::Adjoint => (0..n)
            .map(|i| {
                let l = ghost(line, i - 1, boundary);
                let r = ghost(line, i + 1, boundary);
                coeff[i as usize] * (l - 2.0 * line[i as usize] + r) / (dx * dx)
            })
            .collect(),
    }
}

/// Blends high- and low-order face fluxes so one Euler step stays nonnegative.
///
/// `cells` holds `n` values and the flux slices `n + 1` faces, face `k`
/// between cells `k - 1` and `k`; the update is
/// `u_i - dt_over_dx (F_{i+1} - F_i)`. Each cell's change is split evenly
/// between its two faces, so face `k` must keep `u_{k-1} - 2 mu F_k >= 0`
/// and `u_k + 2 mu F_k >= 0`. With [`Boundary::Wall`] the outer faces are
/// constrained only by their interior cell; with [`Boundary::Periodic`]
/// faces `0` and `n` are the same face and get the same value. Returns
/// `theta F_high + (1 - theta) F_low` with the largest admissible `theta`.
pub fn apply_bp_limiter(
    high_flux: &[f64],
    low_flux: &[f64],
    cells: &[f64],
    dt_over_dx: f64,
    boundary: Boundary,
) -> Result<Vec<f64>> {
    let n = cells.len();
    if high_flux.len() != n + 1 || low_flux.len() != n + 1 {
        return Err(Error::Input("limiter expects n + 1 face fluxes".into()));
    }
    let k = 2.0 * dt_over_dx;
    let periodic = boundary == Boundary::Periodic;
    let tol = 1e-12 * cells.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = Vec::with_capacity(n + 1);
    for f in 0..=n {
        let mut theta: f64 = 1.0;
        let (fh, fl) = (high_flux[f], low_flux[f]);
        let left = if f > 0 { Some(f - 1) } else { periodic.then_some(n - 1) };
        let right = if f < n { Some(f) } else { periodic.then_some(0) };
        if let Some(c) = left {
            let u = cells[c];
            theta = theta.min(limit_theta(u - k * fl, u - k * fh, u, tol)?);
        }
        if let Some(c) = right {
            let u = cells[c];
            theta = theta.min(limit_theta(u + k * fl, u + k * fh, u, tol)?);
        }
        out.push(theta * fh + (1.0 - theta) * fl);
    }
    Ok(out)
}

/// Largest `theta` in `[0, 1]` with `low + theta (high - low) >= 0`.
#[inline]
fn limit_theta(low: f64, high: f64, u: f64, tol: f64) -> Result<f64> {
    if high >= 0.0 {
        return Ok(1.0);
    }
    if low < -tol {
        return Err(Error::Stability {
            dt: f64::NAN,
            cfl: (u - low) / u.abs().max(f64::MIN_POSITIVE),
        });
    }
    let low = low.max(0.0);
    Ok(low / (low - high))
}

/// One explicit Heun (improved Euler) step on a flat state vector.
pub fn heun_step_slice(state: &[f64], rhs: impl Fn(&[f64]) -> Vec<f64>, dt: f64) -> Vec<f64> {
    let k1 = rhs(state);
    let pred: Vec<f64> = state.iter().zip(&k1).map(|(u, k)| u + dt * k).collect();
    let k2 = rhs(&pred);
    state
        .iter()
        .zip(k1.iter().zip(&k2))
        .map(|(u, (a, b))| u + 0.5 * dt * (a + b))
        .collect()
}

/// One explicit Heun step of a field.
pub fn heun_step(state: &Field2D, rhs: impl Fn(&Field2D) -> Field2D, dt: f64) -> Field2D {
    let grid = state.grid;
    let values = heun_step_slice(
        &state.values,
        |v| {
            let f = Field2D {
                grid,
                values: v.to_vec(),
            };
            rhs(&f).values
        },
        dt,
    );
    Field2D { grid, values }
}
