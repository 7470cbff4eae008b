//! Two-habitat Fokker-Planck transport with impulses, and its adjoint.
//!
//! Forward densities obey
//!
//! ```text
//! dy/dt = -d_w(r (1 - z) y) - d_z(A(z) y - d_z(C(z)^2 y / 2)) - R y
//! ```
//!
//! with zero flux through all four walls, `A(z) = D (1 - z)` and
//! `C(z)^2 = sigma^2 z (1 - z)`. The adjoint is integrated in reversed time
//! `s = T - t`:
//!
//! ```text
//! dq/ds = r (1 - z) d_w q + A(z) d_z q + C(z)^2 / 2 d_zz q - R q
//! ```
//!
//! with homogeneous Neumann walls. Both use the method of lines with Heun
//! stepping; the forward stages are bound-preserving limited Euler steps.

use rayon::join;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::GrowthParams;
use crate::numerics::{weno5, window_indicator, Field2D, Grid2D};
use crate::optimize::{
    extract_control_full, extract_control_partial, switching_function_partial, Scenario,
};

/// Growth coefficients and mortality of one habitat.
///
/// Unlike [`GrowthParams`] the rates may be zero, which freezes the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HabitatParams {
    pub r: f64,
    pub d_relax: f64,
    pub sigma: f64,
    pub mortality: f64,
}

impl HabitatParams {
    pub fn new(r: f64, d_relax: f64, sigma: f64, mortality: f64) -> Result<Self> {
        let h = HabitatParams {
            r,
            d_relax,
            sigma,
            mortality,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn from_growth(growth: &GrowthParams, mortality: f64) -> Result<Self> {
        HabitatParams::new(growth.r, growth.d_relax, growth.sigma, mortality)
    }

    /// Baseline habitat with the identified relaxation, noise and mortality.
    pub fn baseline(r: f64) -> Self {
        HabitatParams {
            r,
            d_relax: 0.019,
            sigma: 0.051,
            mortality: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r", self.r),
            ("d_relax", self.d_relax),
            ("sigma", self.sigma),
            ("mortality", self.mortality),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and >= 0"));
            }
        }
        if 2.0 * self.d_relax < self.sigma * self.sigma {
            return Err(Error::param("sigma", "requires 2 * d_relax >= sigma^2"));
        }
        Ok(())
    }

    /// Log-weight speed `r (1 - z)`.
    pub fn speed(&self, z: f64) -> f64 {
        self.r * (1.0 - z)
    }

    /// Latent drift `A(z) = D (1 - z)`.
    pub fn drift(&self, z: f64) -> f64 {
        self.d_relax * (1.0 - z)
    }

    /// Half squared diffusion `C(z)^2 / 2`.
    pub fn half_c2(&self, z: f64) -> f64 {
        0.5 * self.sigma * self.sigma * z * (1.0 - z)
    }
}

/// Impulse times and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseSchedule {
    pub times: Vec<f64>,
    pub horizon: f64,
}

impl ImpulseSchedule {
    /// `tau_j = spacing * j` for `j = 1..=count`.
    pub fn uniform(spacing: f64, count: usize, horizon: f64) -> Self {
        ImpulseSchedule {
            times: (1..=count).map(|j| spacing * j as f64).collect(),
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("schedule.horizon", "must be positive"));
        }
        let mut prev = 0.0;
        for &t in &self.times {
            if !(t > prev && t < self.horizon) {
                return Err(Error::param(
                    "schedule.times",
                    "impulse times must increase strictly inside (0, horizon)",
                ));
            }
            prev = t;
        }
        Ok(())
    }

    /// Step count of the horizon and step indices of the impulses.
    pub fn step_indices(&self, dt: f64) -> Result<(usize, Vec<usize>)> {
        self.validate()?;
        let n = (self.horizon / dt).round();
        if (n * dt - self.horizon).abs() > 1e-9 * self.horizon {
            return Err(Error::param(
                "dt",
                format!("dt = {dt} does not divide the horizon {}", self.horizon),
            ));
        }
        let n = n as usize;
        let ks: Vec<usize> = self.times.iter().map(|t| (t / dt).round() as usize).collect();
        for w in ks.windows(2) {
            if w[0] == w[1] {
                return Err(Error::param("schedule.times", "two impulses share a time step"));
            }
        }
        if ks.first() == Some(&0) || ks.last().is_some_and(|&k| k >= n) {
            return Err(Error::param("schedule.times", "impulse snaps onto t = 0 or t = T"));
        }
        Ok((n, ks))
    }
}

/// Which observation the controls may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoMode {
    /// Controls vary over `(w, z)`.
    Full,
    /// Controls vary over `w` only.
    Partial,
}

/// Spatial discretization of the transport operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fifth-order WENO with Lax-Friedrichs splitting (forward) and
    /// upwind-biased WENO (adjoint).
    #[default]
    Weno,
    /// First-order upwind; forward and adjoint are exact discrete transposes.
    FirstOrder,
}

/// Control of one impulse, borrowed from a [`ControlPolicy`].
#[derive(Debug, Clone, Copy)]
pub enum ImpulseControl<'a> {
    Full(&'a [f64]),
    Partial(&'a [f64]),
}

impl ImpulseControl<'_> {
    /// Control value at node `(i, j)` with partial controls broadcast along `z`.
    #[inline]
    pub fn at(&self, grid: &Grid2D, i: usize, j: usize) -> f64 {
        match self {
            ImpulseControl::Full(u) => u[grid.idx(i, j)],
            ImpulseControl::Partial(u) => u[i],
        }
    }

    fn expected_len(&self, grid: &Grid2D) -> usize {
        match self {
            ImpulseControl::Full(_) => grid.len(),
            ImpulseControl::Partial(_) => grid.n_w,
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            ImpulseControl::Full(u) | ImpulseControl::Partial(u) => u,
        }
    }
}

/// Transport fractions for every impulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPolicy {
    pub mode: InfoMode,
    pub cap: f64,
    pub grid: Grid2D,
    /// One array per impulse: `n_w * n_z` values (full) or `n_w` (partial).
    pub controls: Vec<Vec<f64>>,
}

impl ControlPolicy {
    pub fn zeros(mode: InfoMode, grid: Grid2D, n_impulses: usize, cap: f64) -> Self {
        let len = match mode {
            InfoMode::Full => grid.len(),
            InfoMode::Partial => grid.n_w,
        };
        ControlPolicy {
            mode,
            cap,
            grid,
            controls: vec![vec![0.0; len]; n_impulses],
        }
    }

    /// Constant control `value` at every node and impulse.
    pub fn constant(mode: InfoMode, grid: Grid2D, n_impulses: usize, cap: f64, value: f64) -> Self {
        let mut p = ControlPolicy::zeros(mode, grid, n_impulses, cap);
        p.controls.iter_mut().for_each(|u| u.fill(value));
        p
    }

    pub fn n_impulses(&self) -> usize {
        self.controls.len()
    }

    pub fn impulse(&self, j: usize) -> ImpulseControl<'_> {
        match self.mode {
            InfoMode::Full => ImpulseControl::Full(&self.controls[j]),
            InfoMode::Partial => ImpulseControl::Partial(&self.controls[j]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cap > 0.0 && self.cap < 1.0) {
            return Err(Error::Policy(format!("cap {} outside (0, 1)", self.cap)));
        }
        let len = match self.mode {
            InfoMode::Full => self.grid.len(),
            InfoMode::Partial => self.grid.n_w,
        };
        for (j, u) in self.controls.iter().enumerate() {
            if u.len() != len {
                return Err(Error::Policy(format!(
                    "impulse {j} has {} values, expected {len}",
                    u.len()
                )));
            }
            if let Some(v) = u.iter().find(|&&v| !(0.0..=self.cap).contains(&v)) {
                return Err(Error::Policy(format!(
                    "impulse {j} value {v} outside [0, {}]",
                    self.cap
                )));
            }
        }
        Ok(())
    }

    /// Largest absolute difference between two policies of the same shape.
    pub fn sup_distance(&self, other: &ControlPolicy) -> f64 {
        self.controls
            .iter()
            .zip(&other.controls)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.controls.iter().all(|u| u.iter().all(|&v| v == 0.0))
    }

    /// The same policy expressed on the full `(w, z)` grid.
    pub fn to_full(&self) -> ControlPolicy {
        match self.mode {
            InfoMode::Full => self.clone(),
            InfoMode::Partial => {
                let g = self.grid;
                let controls = self
                    .controls
                    .iter()
                    .map(|u| {
                        (0..g.n_w)
                            .flat_map(|i| std::iter::repeat_n(u[i], g.n_z))
                            .collect()
                    })
                    .collect();
                ControlPolicy {
                    mode: InfoMode::Full,
                    cap: self.cap,
                    grid: g,
                    controls,
                }
            }
        }
    }
}

/// Gaussian hump initial density for habitat 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialHump {
    pub a: f64,
    pub w_tilde: f64,
    pub z_tilde: f64,
    /// Integral of the initial density over the domain.
    pub total: f64,
}

impl Default for InitialHump {
    fn default() -> Self {
        InitialHump {
            a: 500.0,
            w_tilde: 0.1,
            z_tilde: 0.1,
            total: 6.0e6,
        }
    }
}

impl InitialHump {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::param("init.a", "must be positive"));
        }
        if !(self.w_tilde > 0.0 && self.w_tilde.is_finite()) {
            return Err(Error::param("init.w_tilde", "must be positive"));
        }
        if !self.z_tilde.is_finite() {
            return Err(Error::param("init.z_tilde", "must be finite"));
        }
        if !(self.total >= 0.0 && self.total.is_finite()) {
            return Err(Error::param("init.total", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// `exp(-a (((w - w~) / w~)^2 + (z - z~)^2))` sampled at the nodes and
    /// scaled so its trapezoidal integral equals `total`.
    pub fn field(&self, grid: &Grid2D) -> Result<Field2D> {
        self.validate()?;
        let mut f = Field2D::from_fn(*grid, |w, z| {
            let x = (w - self.w_tilde) / self.w_tilde;
            (-self.a * (x * x + (z - self.z_tilde).powi(2))).exp()
        });
        if self.total == 0.0 {
            return Ok(Field2D::zeros(*grid));
        }
        let raw = f.integrate();
        if !(raw > 0.0) {
            return Err(Error::Input(
                "initial hump underflows on this grid (zero integral)".into(),
            ));
        }
        f.scale(self.total / raw);
        Ok(f)
    }
}

/// Node coefficients of one habitat on one grid.
#[derive(Debug, Clone)]
struct Coeffs {
    speed: Vec<f64>,
    drift: Vec<f64>,
    half_c2: Vec<f64>,
    alpha: f64,
    rate: f64,
}

impl Coeffs {
    fn new(grid: &Grid2D, h: &HabitatParams) -> Self {
        let z = grid.z_nodes();
        let drift: Vec<f64> = z.iter().map(|&z| h.drift(z)).collect();
        let alpha = drift.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        Coeffs {
            speed: z.iter().map(|&z| h.speed(z)).collect(),
            drift,
            half_c2: z.iter().map(|&z| h.half_c2(z)).collect(),
            alpha,
            rate: h.mortality,
        }
    }
}

/// Positivity number of one limited Euler stage; must not exceed 1.
///
/// Each node's update is split into four face brackets, and the low-order
/// flux keeps every bracket nonnegative exactly when this is `<= 1`.
pub fn cfl_number(grid: &Grid2D, habitat: &HabitatParams, dt: f64, scheme: Scheme) -> f64 {
    let c = Coeffs::new(grid, habitat);
    let lw = dt / grid.dw();
    let lz = dt / grid.dz();
    let nz = grid.n_z;
    let dz = grid.dz();
    // Wall nodes own half cells, doubling their bracket factor.
    let k_w = 8.0 * lw;
    let mut worst = c.speed.iter().fold(0.0f64, |m, &v| m.max(k_w * v));
    for k in 1..nz {
        let (a, b) = (k - 1, k);
        let ka = 4.0 * lz * if a == 0 { 2.0 } else { 1.0 };
        let kb = 4.0 * lz * if b == nz - 1 { 2.0 } else { 1.0 };
        let (own_a, own_b) = match scheme {
            Scheme::Weno => (
                0.5 * (c.drift[a] + c.alpha) + c.half_c2[a] / dz,
                0.5 * (c.alpha - c.drift[b]) + c.half_c2[b] / dz,
            ),
            Scheme::FirstOrder => (c.drift[a] + c.half_c2[a] / dz, c.half_c2[b] / dz),
        };
        worst = worst.max(ka * own_a).max(kb * own_b);
    }
    dt * c.rate + worst
}

/// Rows that may change in one stage: nonzero rows widened by the stencil reach.
fn active_rows(values: &[f64], n_w: usize, n_z: usize) -> Option<(usize, usize)> {
    let nonzero = |i: &usize| values[i * n_z..(i + 1) * n_z].iter().any(|&v| v != 0.0);
    let lo = (0..n_w).find(nonzero)?;
    let hi = (0..n_w).rev().find(nonzero)?;
    Some((lo.saturating_sub(3), (hi + 3).min(n_w - 1)))
}

#[inline(always)]
fn theta_for(slack_low: f64, slack_high: f64) -> f64 {
    let s = slack_low.max(0.0);
    let t = s / (s - slack_high);
    if slack_high >= 0.0 {
        1.0
    } else {
        t
    }
}

/// Explicit forward stepper for one habitat.
pub(crate) struct FpeStepper {
    grid: Grid2D,
    c: Coeffs,
    dt: f64,
    scheme: Scheme,
    fw: Vec<f64>,
    fz: Vec<f64>,
    up: Vec<f64>,
    stage: Vec<f64>,
    stage2: Vec<f64>,
    pad_p: Vec<f64>,
    pad_m: Vec<f64>,
}

impl FpeStepper {
    pub(crate) fn new(grid: Grid2D, habitat: &HabitatParams, dt: f64, scheme: Scheme) -> Result<Self> {
        habitat.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        let cfl = cfl_number(&grid, habitat, dt, scheme);
        if cfl > 1.0 {
            return Err(Error::Stability { dt, cfl });
        }
        let n = grid.len();
        Ok(FpeStepper {
            grid,
            c: Coeffs::new(&grid, habitat),
            dt,
            scheme,
            fw: vec![0.0; (grid.n_w + 1) * grid.n_z],
            fz: vec![0.0; grid.n_w * (grid.n_z + 1)],
            up: vec![0.0; n],
            stage: vec![0.0; n],
            stage2: vec![0.0; n],
            pad_p: vec![0.0; grid.n_z + 6],
            pad_m: vec![0.0; grid.n_z + 6],
        })
    }

    /// Face fluxes of `u`. With `limit` the fluxes are blended so the
    /// Euler update from `self.up` stays nonnegative.
    fn faces(&mut self, u: &[f64], rows: (usize, usize), limit: bool) {
        let Grid2D { n_w: nw, n_z: nz, .. } = self.grid;
        let (lo, hi) = rows;
        let lw = self.dt / self.grid.dw();
        let lz = self.dt / self.grid.dz();
        let inv_dz = 1.0 / self.grid.dz();
        let weno = self.scheme == Scheme::Weno;
        let c = &self.c;
        let row = |i: isize| {
            let i = i.clamp(0, nw as isize - 1) as usize;
            &u[i * nz..(i + 1) * nz]
        };

        // Faces between rows k - 1 and k; faces lo and hi + 1 carry nothing.
        for k in [lo, hi + 1] {
            self.fw[k * nz..(k + 1) * nz].fill(0.0);
        }
        for k in (lo + 1).max(1)..=hi.min(nw - 1) {
            let i = k as isize - 1;
            let (ra, rb, rc, rd, re) = (row(i - 2), row(i - 1), row(i), row(i + 1), row(i + 2));
            let out = &mut self.fw[k * nz..(k + 1) * nz];
            let speed = &c.speed[..nz];
            if weno {
                for j in 0..nz {
                    out[j] = speed[j] * weno5(ra[j], rb[j], rc[j], rd[j], re[j]);
                }
            } else {
                for j in 0..nz {
                    out[j] = speed[j] * rc[j];
                }
            }
            if limit && weno {
                let ka = 4.0 * lw * if k == 1 { 2.0 } else { 1.0 };
                let kb = 4.0 * lw * if k == nw - 1 { 2.0 } else { 1.0 };
                let upa = &self.up[(k - 1) * nz..k * nz];
                let upb = &self.up[k * nz..(k + 1) * nz];
                for j in 0..nz {
                    let low = speed[j] * rc[j];
                    let high = out[j];
                    let t = theta_for(upa[j] - ka * low, upa[j] - ka * high)
                        .min(theta_for(upb[j] + kb * low, upb[j] + kb * high));
                    out[j] = low + t * (high - low);
                }
            }
        }

        // z faces per row, face k between nodes k - 1 and k, walls at 0 and nz.
        let m = nz - 1;
        let (drift, half_c2) = (&c.drift[..nz], &c.half_c2[..nz]);
        let ka: Vec<f64> = (1..nz).map(|k| 4.0 * lz * if k == 1 { 2.0 } else { 1.0 }).collect();
        let kb: Vec<f64> = (1..nz).map(|k| 4.0 * lz * if k == nz - 1 { 2.0 } else { 1.0 }).collect();
        for i in lo..=hi {
            let ur = &u[i * nz..(i + 1) * nz];
            let upr = &self.up[i * nz..(i + 1) * nz];
            let out = &mut self.fz[i * (nz + 1)..(i + 1) * (nz + 1)];
            out[0] = 0.0;
            out[nz] = 0.0;
            let out = &mut out[1..nz];
            let (ua, ub) = (&ur[..m], &ur[1..]);
            let (da, db) = (&drift[..m], &drift[1..]);
            let (ga, gb) = (&half_c2[..m], &half_c2[1..]);
            if weno {
                for p in 0..nz + 6 {
                    let j = (p as isize - 3).clamp(0, nz as isize - 1) as usize;
                    self.pad_p[p] = 0.5 * (drift[j] + c.alpha) * ur[j];
                    self.pad_m[p] = 0.5 * (drift[j] - c.alpha) * ur[j];
                }
                // Padded index p = node + 3; face k uses nodes k - 3 ..= k + 2.
                let pp = &self.pad_p;
                let pm = &self.pad_m;
                let (p0, p1, p2, p3, p4) = (&pp[1..], &pp[2..], &pp[3..], &pp[4..], &pp[5..]);
                let (m0, m1, m2, m3, m4) = (&pm[2..], &pm[3..], &pm[4..], &pm[5..], &pm[6..]);
                for k in 0..m {
                    let plus = weno5(p0[k], p1[k], p2[k], p3[k], p4[k]);
                    let minus = weno5(m4[k], m3[k], m2[k], m1[k], m0[k]);
                    let diff = -(gb[k] * ub[k] - ga[k] * ua[k]) * inv_dz;
                    out[k] = plus + minus + diff;
                }
                if limit {
                    let (upa, upb) = (&upr[..m], &upr[1..]);
                    for k in 0..m {
                        let diff = -(gb[k] * ub[k] - ga[k] * ua[k]) * inv_dz;
                        let low = 0.5 * (da[k] * ua[k] + db[k] * ub[k])
                            - 0.5 * c.alpha * (ub[k] - ua[k])
                            + diff;
                        let high = out[k];
                        let t = theta_for(upa[k] - ka[k] * low, upa[k] - ka[k] * high)
                            .min(theta_for(upb[k] + kb[k] * low, upb[k] + kb[k] * high));
                        out[k] = low + t * (high - low);
                    }
                }
            } else {
                for k in 0..m {
                    out[k] = da[k] * ua[k] - (gb[k] * ub[k] - ga[k] * ua[k]) * inv_dz;
                }
            }
        }
    }

    /// One limited forward-Euler stage from `u` into `out`.
    fn euler(&mut self, u: &[f64], out: &mut [f64]) {
        let Grid2D { n_w: nw, n_z: nz, .. } = self.grid;
        let Some((lo, hi)) = active_rows(u, nw, nz) else {
            out.fill(0.0);
            return;
        };
        let decay = 1.0 - self.dt * self.c.rate;
        for (p, v) in self.up[lo * nz..(hi + 1) * nz].iter_mut().zip(&u[lo * nz..(hi + 1) * nz]) {
            *p = decay * v;
        }
        self.faces(u, (lo, hi), true);
        out[..lo * nz].fill(0.0);
        out[(hi + 1) * nz..].fill(0.0);
        let cz: Vec<f64> = (0..nz)
            .map(|j| self.dt / self.grid.dz() * if j == 0 || j == nz - 1 { 2.0 } else { 1.0 })
            .collect();
        for i in lo..=hi {
            let cw = self.dt / self.grid.dw() * if i == 0 || i == nw - 1 { 2.0 } else { 1.0 };
            let (fl, fr) = (&self.fw[i * nz..(i + 1) * nz], &self.fw[(i + 1) * nz..(i + 2) * nz]);
            let fz = &self.fz[i * (nz + 1)..(i + 1) * (nz + 1)];
            let (zl, zr) = (&fz[..nz], &fz[1..]);
            let up = &self.up[i * nz..(i + 1) * nz];
            let o = &mut out[i * nz..(i + 1) * nz];
            for j in 0..nz {
                let v = up[j] - cw * (fr[j] - fl[j]) - cz[j] * (zr[j] - zl[j]);
                // Round-off below zero, or values too small to stay normal.
                o[j] = if v < 1e-290 { 0.0 } else { v };
            }
        }
    }

    /// One Heun step in place.
    pub(crate) fn step(&mut self, u: &mut [f64]) {
        let mut s1 = std::mem::take(&mut self.stage);
        let mut s2 = std::mem::take(&mut self.stage2);
        self.euler(u, &mut s1);
        self.euler(&s1, &mut s2);
        for (x, y) in u.iter_mut().zip(&s2) {
            *x = 0.5 * (*x + y);
        }
        self.stage = s1;
        self.stage2 = s2;
    }

    /// Flux-difference tendency (without the sink) at node `(i, j)`.
    fn divergence(&self, i: usize, j: usize) -> f64 {
        let Grid2D { n_w: nw, n_z: nz, .. } = self.grid;
        let cw = if i == 0 || i == nw - 1 { 2.0 } else { 1.0 } / self.grid.dw();
        let cz = if j == 0 || j == nz - 1 { 2.0 } else { 1.0 } / self.grid.dz();
        let fw = (self.fw[(i + 1) * nz + j] - self.fw[i * nz + j]) * cw;
        let fz = (self.fz[i * (nz + 1) + j + 1] - self.fz[i * (nz + 1) + j]) * cz;
        fw + fz
    }

    /// Unlimited tendency `-div F - R u`.
    fn rhs(&mut self, u: &[f64]) -> Vec<f64> {
        let (nw, nz) = (self.grid.n_w, self.grid.n_z);
        let mut out = vec![0.0; u.len()];
        let Some((lo, hi)) = active_rows(u, nw, nz) else {
            return out;
        };
        self.faces(u, (lo, hi), false);
        for i in lo..=hi {
            for j in 0..nz {
                let n = i * nz + j;
                out[n] = -self.divergence(i, j) - self.c.rate * u[n];
            }
        }
        out
    }
}

/// Forward tendency `-d_w(r(1-z)y) - d_z(A y - d_z(C^2 y / 2)) - R y`.
pub fn fpe_rhs(y: &Field2D, habitat: &HabitatParams, scheme: Scheme) -> Result<Field2D> {
    habitat.validate()?;
    let mut st = FpeStepper {
        grid: y.grid,
        c: Coeffs::new(&y.grid, habitat),
        dt: 0.0,
        scheme,
        fw: vec![0.0; (y.grid.n_w + 1) * y.grid.n_z],
        fz: vec![0.0; y.grid.n_w * (y.grid.n_z + 1)],
        up: vec![0.0; y.grid.len()],
        stage: Vec::new(),
        stage2: Vec::new(),
        pad_p: vec![0.0; y.grid.n_z + 6],
        pad_m: vec![0.0; y.grid.n_z + 6],
    };
    let values = st.rhs(&y.values);
    Ok(Field2D {
        grid: y.grid,
        values,
    })
}

/// Number of steps of size `dt` covering `[t0, t1]`.
fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(t1 > t0) {
        return Err(Error::Input(format!("empty interval [{t0}, {t1}]")));
    }
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    let n = ((t1 - t0) / dt).round();
    if (n * dt - (t1 - t0)).abs() > 1e-9 * (t1 - t0).max(1.0) {
        return Err(Error::param("dt", "does not divide the interval"));
    }
    Ok(n as usize)
}

/// Advances one habitat's density from `t0` to `t1` with the WENO scheme.
pub fn advance_fpe(y: &Field2D, habitat: &HabitatParams, t0: f64, t1: f64, dt: f64) -> Result<Field2D> {
    advance_fpe_with(y, habitat, t0, t1, dt, Scheme::Weno)
}

pub fn advance_fpe_with(
    y: &Field2D,
    habitat: &HabitatParams,
    t0: f64,
    t1: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<Field2D> {
    let n = step_count(t0, t1, dt)?;
    let mut st = FpeStepper::new(y.grid, habitat, dt, scheme)?;
    let mut out = y.clone();
    for _ in 0..n {
        st.step(&mut out.values);
    }
    Ok(out)
}

/// Applies `y1+ = (1 - u) y1`, `y2+ = u y1 + y2` pointwise.
pub fn apply_transport_impulse(
    y1: &Field2D,
    y2: &Field2D,
    u: ImpulseControl<'_>,
    cap: f64,
) -> Result<(Field2D, Field2D)> {
    let grid = y1.grid;
    if y2.grid != grid || u.values().len() != u.expected_len(&grid) {
        return Err(Error::Policy("control or field shape mismatch".into()));
    }
    if let Some(v) = u.values().iter().find(|&&v| !(0.0..=cap).contains(&v)) {
        return Err(Error::Policy(format!("control value {v} outside [0, {cap}]")));
    }
    let mut a = y1.clone();
    let mut b = y2.clone();
    for i in 0..grid.n_w {
        for j in 0..grid.n_z {
            let n = grid.idx(i, j);
            let moved = u.at(&grid, i, j) * y1.values[n];
            a.values[n] = y1.values[n] - moved;
            b.values[n] = y2.values[n] + moved;
        }
    }
    Ok((a, b))
}

/// Stored forward trajectory data.
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    /// Snapped impulse times.
    pub tau: Vec<f64>,
    pub horizon: f64,
    /// `(y1, y2)` just before each impulse.
    pub pre: Vec<(Field2D, Field2D)>,
    /// `(y1, y2)` just after each impulse.
    pub post: Vec<(Field2D, Field2D)>,
    /// `(y1, y2)` at the horizon.
    pub terminal: (Field2D, Field2D),
    /// `(t, mass1, mass2)` after every step, starting at `t = 0`.
    pub mass_history: Vec<(f64, f64, f64)>,
    /// `(t, ybar1, ybar2)` conditional densities at the recording interval.
    pub conditional: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

/// Solves the forward problem under `policy`.
pub fn solve_forward(scenario: &Scenario, policy: &ControlPolicy) -> Result<ForwardSolution> {
    scenario.validate()?;
    check_policy(scenario, policy)?;
    let grid = scenario.grid;
    let dt = scenario.dt;
    let (n_steps, ks) = scenario.schedule.step_indices(dt)?;
    let mut s1 = FpeStepper::new(grid, &scenario.habitat1, dt, scenario.scheme)?;
    let mut s2 = FpeStepper::new(grid, &scenario.habitat2, dt, scenario.scheme)?;
    let mut y1 = scenario.init.field(&grid)?;
    let mut y2 = Field2D::zeros(grid);
    let record_every = ((scenario.record_interval / dt).round() as usize).max(1);

    let mut sol = ForwardSolution {
        tau: ks.iter().map(|&k| k as f64 * dt).collect(),
        horizon: n_steps as f64 * dt,
        pre: Vec::with_capacity(ks.len()),
        post: Vec::with_capacity(ks.len()),
        terminal: (Field2D::zeros(grid), Field2D::zeros(grid)),
        mass_history: Vec::with_capacity(n_steps + 1),
        conditional: Vec::new(),
    };
    let mut y2_zero = true;
    let mut next = 0;
    for n in 0..=n_steps {
        let t = n as f64 * dt;
        if next < ks.len() && ks[next] == n {
            sol.pre.push((y1.clone(), y2.clone()));
            let (a, b) = apply_transport_impulse(&y1, &y2, policy.impulse(next), policy.cap)?;
            y1 = a;
            y2 = b;
            y2_zero = y2.is_zero();
            sol.post.push((y1.clone(), y2.clone()));
            next += 1;
        }
        sol.mass_history.push((t, y1.integrate(), y2.integrate()));
        if n % record_every == 0 || n == n_steps {
            sol.conditional
                .push((t, y1.conditional_density(), y2.conditional_density()));
        }
        if n == n_steps {
            break;
        }
        let v1 = &mut y1.values;
        let v2 = &mut y2.values;
        if y2_zero {
            s1.step(v1);
        } else {
            join(|| s1.step(v1), || s2.step(v2));
        }
    }
    sol.terminal = (y1, y2);
    Ok(sol)
}

fn check_policy(scenario: &Scenario, policy: &ControlPolicy) -> Result<()> {
    policy.validate()?;
    if policy.grid != scenario.grid {
        return Err(Error::Policy("policy grid differs from scenario grid".into()));
    }
    if policy.n_impulses() != scenario.schedule.len() {
        return Err(Error::Policy(format!(
            "policy has {} impulses, schedule has {}",
            policy.n_impulses(),
            scenario.schedule.len()
        )));
    }
    if policy.cap > scenario.cap_u {
        return Err(Error::Policy("policy cap exceeds scenario cap".into()));
    }
    Ok(())
}

/// Explicit reversed-time adjoint stepper for one habitat.
pub(crate) struct AdjointStepper {
    grid: Grid2D,
    c: Coeffs,
    dt: f64,
    scheme: Scheme,
    k1: Vec<f64>,
    k2: Vec<f64>,
    stage: Vec<f64>,
    dw_rows: Vec<f64>,
    pad: Vec<f64>,
}

impl AdjointStepper {
    pub(crate) fn new(grid: Grid2D, habitat: &HabitatParams, dt: f64, scheme: Scheme) -> Result<Self> {
        habitat.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        let cfl = cfl_number(&grid, habitat, dt, scheme);
        if cfl > 1.0 {
            return Err(Error::Stability { dt, cfl });
        }
        Ok(Self::unchecked(grid, habitat, dt, scheme))
    }

    fn unchecked(grid: Grid2D, habitat: &HabitatParams, dt: f64, scheme: Scheme) -> Self {
        let n = grid.len();
        AdjointStepper {
            grid,
            c: Coeffs::new(&grid, habitat),
            dt,
            scheme,
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            stage: vec![0.0; n],
            dw_rows: vec![0.0; (grid.n_w + 6) * grid.n_z],
            pad: vec![0.0; grid.n_z + 6],
        }
    }

    /// Tendency `r(1-z) q_w + A q_z + C^2/2 q_zz - R q` into `out`.
    fn rhs_into(&mut self, q: &[f64], out: &mut [f64]) {
        let Grid2D { n_w: nw, n_z: nz, .. } = self.grid;
        let Some((lo, hi)) = active_rows(q, nw, nz) else {
            out.fill(0.0);
            return;
        };
        let (dw, dz) = (self.grid.dw(), self.grid.dz());
        let c = &self.c;
        let weno = self.scheme == Scheme::Weno;
        // The w speed does not depend on w, so r(1-z) q_w is differenced as a
        // flux: right-biased face values g_k at w_{k+1/2}, stored at row k + 1.
        let row = |k: isize| {
            let k = k.clamp(0, nw as isize - 1) as usize;
            &q[k * nz..(k + 1) * nz]
        };
        for f in lo..=hi + 1 {
            let k = f as isize - 1;
            let dst = &mut self.dw_rows[f * nz..(f + 1) * nz];
            let (a, b, cc, d, e) = (row(k + 3), row(k + 2), row(k + 1), row(k), row(k - 1));
            if weno {
                for j in 0..nz {
                    dst[j] = weno5(a[j], b[j], cc[j], d[j], e[j]);
                }
            } else {
                dst.copy_from_slice(cc);
            }
        }
        out[..lo * nz].fill(0.0);
        out[(hi + 1) * nz..].fill(0.0);
        let inv_dz = 1.0 / dz;
        let inv_dw = 1.0 / dw;
        let (speed, drift, half_c2) = (&c.speed[..nz], &c.drift[..nz], &c.half_c2[..nz]);
        // Half cells at the z walls, as in the forward operator.
        let wall: Vec<f64> = (0..nz).map(|j| if j == 0 || j == nz - 1 { 2.0 } else { 1.0 }).collect();
        for i in lo..=hi {
            let qr = &q[i * nz..(i + 1) * nz];
            let o = &mut out[i * nz..(i + 1) * nz];
            let gr = &self.dw_rows[(i + 1) * nz..(i + 2) * nz];
            // The w = 0 node owns a half cell whose left face carries q itself.
            let (gl, k) = if i == 0 {
                (qr, 2.0 * inv_dw)
            } else {
                (&self.dw_rows[i * nz..(i + 1) * nz], inv_dw)
            };
            for j in 0..nz {
                o[j] = speed[j] * (gr[j] - gl[j]) * k - c.rate * qr[j];
            }
            // z differences with Neumann ghosts at padded index k + 3.
            self.pad[..3].fill(0.0);
            self.pad[nz + 2..].fill(0.0);
            for k in 0..nz - 1 {
                self.pad[k + 3] = (qr[k + 1] - qr[k]) * inv_dz;
            }
            // Node j sits at padded index j + 3.
            let pd = &self.pad;
            let (m0, m1, m2, m3, m4) = (&pd[1..], &pd[2..], &pd[3..], &pd[4..], &pd[5..]);
            if weno {
                for j in 0..nz {
                    let deriv = weno5(m4[j], m3[j], m2[j], m1[j], m0[j]);
                    let second = (m2[j] - m1[j]) * inv_dz;
                    o[j] += wall[j] * (drift[j] * deriv + half_c2[j] * second);
                }
            } else {
                for j in 0..nz {
                    let second = (m2[j] - m1[j]) * inv_dz;
                    o[j] += wall[j] * (drift[j] * m2[j] + half_c2[j] * second);
                }
            }
        }
    }

    /// One Heun step in reversed time, in place.
    pub(crate) fn step(&mut self, q: &mut [f64]) {
        let mut k1 = std::mem::take(&mut self.k1);
        let mut k2 = std::mem::take(&mut self.k2);
        let mut stage = std::mem::take(&mut self.stage);
        self.rhs_into(q, &mut k1);
        for ((s, x), k) in stage.iter_mut().zip(q.iter()).zip(&k1) {
            *s = x + self.dt * k;
        }
        self.rhs_into(&stage, &mut k2);
        for ((x, a), b) in q.iter_mut().zip(&k1).zip(&k2) {
            *x += 0.5 * self.dt * (a + b);
        }
        self.k1 = k1;
        self.k2 = k2;
        self.stage = stage;
    }
}

/// Reversed-time adjoint tendency.
pub fn adjoint_rhs(q: &Field2D, habitat: &HabitatParams, scheme: Scheme) -> Result<Field2D> {
    habitat.validate()?;
    let mut st = AdjointStepper::unchecked(q.grid, habitat, 0.0, scheme);
    let mut out = vec![0.0; q.grid.len()];
    st.rhs_into(&q.values, &mut out);
    Ok(Field2D {
        grid: q.grid,
        values: out,
    })
}

/// Integrates the adjoint over `[t0, t1]` backwards from its value at `t1`.
pub fn advance_adjoint(
    q: &Field2D,
    habitat: &HabitatParams,
    t0: f64,
    t1: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<Field2D> {
    let n = step_count(t0, t1, dt)?;
    let mut st = AdjointStepper::new(q.grid, habitat, dt, scheme)?;
    let mut out = q.clone();
    for _ in 0..n {
        st.step(&mut out.values);
    }
    Ok(out)
}

/// `q1 = q1+ + u (c - q1+ + q2+)`, `q2 = q2+` pointwise.
pub fn adjoint_impulse(
    q1_plus: &Field2D,
    q2_plus: &Field2D,
    u: ImpulseControl<'_>,
    c: f64,
) -> Result<(Field2D, Field2D)> {
    let grid = q1_plus.grid;
    if q2_plus.grid != grid || u.values().len() != u.expected_len(&grid) {
        return Err(Error::Policy("control or field shape mismatch".into()));
    }
    let mut q1 = q1_plus.clone();
    for i in 0..grid.n_w {
        for j in 0..grid.n_z {
            let n = grid.idx(i, j);
            let a = q1_plus.values[n];
            q1.values[n] = a + u.at(&grid, i, j) * (c - a + q2_plus.values[n]);
        }
    }
    Ok((q1, q2_plus.clone()))
}

/// Terminal adjoint data: `q1(T) = 0`, `q2(T) = -indicator of the window`.
pub fn terminal_adjoint(scenario: &Scenario) -> Result<(Field2D, Field2D)> {
    let grid = scenario.grid;
    let q1 = Field2D::zeros(grid);
    let mut q2 = Field2D::zeros(grid);
    if let Some((lo, hi)) = scenario.window() {
        let ind = window_indicator(&grid, lo, hi)?;
        for i in 0..grid.n_w {
            q2.values[i * grid.n_z..(i + 1) * grid.n_z].fill(ind[i]);
        }
    }
    Ok((q1, q2))
}

/// Stored adjoint data.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub tau: Vec<f64>,
    /// `(q1, q2)` just after each impulse (before the interface in backward time).
    pub plus: Vec<(Field2D, Field2D)>,
    /// `(q1, q2)` at each impulse after the interface condition.
    pub at_tau: Vec<(Field2D, Field2D)>,
    /// `(q1, q2)` at `t = 0`.
    pub initial: (Field2D, Field2D),
}

/// How the backward sweep chooses each impulse's control.
pub enum ControlRule<'a> {
    /// Use the given policy unchanged.
    Prescribed(&'a ControlPolicy),
    /// Bang-bang extraction from the post-impulse adjoint.
    Extract {
        mode: InfoMode,
        forward: Option<&'a ForwardSolution>,
    },
}

/// Backward sweep under `rule`; returns the adjoint and the policy used.
pub fn solve_adjoint(scenario: &Scenario, rule: ControlRule<'_>) -> Result<(AdjointSolution, ControlPolicy)> {
    scenario.validate()?;
    let grid = scenario.grid;
    let dt = scenario.dt;
    let (n_steps, ks) = scenario.schedule.step_indices(dt)?;
    let n_imp = ks.len();
    let mut policy = match &rule {
        ControlRule::Prescribed(p) => {
            check_policy(scenario, p)?;
            (*p).clone()
        }
        ControlRule::Extract { mode, forward } => {
            if *mode == InfoMode::Partial {
                let f = forward.ok_or_else(|| {
                    Error::Input("partial-information extraction needs forward snapshots".into())
                })?;
                if f.pre.len() != n_imp || f.pre.first().is_some_and(|p| p.0.grid != grid) {
                    return Err(Error::Input("forward snapshots do not match the scenario".into()));
                }
            }
            ControlPolicy::zeros(*mode, grid, n_imp, scenario.cap_u)
        }
    };
    let mut a1 = AdjointStepper::new(grid, &scenario.habitat1, dt, scenario.scheme)?;
    let mut a2 = AdjointStepper::new(grid, &scenario.habitat2, dt, scenario.scheme)?;
    let (mut q1, mut q2) = terminal_adjoint(scenario)?;
    let mut plus = vec![None; n_imp];
    let mut at_tau = vec![None; n_imp];
    let mut q1_zero = true;
    let mut j = n_imp;
    for n in (0..=n_steps).rev() {
        if j > 0 && ks[j - 1] == n {
            j -= 1;
            if let ControlRule::Extract { mode, forward } = &rule {
                policy.controls[j] = match mode {
                    InfoMode::Full => extract_control_full(&q1, &q2, scenario.cost_c, scenario.cap_u),
                    InfoMode::Partial => {
                        let y1 = &forward.expect("checked above").pre[j].0;
                        let l = switching_function_partial(y1, &q1, &q2, scenario.cost_c)?;
                        extract_control_partial(&l, scenario.cap_u)
                    }
                };
            }
            plus[j] = Some((q1.clone(), q2.clone()));
            let (n1, n2) = adjoint_impulse(&q1, &q2, policy.impulse(j), scenario.cost_c)?;
            q1 = n1;
            q2 = n2;
            q1_zero = q1.is_zero();
            at_tau[j] = Some((q1.clone(), q2.clone()));
        }
        if n == 0 {
            break;
        }
        let v1 = &mut q1.values;
        let v2 = &mut q2.values;
        if q1_zero {
            a2.step(v2);
        } else {
            join(|| a1.step(v1), || a2.step(v2));
        }
    }
    let adj = AdjointSolution {
        tau: ks.iter().map(|&k| k as f64 * dt).collect(),
        plus: plus.into_iter().map(|p| p.expect("visited")).collect(),
        at_tau: at_tau.into_iter().map(|p| p.expect("visited")).collect(),
        initial: (q1, q2),
    };
    Ok((adj, policy))
}

/// Backward sweep extracting bang-bang controls on the fly.
///
/// Partial information needs the forward solution for the switching integral.
pub fn solve_backward(
    scenario: &Scenario,
    mode: InfoMode,
    forward: Option<&ForwardSolution>,
) -> Result<(AdjointSolution, ControlPolicy)> {
    solve_adjoint(scenario, ControlRule::Extract { mode, forward })
}
