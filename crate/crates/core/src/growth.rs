//! Monte-Carlo simulation of the latent-variable growth model.
//!
//! The state is the pair `(w, z)` with `w = ln X` the log body weight and
//! `z` in `[0, 1]` the weight-to-maximum ratio. The proposed model has
//!
//! ```text
//! dw = r (1 - z) dt
//! dz = D (1 - z) dt + sigma * sqrt(z (1 - z)) dB
//! ```
//!
//! and the legacy model uses `A(z) = z(1-z)(r + D + sigma^2 (1-z))`,
//! `C(z) = sigma z (1-z)` in place of the Wright-Fisher coefficients.
//!
//! Paths use independent ChaCha8 substreams keyed by `(seed, path index)`,
//! so ensembles do not depend on how the work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{NeumaierSum, SampleStats};

/// Paths handled by one unit of parallel work.
const CHUNK: usize = 1024;

/// Parameters of one habitat's growth law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    /// Specific growth rate r (1/day).
    pub r: f64,
    /// Relaxation rate D (1/day).
    pub d_relax: f64,
    /// Noise intensity sigma (1/day^0.5).
    pub sigma: f64,
    /// Initial body weight X0 (g).
    pub x0: f64,
    /// Initial weight-to-maximum ratio Z0.
    pub z0: f64,
}

impl GrowthParams {
    pub fn new(r: f64, d_relax: f64, sigma: f64, x0: f64, z0: f64) -> Result<Self> {
        let p = GrowthParams {
            r,
            d_relax,
            sigma,
            x0,
            z0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters identified from the 2019 histogram.
    pub fn identified_2019() -> Self {
        GrowthParams {
            r: 0.051,
            d_relax: 0.019,
            sigma: 0.051,
            x0: 6.0,
            z0: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.r, self.d_relax, self.sigma, self.x0, self.z0]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("growth", "all parameters must be finite"));
        }
        if self.r <= 0.0 {
            return Err(Error::param("r", "must be > 0"));
        }
        if self.d_relax <= 0.0 {
            return Err(Error::param("d_relax", "must be > 0"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::param("sigma", "must be > 0"));
        }
        if self.x0 <= 0.0 {
            return Err(Error::param("x0", "must be > 0"));
        }
        if !(self.z0 > 0.0 && self.z0 < 1.0) {
            return Err(Error::param("z0", "must satisfy 0 < z0 < 1"));
        }
        if 2.0 * self.d_relax < self.sigma * self.sigma {
            return Err(Error::param(
                "sigma",
                format!(
                    "noise too strong: 2*d_relax = {} < sigma^2 = {}",
                    2.0 * self.d_relax,
                    self.sigma * self.sigma
                ),
            ));
        }
        Ok(())
    }

    /// Initial log weight `W0 = ln X0`.
    pub fn w0(&self) -> f64 {
        self.x0.ln()
    }
}

/// Which coefficient pair `(A, C)` drives the latent ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Wright-Fisher driver with linear drift.
    Proposed,
    /// Earlier open-ended logistic model in transformed variables.
    Legacy,
}

impl ModelKind {
    /// Drift coefficient `A(z)`.
    pub fn drift(self, z: f64, p: &GrowthParams) -> f64 {
        match self {
            ModelKind::Proposed => p.d_relax * (1.0 - z),
            ModelKind::Legacy => {
                z * (1.0 - z) * (p.r + p.d_relax + p.sigma * p.sigma * (1.0 - z))
            }
        }
    }

    /// Diffusion coefficient `C(z)`.
    pub fn diffusion(self, z: f64, p: &GrowthParams) -> f64 {
        match self {
            ModelKind::Proposed => p.sigma * (z * (1.0 - z)).max(0.0).sqrt(),
            ModelKind::Legacy => p.sigma * z * (1.0 - z),
        }
    }

    /// Deterministic part of one step. Exact for the linear drift, forward
    /// Euler for the legacy drift (which maps `[0, 1]` into itself for
    /// `dt (r + D + sigma^2) <= 1`).
    fn drift_step(self, z: f64, dt: f64, p: &GrowthParams) -> f64 {
        match self {
            ModelKind::Proposed => 1.0 - (1.0 - z) * (-p.d_relax * dt).exp(),
            ModelKind::Legacy => (z + self.drift(z, p) * dt).clamp(0.0, 1.0),
        }
    }
}

/// Euler step of the log weight: `w + r (1 - z) dt`.
pub fn step_w(w: f64, z: f64, dt: f64, params: &GrowthParams) -> f64 {
    w + params.r * (1.0 - z) * dt
}

/// One bounded step of the proposed latent ratio.
///
/// See [`step_z`] for the scheme.
pub fn step_z_bounded(z: f64, dt: f64, params: &GrowthParams, gaussian: f64) -> f64 {
    step_z(ModelKind::Proposed, z, dt, params, gaussian)
}

/// One bounded step of the latent ratio for either model.
///
/// The drift is advanced first (exactly for the proposed model). The noise
/// increment `C(z~) sqrt(dt) xi` is then taken with the diffusion frozen at
/// the drifted point `z~`. When that Gaussian increment would leave `[0, 1]`
/// the step instead uses the two-point Wright-Fisher resampling
/// `z' = (1 - s) z~ + s B`, `B ~ Bernoulli(z~)`, with `s` chosen so the
/// conditional variance is still `C(z~)^2 dt`. Both branches keep the
/// conditional mean at `z~` and produce values in `[0, 1]` by construction.
/// The Bernoulli draw is `Phi(xi) < z~`, so a single standard normal drives
/// the step.
pub fn step_z(kind: ModelKind, z: f64, dt: f64, params: &GrowthParams, gaussian: f64) -> f64 {
    Stepper::new(kind, dt, params).z(z, gaussian)
}

/// Step-size dependent constants of [`step_z`], hoisted out of path loops.
#[derive(Debug, Clone, Copy)]
struct Stepper {
    kind: ModelKind,
    params: GrowthParams,
    dt: f64,
    sqrt_dt: f64,
    decay: f64,
}

impl Stepper {
    fn new(kind: ModelKind, dt: f64, params: &GrowthParams) -> Self {
        Stepper {
            kind,
            params: *params,
            dt,
            sqrt_dt: dt.sqrt(),
            decay: (-params.d_relax * dt).exp(),
        }
    }

    #[inline]
    fn z(&self, z: f64, gaussian: f64) -> f64 {
        let p = &self.params;
        let zt = match self.kind {
            ModelKind::Proposed => 1.0 - (1.0 - z) * self.decay,
            ModelKind::Legacy => self.kind.drift_step(z, self.dt, p),
        };
        let c = self.kind.diffusion(zt, p);
        let proposal = zt + c * self.sqrt_dt * gaussian;
        if (0.0..=1.0).contains(&proposal) {
            return proposal;
        }
        let spread = zt * (1.0 - zt);
        let s = ((c * c * self.dt) / spread).sqrt().min(1.0);
        let uniform = 0.5 * libm::erfc(-gaussian / std::f64::consts::SQRT_2);
        let b = if uniform < zt { 1.0 } else { 0.0 };
        let next = (1.0 - s) * zt + s * b;
        debug_assert!(next > -1e-14 && next < 1.0 + 1e-14);
        next.clamp(0.0, 1.0)
    }
}

/// Per-path samples of `(w, z)` at the requested times.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub seed: u64,
    n_paths: usize,
    // Path-major: sample k of path p is at p * times.len() + k.
    w: Vec<f64>,
    z: Vec<f64>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn w_path(&self, path: usize) -> &[f64] {
        let n = self.times.len();
        &self.w[path * n..(path + 1) * n]
    }

    pub fn z_path(&self, path: usize) -> &[f64] {
        let n = self.times.len();
        &self.z[path * n..(path + 1) * n]
    }

    /// Log weights of every path at sample `time_index`.
    pub fn w_samples(&self, time_index: usize) -> Vec<f64> {
        let n = self.times.len();
        (0..self.n_paths).map(|p| self.w[p * n + time_index]).collect()
    }

    pub fn z_samples(&self, time_index: usize) -> Vec<f64> {
        let n = self.times.len();
        (0..self.n_paths).map(|p| self.z[p * n + time_index]).collect()
    }

    /// Body weights `exp(w)` at sample `time_index`.
    pub fn weights(&self, time_index: usize) -> Vec<f64> {
        self.w_samples(time_index).into_iter().map(f64::exp).collect()
    }
}

/// Step sizes between consecutive sample times: full steps plus a remainder.
fn step_plan(times: &[f64], dt: f64) -> Result<Vec<(usize, f64)>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    if times.is_empty() {
        return Err(Error::Input("no sample times".into()));
    }
    let mut prev = 0.0;
    let mut plan = Vec::with_capacity(times.len());
    for &t in times {
        if !(t > prev) || !t.is_finite() {
            return Err(Error::Input(
                "sample times must be positive and strictly increasing".into(),
            ));
        }
        let span = t - prev;
        let ratio = span / dt;
        let rounded = ratio.round();
        let (full, rem) = if (ratio - rounded).abs() < 1e-9 * ratio.max(1.0) {
            (rounded as usize, 0.0)
        } else {
            let full = ratio.floor();
            (full as usize, span - full * dt)
        };
        plan.push((full, rem));
        prev = t;
    }
    Ok(plan)
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Paths advanced together so their dependency chains overlap.
const LANES: usize = 8;

/// Advances `paths` through the plan, calling `record(path, k, w, z)` at each
/// sample. Each path draws from its own stream, so results do not depend on
/// how paths are grouped.
fn run_paths(
    params: &GrowthParams,
    kind: ModelKind,
    plan: &[(usize, f64)],
    dt: f64,
    seed: u64,
    paths: std::ops::Range<usize>,
    mut record: impl FnMut(usize, usize, f64, f64),
) {
    let full_step = Stepper::new(kind, dt, params);
    let mut start = paths.start;
    while start < paths.end {
        let n = (paths.end - start).min(LANES);
        let mut rngs: Vec<ChaCha8Rng> = (start..start + n).map(|p| path_rng(seed, p)).collect();
        let mut w = [params.w0(); LANES];
        let mut z = [params.z0; LANES];
        let mut xi = [0.0f64; LANES];
        let mut advance = |st: &Stepper, h: f64, w: &mut [f64; LANES], z: &mut [f64; LANES]| {
            for (x, rng) in xi.iter_mut().zip(rngs.iter_mut()) {
                *x = StandardNormal.sample(rng);
            }
            for l in 0..n {
                w[l] = step_w(w[l], z[l], h, params);
                z[l] = st.z(z[l], xi[l]);
            }
        };
        for (k, &(full, rem)) in plan.iter().enumerate() {
            for _ in 0..full {
                advance(&full_step, dt, &mut w, &mut z);
            }
            if rem > 0.0 {
                advance(&Stepper::new(kind, rem, params), rem, &mut w, &mut z);
            }
            for l in 0..n {
                record(start + l, k, w[l], z[l]);
            }
        }
        start += n;
    }
}

/// Simulates `n_paths` sample paths and records `(w, z)` at `sample_times`.
pub fn simulate_paths(
    params: &GrowthParams,
    kind: ModelKind,
    sample_times: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be >= 1"));
    }
    let plan = step_plan(sample_times, dt)?;
    let nt = sample_times.len();
    let mut w = vec![0.0; n_paths * nt];
    let mut z = vec![0.0; n_paths * nt];
    w.par_chunks_mut(CHUNK * nt)
        .zip(z.par_chunks_mut(CHUNK * nt))
        .enumerate()
        .for_each(|(chunk, (wc, zc))| {
            let first = chunk * CHUNK;
            let count = wc.len() / nt;
            run_paths(params, kind, &plan, dt, seed, first..first + count, |p, k, wv, zv| {
                wc[(p - first) * nt + k] = wv;
                zc[(p - first) * nt + k] = zv;
            });
        });
    Ok(PathEnsemble {
        times: sample_times.to_vec(),
        seed,
        n_paths,
        w,
        z,
    })
}

/// The noise-free trajectory (`sigma` forced to zero) at `sample_times`.
pub fn simulate_noiseless(
    params: &GrowthParams,
    kind: ModelKind,
    sample_times: &[f64],
    dt: f64,
) -> Result<Vec<(f64, f64)>> {
    let plan = step_plan(sample_times, dt)?;
    let quiet = GrowthParams {
        sigma: 0.0,
        ..*params
    };
    let mut w = quiet.w0();
    let mut z = quiet.z0;
    let mut out = Vec::with_capacity(plan.len());
    for &(full, rem) in &plan {
        for _ in 0..full {
            w = step_w(w, z, dt, &quiet);
            z = step_z(kind, z, dt, &quiet, 0.0);
        }
        if rem > 0.0 {
            w = step_w(w, z, rem, &quiet);
            z = step_z(kind, z, rem, &quiet, 0.0);
        }
        out.push((w, z));
    }
    Ok(out)
}

/// Closed-form noise-free solution of the proposed model at time `t`.
pub fn deterministic_solution(params: &GrowthParams, t: f64) -> (f64, f64) {
    let decay = (-params.d_relax * t).exp();
    let z = 1.0 - (1.0 - params.z0) * decay;
    let w = params.w0() + params.r * (1.0 - params.z0) * (1.0 - decay) / params.d_relax;
    (w, z)
}

/// Sample statistics of the body weight `exp(w)` at `time_index`.
pub fn stats_at(ensemble: &PathEnsemble, time_index: usize) -> Result<SampleStats> {
    if time_index >= ensemble.times.len() {
        return Err(Error::Input(format!(
            "time index {time_index} out of range ({} samples)",
            ensemble.times.len()
        )));
    }
    SampleStats::from_samples(&ensemble.weights(time_index))
}

/// Running power sums of shifted weights for one sample time.
#[derive(Debug, Clone, Default)]
struct PowerSums {
    n: usize,
    s1: NeumaierSum,
    s2: NeumaierSum,
    s3: NeumaierSum,
}

impl PowerSums {
    fn push(&mut self, y: f64) {
        self.n += 1;
        self.s1.add(y);
        self.s2.add(y * y);
        self.s3.add(y * y * y);
    }

    fn merge(&mut self, other: &PowerSums) {
        self.n += other.n;
        self.s1.add(other.s1.value());
        self.s2.add(other.s2.value());
        self.s3.add(other.s3.value());
    }
}

/// Weight statistics per sample time without storing the paths.
///
/// Each entry is `(average, std_dev, skewness)`; skewness is `None` when the
/// spread is zero. Results are identical to [`simulate_paths`] followed by
/// [`stats_at`] up to summation round-off.
pub fn simulate_weight_stats(
    params: &GrowthParams,
    kind: ModelKind,
    sample_times: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64, Option<f64>)>> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::param("n_paths", "must be >= 1"));
    }
    let plan = step_plan(sample_times, dt)?;
    let nt = sample_times.len();
    // Shift by the noise-free weights to keep the power sums well conditioned.
    let shift: Vec<f64> = simulate_noiseless(params, kind, sample_times, dt)?
        .into_iter()
        .map(|(w, _)| w.exp())
        .collect();
    let n_chunks = n_paths.div_ceil(CHUNK);
    let partials: Vec<Vec<PowerSums>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut sums = vec![PowerSums::default(); nt];
            let end = ((chunk + 1) * CHUNK).min(n_paths);
            run_paths(params, kind, &plan, dt, seed, chunk * CHUNK..end, |_, k, w, _| {
                sums[k].push(w.exp() - shift[k]);
            });
            sums
        })
        .collect();
    let mut total = vec![PowerSums::default(); nt];
    for part in &partials {
        for (acc, p) in total.iter_mut().zip(part) {
            acc.merge(p);
        }
    }
    Ok(total
        .iter()
        .zip(&shift)
        .map(|(s, &c)| {
            let n = s.n as f64;
            let m1 = s.s1.value() / n;
            let m2 = (s.s2.value() / n - m1 * m1).max(0.0);
            let m3 = s.s3.value() / n - 3.0 * m1 * s.s2.value() / n + 2.0 * m1.powi(3);
            let std = m2.sqrt();
            let skew = (m2 > 0.0).then(|| m3 / m2.powf(1.5));
            (m1 + c, std, skew)
        })
        .collect())
}

/// Monte-Carlo mean body weight `E[X_t]` at each sample time.
pub fn mean_curve(
    params: &GrowthParams,
    kind: ModelKind,
    sample_times: &[f64],
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(
        simulate_weight_stats(params, kind, sample_times, dt, n_paths, seed)?
            .into_iter()
            .map(|(m, _, _)| m)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table1() -> GrowthParams {
        GrowthParams::identified_2019()
    }

    #[test]
    fn step_w_examples() {
        let p = table1();
        assert_eq!(step_w(1.0, 1.0, 0.004, &p), 1.0);
        assert_relative_eq!(step_w(0.0, 0.0, 1.0, &p), 0.051, epsilon = 1e-15);
        let w = 6f64.ln();
        assert_relative_eq!(step_w(w, 0.5, 0.004, &p), w + 1.02e-4, epsilon = 1e-14);
    }

    #[test]
    fn step_z_absorbs_at_one() {
        let p = table1();
        for xi in [-5.0, -0.3, 0.0, 0.7, 8.0] {
            assert_eq!(step_z_bounded(1.0, 0.004, &p, xi), 1.0);
        }
    }

    #[test]
    fn step_z_deterministic_limit() {
        let p = GrowthParams {
            sigma: 1e-12,
            ..GrowthParams::identified_2019()
        };
        let z = step_z_bounded(0.5, 0.004, &p, 0.0);
        assert_relative_eq!(z, 0.5 + 0.019 * 0.5 * 0.004, epsilon = 1e-8);
    }

    #[test]
    fn step_z_boundary_layer_stays_bounded() {
        let p = table1();
        for &z in &[1e-300, 1e-12, 1e-6, 1.0 - 1e-6, 1.0 - 1e-12, 0.999_999_999_999_999_9] {
            for xi in [-40.0, -6.0, -1.0, 0.0, 1.0, 6.0, 40.0] {
                let next = step_z_bounded(z, 0.004, &p, xi);
                assert!((0.0..=1.0).contains(&next), "z={z} xi={xi} -> {next}");
            }
        }
    }

    #[test]
    fn legacy_steps_are_bounded() {
        let p = GrowthParams::new(0.038, 0.016, 0.099, 6.0, 0.03).unwrap();
        for &z in &[0.0, 1e-9, 0.03, 0.5, 1.0 - 1e-9, 1.0] {
            for xi in [-30.0, -2.0, 0.0, 2.0, 30.0] {
                let next = step_z(ModelKind::Legacy, z, 0.004, &p, xi);
                assert!((0.0..=1.0).contains(&next));
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GrowthParams::new(0.0, 0.019, 0.051, 6.0, 0.02).is_err());
        assert!(GrowthParams::new(0.05, 0.019, 0.051, 6.0, 1.0).is_err());
        assert!(GrowthParams::new(0.05, 0.019, 0.051, -1.0, 0.5).is_err());
        // 2D < sigma^2
        assert!(GrowthParams::new(0.05, 0.001, 0.051, 6.0, 0.5).is_err());
    }

    #[test]
    fn step_plan_handles_remainders() {
        let plan = step_plan(&[1.0, 2.5], 0.4).unwrap();
        assert_eq!(plan[0].0, 2);
        assert_relative_eq!(plan[0].1, 0.2, epsilon = 1e-12);
        assert_eq!(plan[1].0, 3);
        assert_relative_eq!(plan[1].1, 0.3, epsilon = 1e-12);
        let plan = step_plan(&[90.0], 0.004).unwrap();
        assert_eq!(plan, vec![(22500, 0.0)]);
        assert!(step_plan(&[2.0, 1.0], 0.1).is_err());
        assert!(step_plan(&[0.0], 0.1).is_err());
    }

    #[test]
    fn seed_determinism() {
        let p = table1();
        let a = simulate_paths(&p, ModelKind::Proposed, &[1.0, 2.0], 0.01, 1, 7).unwrap();
        let b = simulate_paths(&p, ModelKind::Proposed, &[1.0, 2.0], 0.01, 1, 7).unwrap();
        assert_eq!(a.w_path(0), b.w_path(0));
        assert_eq!(a.z_path(0), b.z_path(0));
        let c = simulate_paths(&p, ModelKind::Proposed, &[1.0, 2.0], 0.01, 1, 8).unwrap();
        assert_ne!(a.z_path(0), c.z_path(0));
    }

    #[test]
    fn streaming_stats_match_ensemble() {
        let p = table1();
        let times = [30.0, 60.0];
        let ens = simulate_paths(&p, ModelKind::Proposed, &times, 0.05, 3000, 11).unwrap();
        let streamed =
            simulate_weight_stats(&p, ModelKind::Proposed, &times, 0.05, 3000, 11).unwrap();
        for k in 0..times.len() {
            let s = stats_at(&ens, k).unwrap();
            assert_relative_eq!(s.average, streamed[k].0, max_relative = 1e-10);
            assert_relative_eq!(s.std_dev, streamed[k].1, max_relative = 1e-8);
            assert_relative_eq!(s.skewness, streamed[k].2.unwrap(), max_relative = 1e-6);
        }
    }

    #[test]
    fn noiseless_matches_closed_form() {
        let p = GrowthParams {
            x0: 6.0,
            ..table1()
        };
        let times: Vec<f64> = (1..=9).map(|k| 10.0 * k as f64).collect();
        let sim = simulate_noiseless(&p, ModelKind::Proposed, &times, 0.004).unwrap();
        for (&t, &(w, z)) in times.iter().zip(&sim) {
            let (we, ze) = deterministic_solution(&p, t);
            assert!(((w - we) / we).abs() < 1e-3);
            assert!(((z - ze) / ze).abs() < 1e-3);
        }
        let (w90, _) = deterministic_solution(&p, 90.0);
        assert!((w90.exp() - 51.8).abs() < 0.1, "{}", w90.exp());
    }

    #[test]
    fn step_z_increment_mean_matches_drift() {
        let p = table1();
        let (z, dt) = (0.02, 0.004);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let incs: Vec<f64> = (0..n)
            .map(|_| step_z_bounded(z, dt, &p, StandardNormal.sample(&mut rng)) - z)
            .collect();
        let (mean, sd) = crate::stats::mean_std(&incs).unwrap();
        let se = sd / (n as f64).sqrt();
        let drift = p.d_relax * (1.0 - z) * dt;
        assert!((mean - drift).abs() < 3.0 * se, "{mean} vs {drift} (se {se})");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

        #[test]
        fn paths_respect_bounds_and_envelope(
            seed in 0u64..10_000,
            r in 0.01f64..0.1,
            d in 0.005f64..0.05,
            frac in 0.0f64..1.0,
            z0 in 0.001f64..0.999,
        ) {
            let sigma = (2.0 * d).sqrt() * frac.max(1e-3);
            let p = GrowthParams::new(r, d, sigma, 6.0, z0).unwrap();
            let times: Vec<f64> = (1..=10).map(|k| 3.0 * k as f64).collect();
            let dt = 0.05;
            let ens = simulate_paths(&p, ModelKind::Proposed, &times, dt, 64, seed).unwrap();
            let w0 = p.w0();
            for path in 0..ens.n_paths() {
                let w = ens.w_path(path);
                proptest::prop_assert!(ens.z_path(path).iter().all(|z| (0.0..=1.0).contains(z)));
                proptest::prop_assert!(w.windows(2).all(|s| s[1] >= s[0]));
                for (&t, &wt) in times.iter().zip(w) {
                    proptest::prop_assert!(wt >= w0 && wt <= w0 + r * t + r * dt);
                }
            }
        }
    }
}
