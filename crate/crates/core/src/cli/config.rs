//! JSON run configuration: schema, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{McConfig, SearchBox};
use crate::error::{Error, Result};
use crate::growth::{GrowthParams, ModelKind};
use crate::numerics::Grid2D;
use crate::optimize::Scenario;
use crate::pde::{HabitatParams, ImpulseSchedule, InfoMode, InitialHump, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Calibrate,
    Optimize,
    Sweep,
    Plot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::Optimize => "optimize",
            Command::Sweep => "sweep",
            Command::Plot => "plot",
        }
    }
}

/// Growth-model parameters; omitted fields take the 2019 identified values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrowthConfig {
    pub r: f64,
    pub d_relax: f64,
    pub sigma: f64,
    pub x0: f64,
    pub z0: f64,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        let p = GrowthParams::identified_2019();
        GrowthConfig {
            r: p.r,
            d_relax: p.d_relax,
            sigma: p.sigma,
            x0: p.x0,
            z0: p.z0,
        }
    }
}

impl GrowthConfig {
    pub fn params(&self) -> GrowthParams {
        GrowthParams {
            r: self.r,
            d_relax: self.d_relax,
            sigma: self.sigma,
            x0: self.x0,
            z0: self.z0,
        }
    }
}

/// Monte-Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSettings {
    pub dt: f64,
    pub n_paths: usize,
    /// Paths per candidate in calibration searches.
    pub search_paths: usize,
    pub kind: ModelKind,
    /// Sample times of the statistics table, day.
    pub times: Vec<f64>,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            dt: 0.004,
            n_paths: 1_000_000,
            search_paths: 100_000,
            kind: ModelKind::Proposed,
            times: (1..=90).map(f64::from).collect(),
        }
    }
}

impl McSettings {
    pub fn mc_config(&self, seed: u64) -> McConfig {
        McConfig {
            dt: self.dt,
            search_paths: self.search_paths,
            final_paths: self.n_paths,
            seed,
            kind: self.kind,
        }
    }
}

/// Calibration inputs. Paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    /// CSV with rows `bin_lo,bin_hi,count`.
    pub histogram: Option<PathBuf>,
    /// Optional CSV with a `weight_g` column of raw observed weights.
    pub raw_weights: Option<PathBuf>,
    /// CSV with rows `day,weight_g`.
    pub historical: Option<PathBuf>,
    pub obs_day: f64,
    pub search_box: Option<SearchBox>,
    pub r_grid: Vec<f64>,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        CalibrateConfig {
            histogram: None,
            raw_weights: None,
            historical: None,
            obs_day: 90.0,
            search_box: None,
            r_grid: (41..=51).map(|k| k as f64 / 1000.0).collect(),
        }
    }
}

fn default_d() -> f64 {
    0.019
}
fn default_sigma() -> f64 {
    0.051
}
fn default_mortality() -> f64 {
    0.01
}

/// One habitat; only `r` is required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HabitatConfig {
    pub r: f64,
    #[serde(default = "default_d")]
    pub d_relax: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_mortality")]
    pub mortality: f64,
}

impl HabitatConfig {
    fn params(&self) -> HabitatParams {
        HabitatParams {
            r: self.r,
            d_relax: self.d_relax,
            sigma: self.sigma,
            mortality: self.mortality,
        }
    }
}

fn default_w_max() -> f64 {
    5.3
}
fn default_n() -> usize {
    201
}
fn default_dt() -> f64 {
    0.01
}
fn default_cost() -> f64 {
    0.2
}
fn default_cap() -> f64 {
    0.2
}
fn default_horizon() -> f64 {
    70.0
}
fn default_times() -> Vec<f64> {
    (1..=6).map(|j| 10.0 * j as f64).collect()
}
fn default_record() -> f64 {
    1.0
}

/// Two-habitat transport scenario. Omitting `target_window` gives
/// `(0.3 w_max, 0.7 w_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub habitat1: HabitatConfig,
    pub habitat2: HabitatConfig,
    #[serde(default = "default_cost")]
    pub cost_c: f64,
    #[serde(default = "default_cap")]
    pub cap_u: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_times")]
    pub impulse_times: Vec<f64>,
    #[serde(default)]
    pub target_window: Option<[f64; 2]>,
    #[serde(default = "default_w_max")]
    pub w_max: f64,
    #[serde(default = "default_n")]
    pub n_w: usize,
    #[serde(default = "default_n")]
    pub n_z: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_record")]
    pub record_interval: f64,
    #[serde(default)]
    pub init: InitialHump,
}

impl ScenarioConfig {
    pub fn scenario(&self) -> Scenario {
        Scenario {
            habitat1: self.habitat1.params(),
            habitat2: self.habitat2.params(),
            schedule: ImpulseSchedule {
                times: self.impulse_times.clone(),
                horizon: self.horizon,
            },
            cost_c: self.cost_c,
            cap_u: self.cap_u,
            target_window: self
                .target_window
                .unwrap_or([0.3 * self.w_max, 0.7 * self.w_max]),
            init: self.init,
            grid: Grid2D {
                w_max: self.w_max,
                n_w: self.n_w,
                n_z: self.n_z,
            },
            dt: self.dt,
            scheme: self.scheme,
            record_interval: self.record_interval,
        }
    }
}

fn default_max_iters() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default = "default_mode")]
    pub mode: InfoMode,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Also export full `(w, z)` fields at every impulse and at the horizon.
    #[serde(default)]
    pub export_fields: bool,
}

fn default_mode() -> InfoMode {
    InfoMode::Partial
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            mode: InfoMode::Partial,
            max_iters: 50,
            export_fields: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub c_values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            c_values: (1..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    /// Directory holding the artifact CSVs; defaults to the output directory.
    pub input_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    2019
}

/// A complete, validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub growth: GrowthConfig,
    #[serde(default)]
    pub mc: McSettings,
    #[serde(default)]
    pub calibrate: CalibrateConfig,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub plot: PlotConfig,
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses and validates a JSON config from text. Relative paths are resolved
/// against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let path = e.path().to_string();
        config_err(
            path,
            format!("{inner} (line {}, column {})", inner.line(), inner.column()),
        )
    })?;
    for p in [
        &mut cfg.calibrate.histogram,
        &mut cfg.calibrate.raw_weights,
        &mut cfg.calibrate.historical,
        &mut cfg.plot.input_dir,
    ]
    .into_iter()
    .flatten()
    {
        if p.is_relative() {
            *p = base_dir.join(&*p);
        }
    }
    validate_config(&cfg)?;
    Ok(cfg)
}

/// Reads, parses and validates the config at `path`.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err("", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

fn prefixed(prefix: &str, e: Error) -> String {
    match e {
        Error::Parameter { field, reason } => format!("{prefix}{field}: {reason}"),
        other => format!("{prefix}: {other}"),
    }
}

/// Checks every parameter block, collecting all violations.
pub fn validate_config(cfg: &RunConfig) -> Result<()> {
    let mut issues: Vec<String> = Vec::new();
    if let Err(e) = cfg.growth.params().validate() {
        issues.push(prefixed("growth.", e));
    }
    let mc = &cfg.mc;
    if !(mc.dt > 0.0 && mc.dt.is_finite()) {
        issues.push("mc.dt: must be > 0".into());
    }
    if mc.n_paths < 2 || mc.search_paths < 2 {
        issues.push("mc.n_paths / mc.search_paths: must be >= 2".into());
    }
    if mc.times.is_empty() || mc.times.iter().any(|t| !(*t > 0.0)) || mc.times.windows(2).any(|w| w[1] <= w[0]) {
        issues.push("mc.times: must be nonempty, positive and increasing".into());
    }
    let cal = &cfg.calibrate;
    if !(cal.obs_day > 0.0) {
        issues.push("calibrate.obs_day: must be > 0".into());
    }
    if cal.r_grid.is_empty() {
        issues.push("calibrate.r_grid: must be nonempty".into());
    }
    if let Some(sc) = &cfg.scenario {
        let s = sc.scenario();
        let mut checks: Vec<(&str, Result<()>)> = vec![
            ("scenario.habitat1.", s.habitat1.validate()),
            ("scenario.habitat2.", s.habitat2.validate()),
            ("scenario.", s.grid.validate()),
            ("scenario.", s.init.validate()),
        ];
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            checks.push(("scenario.", Err(Error::param("dt", "must be positive"))));
        } else {
            checks.push(("scenario.", s.schedule.step_indices(s.dt).map(|_| ())));
        }
        for (prefix, r) in checks {
            if let Err(e) = r {
                issues.push(prefixed(prefix, e));
            }
        }
        if !(s.cost_c >= 0.0 && s.cost_c.is_finite()) {
            issues.push("scenario.cost_c: must be finite and >= 0".into());
        }
        if !(s.cap_u > 0.0 && s.cap_u < 1.0) {
            issues.push(format!("scenario.cap_u: {} violates 0 < U < 1", s.cap_u));
        }
        let [lo, hi] = s.target_window;
        if !(0.0 <= lo && lo <= hi && hi <= s.grid.w_max) {
            issues.push(format!(
                "scenario.target_window: must satisfy 0 <= w_lo <= w_hi <= {}",
                s.grid.w_max
            ));
        }
        if !(s.record_interval > 0.0) {
            issues.push("scenario.record_interval: must be positive".into());
        }
    } else if matches!(cfg.command, Command::Optimize | Command::Sweep) {
        issues.push("scenario: required for this command".into());
    }
    if cfg.optimize.max_iters == 0 {
        issues.push("optimize.max_iters: must be >= 1".into());
    }
    if cfg.command == Command::Sweep && cfg.sweep.c_values.is_empty() {
        issues.push("sweep.c_values: must be nonempty".into());
    }
    if cfg.sweep.c_values.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
        issues.push("sweep.c_values: costs must be finite and >= 0".into());
    }
    if cfg.command == Command::Calibrate && cal.histogram.is_none() && cal.historical.is_none() {
        issues.push("calibrate: needs `histogram` or `historical`".into());
    }
    for (name, p) in [
        ("calibrate.histogram", &cal.histogram),
        ("calibrate.raw_weights", &cal.raw_weights),
        ("calibrate.historical", &cal.historical),
    ] {
        if let Some(p) = p {
            if cfg.command == Command::Calibrate && !p.is_file() {
                issues.push(format!("{name}: file {} does not exist", p.display()));
            }
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        let path = issues[0].split(':').next().unwrap_or("").to_string();
        Err(config_err(path, issues.join("; ")))
    }
}
