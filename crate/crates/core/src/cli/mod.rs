//! Command-line front end: config ingestion, orchestration and artifact output.
//!
//! Every command computes all artifacts in memory first and then writes each
//! one through a temporary file and a rename, so a failing run leaves no
//! partial outputs behind.

pub mod config;
pub mod plot;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calibrate::{identify_from_histogram, identify_growth_rate, HistogramData, HistoricalData, SearchBox};
use crate::error::{Error, Result};
use crate::growth::{mean_curve, simulate_paths, simulate_weight_stats, GrowthParams};
use crate::optimize::{active_intervals, cost_sweep, optimize_full, optimize_partial, OptimizationReport, Scenario};
use crate::pde::{solve_forward, ForwardSolution, ImpulseControl, InfoMode};

pub use config::{load_config, parse_config, Command, RunConfig};
pub use plot::{render_plot, PlotKind, PlotOptions};

/// Exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code for stability (CFL) violations.
pub const EXIT_STABILITY: i32 = 2;
/// Exit code for a Picard iteration that did not reach a fixed point.
pub const EXIT_NOT_CONVERGED: i32 = 3;
/// Exit code for I/O and malformed data files.
pub const EXIT_IO: i32 = 4;

/// Category code of an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Stability { .. } => EXIT_STABILITY,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// One output file held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, text: String) -> Artifact {
        Artifact {
            name: name.to_string(),
            bytes: text.into_bytes(),
        }
    }
}

/// Artifacts of a finished run and whether every optimization converged.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    pub converged: bool,
}

/// Formats a number for CSV output: shortest round-trip form, scientific
/// notation outside `[1e-4, 1e7)`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e7).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

struct CsvOut {
    w: csv::Writer<Vec<u8>>,
}

impl CsvOut {
    fn new(header: &[&str]) -> Result<CsvOut> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        Ok(CsvOut { w })
    }

    fn row(&mut self, cells: &[String]) -> Result<()> {
        self.w.write_record(cells)?;
        Ok(())
    }

    fn finish(self, name: &str) -> Result<Artifact> {
        let bytes = self
            .w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(Artifact {
            name: name.to_string(),
            bytes,
        })
    }
}

/// Rows `t,average,std_dev,skewness`.
pub fn stats_csv(times: &[f64], stats: &[(f64, f64, Option<f64>)]) -> Result<Artifact> {
    let mut out = CsvOut::new(&["t", "average", "std_dev", "skewness"])?;
    for (&t, &(a, s, k)) in times.iter().zip(stats) {
        out.row(&[fmt_num(t), fmt_num(a), fmt_num(s), k.map(fmt_num).unwrap_or_default()])?;
    }
    out.finish("stats.csv")
}

/// Rows `c,j,tau,w_lo,w_hi`, one per active interval; `j` counts from 1.
pub fn intervals_csv(entries: &[(f64, &OptimizationReport)], tau: &[f64]) -> Result<Artifact> {
    let mut out = CsvOut::new(&["c", "j", "tau", "w_lo", "w_hi"])?;
    for &(c, rep) in entries {
        for j in 0..rep.policy.n_impulses() {
            for (lo, hi) in active_intervals(&rep.policy, j) {
                out.row(&[fmt_num(c), (j + 1).to_string(), fmt_num(tau[j]), fmt_num(lo), fmt_num(hi)])?;
            }
        }
    }
    out.finish("intervals.csv")
}

/// Rows `c,phi,iterations,converged`.
pub fn objectives_csv(name: &str, entries: &[(f64, &OptimizationReport)]) -> Result<Artifact> {
    let mut out = CsvOut::new(&["c", "phi", "iterations", "converged"])?;
    for &(c, rep) in entries {
        out.row(&[
            fmt_num(c),
            fmt_num(rep.objective_value),
            rep.iterations.to_string(),
            rep.converged.to_string(),
        ])?;
    }
    out.finish(name)
}

/// Rows `t,w,value` of one habitat's recorded conditional densities.
pub fn conditional_csv(name: &str, fwd: &ForwardSolution, habitat: usize) -> Result<Artifact> {
    let grid = fwd.terminal.0.grid;
    let w = grid.w_nodes();
    let mut out = CsvOut::new(&["t", "w", "value"])?;
    for (t, y1, y2) in &fwd.conditional {
        let ybar = if habitat == 1 { y1 } else { y2 };
        for (wi, v) in w.iter().zip(ybar) {
            out.row(&[fmt_num(*t), fmt_num(*wi), fmt_num(*v)])?;
        }
    }
    out.finish(name)
}

/// Rows `t,w,z,value` of full fields of one habitat: before each impulse and at the horizon.
pub fn fields_csv(name: &str, fwd: &ForwardSolution, habitat: usize) -> Result<Artifact> {
    let mut out = CsvOut::new(&["t", "w", "z", "value"])?;
    let snaps = fwd
        .tau
        .iter()
        .zip(&fwd.pre)
        .chain(std::iter::once((&fwd.horizon, &fwd.terminal)));
    for (t, (f1, f2)) in snaps {
        let f = if habitat == 1 { f1 } else { f2 };
        let g = f.grid;
        for i in 0..g.n_w {
            for j in 0..g.n_z {
                out.row(&[fmt_num(*t), fmt_num(g.w(i)), fmt_num(g.z(j)), fmt_num(f.at(i, j))])?;
            }
        }
    }
    out.finish(name)
}

fn mass_csv(fwd: &ForwardSolution) -> Result<Artifact> {
    let mut out = CsvOut::new(&["t", "m1", "m2"])?;
    for &(t, a, b) in &fwd.mass_history {
        out.row(&[fmt_num(t), fmt_num(a), fmt_num(b)])?;
    }
    out.finish("mass.csv")
}

fn policy_csv(rep: &OptimizationReport, tau: &[f64]) -> Result<Artifact> {
    let p = &rep.policy;
    let g = p.grid;
    let partial = p.mode == InfoMode::Partial;
    let header: &[&str] = if partial {
        &["j", "tau", "w", "u"]
    } else {
        &["j", "tau", "w", "z", "u"]
    };
    let mut out = CsvOut::new(header)?;
    for j in 0..p.n_impulses() {
        let u = p.impulse(j);
        for i in 0..g.n_w {
            if let ImpulseControl::Partial(v) = u {
                out.row(&[(j + 1).to_string(), fmt_num(tau[j]), fmt_num(g.w(i)), fmt_num(v[i])])?;
                continue;
            }
            for k in 0..g.n_z {
                out.row(&[
                    (j + 1).to_string(),
                    fmt_num(tau[j]),
                    fmt_num(g.w(i)),
                    fmt_num(g.z(k)),
                    fmt_num(u.at(&g, i, k)),
                ])?;
            }
        }
    }
    out.finish("policy.csv")
}

fn svg(name: &str, kind: PlotKind, csv: &Artifact, opts: PlotOptions) -> Result<Artifact> {
    let text = std::str::from_utf8(&csv.bytes)
        .map_err(|e| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    Ok(Artifact::text(name, render_plot(kind, text, &opts)?))
}

fn titled(title: &str) -> PlotOptions {
    PlotOptions {
        title: title.to_string(),
        ..PlotOptions::default()
    }
}

fn run_simulate(cfg: &RunConfig) -> Result<RunOutput> {
    let p = cfg.growth.params();
    let mc = &cfg.mc;
    let stats = simulate_weight_stats(&p, mc.kind, &mc.times, mc.dt, mc.n_paths, cfg.seed)?;
    let csv = stats_csv(&mc.times, &stats)?;
    let plot = svg(
        "stats.svg",
        PlotKind::Curves,
        &csv,
        PlotOptions {
            title: "Body-weight statistics".into(),
            columns: Some(vec!["average".into(), "std_dev".into()]),
            ..PlotOptions::default()
        },
    )?;
    Ok(RunOutput {
        artifacts: vec![csv, plot],
        converged: true,
    })
}

fn read_raw_weights(path: &Path) -> Result<Vec<f64>> {
    #[derive(serde::Deserialize)]
    struct Row {
        weight_g: f64,
    }
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<Row>()
        .map(|r| r.map(|r| r.weight_g).map_err(Error::from))
        .collect()
}

#[derive(Serialize)]
struct CalibrationSummary {
    observed: crate::stats::SampleStats,
    best: GrowthParams,
    search_p: f64,
    final_stats: crate::stats::SampleStats,
    final_p: f64,
    candidates: usize,
}

fn run_calibrate(cfg: &RunConfig) -> Result<RunOutput> {
    let cal = &cfg.calibrate;
    let mc = cfg.mc.mc_config(cfg.seed);
    let mut artifacts = Vec::new();
    if let Some(path) = &cal.histogram {
        let raw = cal.raw_weights.as_deref().map(read_raw_weights).transpose()?;
        let hist = HistogramData::from_path(path, raw.as_deref())?;
        let sb = cal
            .search_box
            .unwrap_or_else(|| SearchBox::point(&cfg.growth.params()));
        let fit = identify_from_histogram(&hist, &sb, &mc, cal.obs_day)?;
        let mut out = CsvOut::new(&["r", "d_relax", "sigma", "z0", "p"])?;
        for c in &fit.evaluated {
            let q = c.params;
            out.row(&[fmt_num(q.r), fmt_num(q.d_relax), fmt_num(q.sigma), fmt_num(q.z0), fmt_num(c.p)])?;
        }
        artifacts.push(out.finish("candidates.csv")?);
        let summary = CalibrationSummary {
            observed: hist.observed_stats,
            best: fit.best.params,
            search_p: fit.best.p,
            final_stats: fit.final_stats,
            final_p: fit.final_p,
            candidates: fit.evaluated.len(),
        };
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.into()))?;
        artifacts.push(Artifact::text("calibration.json", json + "\n"));
        let ens = simulate_paths(&fit.best.params, mc.kind, &[cal.obs_day], mc.dt, mc.final_paths, mc.seed)?;
        let model = hist.bin_fractions(&ens.weights(0));
        let mut out = CsvOut::new(&["bin_lo", "bin_hi", "observed", "model"])?;
        for (k, (o, m)) in hist.frequencies().iter().zip(&model).enumerate() {
            let hi = hist.bin_edges[k + 1];
            out.row(&[
                fmt_num(hist.bin_edges[k]),
                if hi.is_finite() { fmt_num(hi) } else { String::new() },
                fmt_num(*o),
                fmt_num(*m),
            ])?;
        }
        let csv = out.finish("histogram.csv")?;
        artifacts.push(svg("histogram.svg", PlotKind::Histogram, &csv, titled("Observed and model histograms"))?);
        artifacts.push(csv);
    }
    if let Some(path) = &cal.historical {
        let data = HistoricalData::from_path(path)?;
        let fit = identify_growth_rate(&data, &cfg.growth.params(), &cal.r_grid, &mc)?;
        let mut buf = Vec::new();
        fit.write_csv(&mut buf)?;
        let table = Artifact {
            name: "err_table.csv".into(),
            bytes: buf,
        };
        artifacts.push(svg(
            "err_table.svg",
            PlotKind::Curves,
            &table,
            PlotOptions {
                title: "Mean squared error against growth rate".into(),
                columns: Some(vec!["err".into()]),
                ..PlotOptions::default()
            },
        )?);
        artifacts.push(table);
        let last = data.days().last().copied().unwrap_or(1.0).ceil() as usize;
        let days: Vec<f64> = (1..=last).map(|d| d as f64).collect();
        let best = GrowthParams {
            r: fit.r_star,
            ..cfg.growth.params()
        };
        let means = mean_curve(&best, mc.kind, &days, mc.dt, mc.search_paths, mc.seed)?;
        let mut out = CsvOut::new(&["t", "model_mean", "observed"])?;
        let mut obs = data.observations.clone();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for (&d, &m) in days.iter().zip(&means) {
            out.row(&[fmt_num(d), fmt_num(m), String::new()])?;
        }
        for &(t, x) in &obs {
            out.row(&[fmt_num(t), String::new(), fmt_num(x)])?;
        }
        let csv = out.finish("fit_curve.csv")?;
        artifacts.push(svg("fit_curve.svg", PlotKind::Curves, &csv, titled("Mean weight and observations"))?);
        artifacts.push(csv);
    }
    Ok(RunOutput {
        artifacts,
        converged: true,
    })
}

fn scenario_of(cfg: &RunConfig) -> Result<Scenario> {
    let sc = cfg
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Config {
            path: "scenario".into(),
            message: "required for this command".into(),
        })?
        .scenario();
    sc.validate()?;
    Ok(sc)
}

fn heatmap_opts(title: &str, sc: &Scenario) -> PlotOptions {
    PlotOptions {
        title: title.to_string(),
        impulse_times: sc.schedule.times.clone(),
        columns: None,
    }
}

fn run_optimize(cfg: &RunConfig) -> Result<RunOutput> {
    let sc = scenario_of(cfg)?;
    let rep = match cfg.optimize.mode {
        InfoMode::Partial => optimize_partial(&sc, cfg.optimize.max_iters, None)?,
        InfoMode::Full => optimize_full(&sc)?,
    };
    let fwd = solve_forward(&sc, &rep.policy)?;
    let tau = &sc.schedule.times;
    let entries = [(sc.cost_c, &rep)];
    let mut artifacts = vec![
        objectives_csv("objective.csv", &entries)?,
        policy_csv(&rep, tau)?,
        mass_csv(&fwd)?,
    ];
    let mut out = CsvOut::new(&["iteration", "delta"])?;
    for (k, d) in rep.delta_history.iter().enumerate() {
        out.row(&[(k + 1).to_string(), fmt_num(*d)])?;
    }
    artifacts.push(out.finish("convergence.csv")?);
    let iv = intervals_csv(&entries, tau)?;
    artifacts.push(svg("intervals.svg", PlotKind::Intervals, &iv, titled("Active transport intervals"))?);
    artifacts.push(iv);
    for h in [1, 2] {
        let csv = conditional_csv(&format!("conditional_h{h}.csv"), &fwd, h)?;
        let title = format!("Conditional density, habitat {h}");
        artifacts.push(svg(&format!("conditional_h{h}.svg"), PlotKind::Heatmap, &csv, heatmap_opts(&title, &sc))?);
        artifacts.push(csv);
        if cfg.optimize.export_fields {
            artifacts.push(fields_csv(&format!("y{h}_fields.csv"), &fwd, h)?);
        }
    }
    Ok(RunOutput {
        artifacts,
        converged: rep.converged,
    })
}

fn run_sweep(cfg: &RunConfig) -> Result<RunOutput> {
    let sc = scenario_of(cfg)?;
    let sweep = cost_sweep(&sc, &cfg.sweep.c_values, cfg.optimize.max_iters)?;
    let entries: Vec<(f64, &OptimizationReport)> = sweep.iter().map(|e| (e.c, &e.report)).collect();
    let iv = intervals_csv(&entries, &sc.schedule.times)?;
    let ob = objectives_csv("objectives.csv", &entries)?;
    Ok(RunOutput {
        artifacts: vec![
            svg("intervals.svg", PlotKind::Intervals, &iv, titled("Active transport intervals against cost"))?,
            iv,
            ob,
        ],
        converged: sweep.iter().all(|e| e.report.converged),
    })
}

/// Known artifact CSVs and how to draw them.
fn plot_plan(cfg: &RunConfig) -> Vec<(&'static str, &'static str, PlotKind, PlotOptions)> {
    let impulse_times = cfg
        .scenario
        .as_ref()
        .map(|s| s.impulse_times.clone())
        .unwrap_or_default();
    let heat = |t: &str| PlotOptions {
        title: t.to_string(),
        impulse_times: impulse_times.clone(),
        columns: None,
    };
    vec![
        (
            "stats.csv",
            "stats.svg",
            PlotKind::Curves,
            PlotOptions {
                title: "Body-weight statistics".into(),
                columns: Some(vec!["average".into(), "std_dev".into()]),
                ..PlotOptions::default()
            },
        ),
        ("histogram.csv", "histogram.svg", PlotKind::Histogram, titled("Observed and model histograms")),
        ("fit_curve.csv", "fit_curve.svg", PlotKind::Curves, titled("Mean weight and observations")),
        (
            "err_table.csv",
            "err_table.svg",
            PlotKind::Curves,
            PlotOptions {
                title: "Mean squared error against growth rate".into(),
                columns: Some(vec!["err".into()]),
                ..PlotOptions::default()
            },
        ),
        ("conditional_h1.csv", "conditional_h1.svg", PlotKind::Heatmap, heat("Conditional density, habitat 1")),
        ("conditional_h2.csv", "conditional_h2.svg", PlotKind::Heatmap, heat("Conditional density, habitat 2")),
        ("intervals.csv", "intervals.svg", PlotKind::Intervals, titled("Active transport intervals")),
    ]
}

fn run_plot(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    let dir = cfg.plot.input_dir.clone().unwrap_or_else(|| out_dir.to_path_buf());
    let mut artifacts = Vec::new();
    for (csv_name, svg_name, kind, opts) in plot_plan(cfg) {
        let path = dir.join(csv_name);
        if !path.is_file() {
            continue;
        }
        let text = std::fs::read_to_string(&path)?;
        artifacts.push(Artifact::text(svg_name, render_plot(kind, &text, &opts)?));
    }
    if artifacts.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no artifact CSVs found in {}", dir.display()),
        )));
    }
    Ok(RunOutput {
        artifacts,
        converged: true,
    })
}

/// Runs `cfg.command` and returns its artifacts without touching the disk
/// (except reading inputs).
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    match cfg.command {
        Command::Simulate => run_simulate(cfg),
        Command::Calibrate => run_calibrate(cfg),
        Command::Optimize => run_optimize(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::Plot => run_plot(cfg, out_dir),
    }
}

/// Writes `bytes` to `dir/name` via a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    version: &'a str,
    inputs_sha256: String,
    wall_time_s: f64,
    converged: bool,
    artifacts: Vec<&'a str>,
}

fn inputs_hash(config_bytes: &[u8], cfg: &RunConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(config_bytes);
    let cal = &cfg.calibrate;
    for p in [&cal.histogram, &cal.raw_weights, &cal.historical].into_iter().flatten() {
        if cfg.command == Command::Calibrate {
            h.update(std::fs::read(p)?);
        }
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Parsed command line.
#[derive(Debug, clap::Parser)]
#[command(name = "fpimpulse", version, about = "Fish growth calibration and impulsive transport optimization")]
pub struct Cli {
    /// What to run.
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Loads, runs and writes everything; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match run_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run_inner(cli: &Cli) -> Result<i32> {
    let start = Instant::now();
    let mut cfg = load_config(&cli.config)?;
    if cfg.command != cli.command {
        return Err(Error::Config {
            path: "command".into(),
            message: format!(
                "config is for `{}` but `{}` was requested",
                cfg.command.name(),
                cli.command.name()
            ),
        });
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let config_bytes = std::fs::read(&cli.config)?;
    let hash = inputs_hash(&config_bytes, &cfg)?;
    let output = execute(&cfg, &cli.out)?;
    std::fs::create_dir_all(&cli.out)?;
    for a in &output.artifacts {
        write_atomic(&cli.out, &a.name, &a.bytes)?;
    }
    let manifest = Manifest {
        command: cfg.command.name(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        inputs_sha256: hash,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged: output.converged,
        artifacts: output.artifacts.iter().map(|a| a.name.as_str()).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.into()))?;
    write_atomic(&cli.out, "manifest.json", (json + "\n").as_bytes())?;
    if output.converged {
        Ok(0)
    } else {
        eprintln!("warning: Picard iteration did not converge");
        Ok(EXIT_NOT_CONVERGED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(56.4), "56.4");
        assert_eq!(fmt_num(1e-300), "1e-300");
        assert_eq!(fmt_num(6e6), "6000000");
        assert_eq!(fmt_num(-2.5e9), "-2.5e9");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Stability { dt: 1.0, cfl: 2.0 }), 2);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 4);
        let e = Error::Config {
            path: "a".into(),
            message: "b".into(),
        };
        assert_eq!(exit_code(&e), 1);
    }

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.csv", b"x\n").unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["a.csv".to_string()]);
    }

    #[test]
    fn stats_csv_format() {
        let a = stats_csv(&[1.0, 2.0], &[(6.0, 0.0, None), (7.5, 1.25, Some(0.5))]).unwrap();
        let text = String::from_utf8(a.bytes).unwrap();
        assert_eq!(text, "t,average,std_dev,skewness\n1,6,0,\n2,7.5,1.25,0.5\n");
    }
}
