//! Writes SVG charts of a short simulation and an optimized policy.
//!
//! `cargo run --release --example render_plots -- [out_dir]`

use std::path::PathBuf;

use fpimpulse::cli::plot::{render_plot, PlotKind, PlotOptions};
use fpimpulse::cli::{conditional_csv, intervals_csv, stats_csv};
use fpimpulse::growth::{simulate_weight_stats, GrowthParams, ModelKind};
use fpimpulse::optimize::{optimize_partial, Scenario};
use fpimpulse::pde::solve_forward;

fn main() -> fpimpulse::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "plots".into()));
    std::fs::create_dir_all(&out)?;

    let times: Vec<f64> = (1..=90).map(f64::from).collect();
    let stats = simulate_weight_stats(&GrowthParams::identified_2019(), ModelKind::Proposed, &times, 0.01, 20_000, 1)?;
    let csv = String::from_utf8(stats_csv(&times, &stats)?.bytes).expect("utf-8");
    let opts = PlotOptions {
        title: "Body weight".into(),
        columns: Some(vec!["average".into(), "std_dev".into()]),
        ..PlotOptions::default()
    };
    std::fs::write(out.join("stats.svg"), render_plot(PlotKind::Curves, &csv, &opts)?)?;

    let sc = Scenario::baseline(0.048, 0.051).with_resolution(61, 0.01);
    let report = optimize_partial(&sc, 50, None)?;
    let fwd = solve_forward(&sc, &report.policy)?;
    let heat = PlotOptions {
        title: "Conditional density, habitat 1".into(),
        impulse_times: sc.schedule.times.clone(),
        columns: None,
    };
    let csv = String::from_utf8(conditional_csv("conditional_h1.csv", &fwd, 1)?.bytes).expect("utf-8");
    std::fs::write(out.join("conditional_h1.svg"), render_plot(PlotKind::Heatmap, &csv, &heat)?)?;
    let csv = String::from_utf8(intervals_csv(&[(sc.cost_c, &report)], &sc.schedule.times)?.bytes).expect("utf-8");
    let bars = PlotOptions {
        title: "Transported size classes".into(),
        ..PlotOptions::default()
    };
    std::fs::write(out.join("intervals.svg"), render_plot(PlotKind::Intervals, &csv, &bars)?)?;
    println!("wrote stats.svg, conditional_h1.svg and intervals.svg to {}", out.display());
    Ok(())
}
