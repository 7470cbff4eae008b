use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fpimpulse(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpimpulse"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SIMULATE: &str = r#"{
  "command": "simulate",
  "seed": 11,
  "mc": { "dt": 0.05, "n_paths": 3000, "times": [10, 20, 30] }
}"#;

fn small_scenario(extra: &str) -> String {
    format!(
        r#""scenario": {{
    "habitat1": {{ "r": 0.048 }},
    "habitat2": {{ "r": 0.051 }},
    "n_w": 31, "n_z": 31, "dt": 0.02{extra}
  }}"#
    )
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sim.json", SIMULATE);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        let out = fpimpulse("simulate", &cfg, dir, &[]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = fpimpulse("simulate", &cfg, &c, &["--seed", "12"]);
    assert_eq!(out.status.code(), Some(0));

    let sa = fs::read_to_string(a.join("stats.csv")).unwrap();
    assert_eq!(sa, fs::read_to_string(b.join("stats.csv")).unwrap());
    assert_ne!(sa, fs::read_to_string(c.join("stats.csv")).unwrap());
    assert!(sa.starts_with("t,average,std_dev,skewness\n"));
    assert_eq!(sa.lines().count(), 4);
    assert!(a.join("stats.svg").is_file());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["converged"], true);
    assert_eq!(manifest["inputs_sha256"].as_str().unwrap().len(), 64);
    let c_manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(c.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(c_manifest["seed"], 12);
}

#[test]
fn plot_rerenders_existing_csvs_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sim.json", SIMULATE);
    let run = tmp.path().join("run");
    assert_eq!(fpimpulse("simulate", &cfg, &run, &[]).status.code(), Some(0));
    let plot_cfg = write(
        tmp.path(),
        "plot.json",
        &format!(r#"{{ "command": "plot", "plot": {{ "input_dir": {:?} }} }}"#, run.to_str().unwrap()),
    );
    let plots = tmp.path().join("plots");
    let out = fpimpulse("plot", &plot_cfg, &plots, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(run.join("stats.svg")).unwrap(),
        fs::read(plots.join("stats.svg")).unwrap()
    );
}

#[test]
fn plot_without_inputs_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "plot.json", r#"{ "command": "plot" }"#);
    let out = fpimpulse("plot", &cfg, &tmp.path().join("empty"), &[]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn invalid_config_exits_with_code_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        &format!(r#"{{ "command": "optimize", {} }}"#, small_scenario(r#", "cap_u": 1.5"#)),
    );
    let out_dir = tmp.path().join("out");
    let out = fpimpulse("optimize", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cap_u"), "{err}");
    assert!(!out_dir.join("manifest.json").exists());

    let typo = write(tmp.path(), "typo.json", r#"{ "command": "simulate", "mc": { "n_path": 5 } }"#);
    let out = fpimpulse("simulate", &typo, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_path"));
}

#[test]
fn command_mismatch_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sim.json", SIMULATE);
    let out = fpimpulse("sweep", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unstable_time_step_exits_with_code_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "unstable.json",
        r#"{
  "command": "optimize",
  "scenario": {
    "habitat1": { "r": 0.048 },
    "habitat2": { "r": 0.051 },
    "n_w": 61, "n_z": 61, "dt": 1.0
  }
}"#,
    );
    let out_dir = tmp.path().join("out");
    let out = fpimpulse("optimize", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let written = fs::read_dir(&out_dir).map(|d| d.count()).unwrap_or(0);
    assert_eq!(written, 0);
}

#[test]
fn optimize_writes_policy_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "opt.json",
        &format!(r#"{{ "command": "optimize", {}, "optimize": {{ "max_iters": 20 }} }}"#, small_scenario("")),
    );
    let out_dir = tmp.path().join("out");
    let out = fpimpulse("optimize", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "policy.csv",
        "intervals.csv",
        "intervals.svg",
        "convergence.csv",
        "mass.csv",
        "conditional_h1.csv",
        "conditional_h2.svg",
        "manifest.json",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let conv = fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert!(conv.starts_with("iteration,delta\n"));
    assert_eq!(conv.lines().last().unwrap().split(',').nth(1), Some("0"));
}

#[test]
fn sweep_reports_every_cost() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "sweep.json",
        &format!(r#"{{ "command": "sweep", {}, "sweep": {{ "c_values": [0.0, 0.5, 5.0] }} }}"#, small_scenario("")),
    );
    let out_dir = tmp.path().join("out");
    let out = fpimpulse("sweep", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let obj = fs::read_to_string(out_dir.join("objectives.csv")).unwrap();
    let rows: Vec<&str> = obj.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    // A cost far above any harvest value leaves nothing to transport.
    let intervals = fs::read_to_string(out_dir.join("intervals.csv")).unwrap();
    assert!(intervals.lines().skip(1).all(|l| !l.starts_with("5,")));
    assert!(out_dir.join("intervals.svg").is_file());
}

#[test]
fn calibrate_writes_fit_tables() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "hist.csv",
        "bin_lo,bin_hi,count\n0,10,40\n10,20,120\n20,30,30\n30,40,10\n",
    );
    write(tmp.path(), "hist_days.csv", "day,weight_g\n10,9.5\n20,13.8\n30,18.7\n");
    let cfg = write(
        tmp.path(),
        "cal.json",
        r#"{
  "command": "calibrate",
  "mc": { "dt": 0.05, "n_paths": 2000, "search_paths": 500 },
  "calibrate": {
    "histogram": "hist.csv",
    "historical": "hist_days.csv",
    "obs_day": 30,
    "search_box": {
      "r": [0.04, 0.06], "d_relax": [0.019, 0.019], "sigma": [0.051, 0.051],
      "z0": [0.02, 0.02], "x0": 6.0, "points": 3, "refinements": 1
    },
    "r_grid": [0.045, 0.05, 0.055]
  }
}"#,
    );
    let out_dir = tmp.path().join("out");
    let out = fpimpulse("calibrate", &cfg, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let err = fs::read_to_string(out_dir.join("err_table.csv")).unwrap();
    assert!(err.starts_with("r,err,selected\n"));
    assert_eq!(err.lines().filter(|l| l.ends_with(",1")).count(), 1);
    let cal: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("calibration.json")).unwrap()).unwrap();
    assert!(cal.is_object());
    for name in ["candidates.csv", "histogram.svg", "fit_curve.svg", "err_table.svg"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
}
