//! Self-contained SVG 1.1 charts rendered from artifact CSVs.
//!
//! Output depends only on the input text, so identical artifacts give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Conditional density over `(t, w)` from rows `t,w,value`.
    Heatmap,
    /// Columns of a CSV against its first column.
    Curves,
    /// Observed and model bars from rows `bin_lo,bin_hi,observed,model`.
    Histogram,
    /// Active intervals from rows `c,j,tau,w_lo,w_hi`.
    Intervals,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    /// Vertical markers (heatmap).
    pub impulse_times: Vec<f64>,
    /// Restricts the plotted columns (curves).
    pub columns: Option<Vec<String>>,
}

/// Renders one chart from CSV text.
pub fn render_plot(kind: PlotKind, csv_text: &str, opts: &PlotOptions) -> Result<String> {
    let table = Table::parse(csv_text)?;
    match kind {
        PlotKind::Heatmap => heatmap(&table, opts),
        PlotKind::Curves => curves(&table, opts),
        PlotKind::Histogram => histogram(&table, opts),
        PlotKind::Intervals => intervals(&table, opts),
    }
}

/// Parsed numeric CSV; empty cells become `None`.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    fn parse(text: &str) -> Result<Table> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    if s.is_empty() {
                        Ok(None)
                    } else {
                        s.trim().parse::<f64>().map(Some).map_err(|_| {
                            Error::Io(std::io::Error::new(
                                std::io::ErrorKind::InvalidData,
                                format!("non-numeric CSV cell `{s}`"),
                            ))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("CSV lacks column `{name}`"),
            ))
        })
    }

    fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.rows[row].get(col).copied().flatten()
    }
}

fn num(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Linear map from data ranges to the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Frame {
        let widen = |(a, b): (f64, f64)| {
            if !(a.is_finite() && b.is_finite()) {
                (0.0, 1.0)
            } else if b > a {
                (a, b)
            } else {
                let d = if a == 0.0 { 1.0 } else { 0.05 * a.abs() };
                (a - d, b + d)
            }
        };
        Frame {
            x: widen(x),
            y: widen(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open_svg(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>
<text x="{cx}" y="22" text-anchor="middle" font-size="15">{t}</text>"#,
        w = WIDTH,
        h = HEIGHT,
        cx = WIDTH / 2.0,
        t = escape(title)
    );
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let fx = f.x.0 + (f.x.1 - f.x.0) * k as f64 / 5.0;
        let px = num(f.px(fx));
        let _ = writeln!(
            s,
            r#"<line x1="{px}" y1="{y0}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 19.0,
            tick_label(fx)
        );
        let fy = f.y.0 + (f.y.1 - f.y.0) * k as f64 / 5.0;
        let py = num(f.py(fy));
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py}" x2="{x0}" y2="{py}" stroke="black"/><text x="{}" y="{py}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            tick_label(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        num((x0 + x1) / 2.0),
        HEIGHT - 12.0,
        escape(xlabel)
    );
    let cy = num((y0 + y1) / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{cy}" text-anchor="middle" transform="rotate(-90 16 {cy})">{}</text>"#,
        escape(ylabel)
    );
}

fn legend(s: &mut String, names: &[String]) {
    for (k, name) in names.iter().enumerate() {
        let y = TOP + 8.0 + 16.0 * k as f64;
        let x = WIDTH - RIGHT - 150.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 9.0,
            PALETTE[k % PALETTE.len()],
            x + 18.0,
            y,
            escape(name)
        );
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    })
}

/// Five-stop blue-to-yellow ramp on `[0, 1]`.
fn colour(v: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let v = v.clamp(0.0, 1.0) * 4.0;
    let k = (v.floor() as usize).min(3);
    let t = v - k as f64;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let c = |p: f64, q: f64| (p + (q - p) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(a.0, b.0), c(a.1, b.1), c(a.2, b.2))
}

fn heatmap(t: &Table, opts: &PlotOptions) -> Result<String> {
    let (ct, cw, cv) = (t.col("t")?, t.col("w")?, t.col("value")?);
    let mut cells: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut ts = Vec::new();
    let mut ws = Vec::new();
    for r in 0..t.rows.len() {
        let (Some(tv), Some(wv), Some(v)) = (t.get(r, ct), t.get(r, cw), t.get(r, cv)) else {
            continue;
        };
        ts.push(tv);
        ws.push(wv);
        cells.insert((tv.to_bits(), wv.to_bits()), v);
    }
    let mut s = open_svg(&opts.title);
    let sort = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.dedup();
    };
    sort(&mut ts);
    sort(&mut ws);
    let f = Frame::new(
        range(ts.iter().copied()),
        range(ws.iter().copied()),
    );
    let vmax = cells.values().fold(0.0f64, |m, &v| m.max(v));
    let edges = |v: &[f64], k: usize| -> (f64, f64) {
        let lo = if k == 0 { v[0] } else { 0.5 * (v[k - 1] + v[k]) };
        let hi = if k + 1 == v.len() { v[k] } else { 0.5 * (v[k] + v[k + 1]) };
        (lo, hi)
    };
    for (a, &tv) in ts.iter().enumerate() {
        let (t0, t1) = edges(&ts, a);
        for (b, &wv) in ws.iter().enumerate() {
            let Some(&v) = cells.get(&(tv.to_bits(), wv.to_bits())) else {
                continue;
            };
            let (w0, w1) = edges(&ws, b);
            let x = f.px(t0);
            let y = f.py(w1);
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                num(x),
                num(y),
                num((f.px(t1) - x).max(0.5)),
                num((f.py(w0) - y).max(0.5)),
                colour(if vmax > 0.0 { v / vmax } else { 0.0 })
            );
        }
    }
    for &tau in &opts.impulse_times {
        let x = num(f.px(tau));
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{TOP}" x2="{x}" y2="{}" stroke="white" stroke-dasharray="4 3"/>"#,
            HEIGHT - BOTTOM
        );
    }
    axes(&mut s, &f, "t (day)", "w = ln x");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">max {}</text>"#,
        WIDTH - RIGHT,
        TOP - 6.0,
        tick_label(vmax)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn curves(t: &Table, opts: &PlotOptions) -> Result<String> {
    if t.header.len() < 2 {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            "curve CSV needs an x column and at least one series",
        )));
    }
    let cols: Vec<usize> = match &opts.columns {
        Some(names) => names.iter().map(|n| t.col(n)).collect::<Result<_>>()?,
        None => (1..t.header.len()).collect(),
    };
    let series: Vec<Vec<(f64, f64)>> = cols
        .iter()
        .map(|&c| {
            (0..t.rows.len())
                .filter_map(|r| Some((t.get(r, 0)?, t.get(r, c)?)))
                .collect()
        })
        .collect();
    let all = series.iter().flatten();
    let f = Frame::new(
        range(all.clone().map(|p| p.0)),
        range(all.map(|p| p.1)),
    );
    let mut s = open_svg(&opts.title);
    axes(&mut s, &f, &t.header[0], "");
    for (k, pts) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        // Columns filled in fewer than half the rows are scattered observations.
        let sparse = 2 * pts.len() <= t.rows.len();
        if pts.len() > 1 && !sparse {
            let d: Vec<String> = pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    format!("{}{} {}", if i == 0 { "M" } else { "L" }, num(f.px(x)), num(f.py(y)))
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                d.join(" ")
            );
        }
        if pts.len() <= 40 || sparse {
            for &(x, y) in pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{}" cy="{}" r="3" fill="{colour}"/>"#,
                    num(f.px(x)),
                    num(f.py(y))
                );
            }
        }
    }
    let names: Vec<String> = cols.iter().map(|&c| t.header[c].clone()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    Ok(s)
}

fn histogram(t: &Table, opts: &PlotOptions) -> Result<String> {
    let (clo, chi) = (t.col("bin_lo")?, t.col("bin_hi")?);
    let (cobs, cmod) = (t.col("observed")?, t.col("model")?);
    let mut bins = Vec::new();
    let mut last_width = 10.0;
    for r in 0..t.rows.len() {
        let Some(lo) = t.get(r, clo) else { continue };
        let hi = t.get(r, chi).unwrap_or(lo + last_width);
        last_width = hi - lo;
        bins.push((lo, hi, t.get(r, cobs).unwrap_or(0.0), t.get(r, cmod).unwrap_or(0.0)));
    }
    let f = Frame::new(
        range(bins.iter().flat_map(|b| [b.0, b.1])),
        (0.0, bins.iter().fold(0.0f64, |m, b| m.max(b.2).max(b.3))),
    );
    let mut s = open_svg(&opts.title);
    for &(lo, hi, obs, model) in &bins {
        let mid = 0.5 * (lo + hi);
        for (k, (a, b, v)) in [(lo, mid, obs), (mid, hi, model)].into_iter().enumerate() {
            let y = f.py(v);
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                num(f.px(a)),
                num(y),
                num(f.px(b) - f.px(a)),
                num(f.py(0.0) - y),
                PALETTE[k]
            );
        }
    }
    axes(&mut s, &f, "body weight (g)", "relative frequency");
    legend(&mut s, &["observed".into(), "model".into()]);
    s.push_str("</svg>\n");
    Ok(s)
}

fn intervals(t: &Table, opts: &PlotOptions) -> Result<String> {
    let (cc, cj) = (t.col("c")?, t.col("j")?);
    let (clo, chi) = (t.col("w_lo")?, t.col("w_hi")?);
    let rows: Vec<(f64, usize, f64, f64)> = (0..t.rows.len())
        .filter_map(|r| {
            Some((
                t.get(r, cc)?,
                t.get(r, cj)? as usize,
                t.get(r, clo)?,
                t.get(r, chi)?,
            ))
        })
        .collect();
    let n_j = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let mut cs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    let spacing = cs
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let spacing = if spacing.is_finite() { spacing } else { 0.1 };
    let (xlo, xhi) = if cs.is_empty() {
        (0.0, 1.0)
    } else {
        (cs[0] - 0.5 * spacing, cs[cs.len() - 1] + 0.5 * spacing)
    };
    let (ylo, yhi) = range(rows.iter().flat_map(|r| [r.2, r.3]));
    let f = Frame::new(
        (xlo, xhi),
        if rows.is_empty() { (0.0, 1.0) } else { (ylo, yhi) },
    );
    let mut s = open_svg(&opts.title);
    let slot = 0.8 * spacing / n_j.max(1) as f64;
    for &(c, j, lo, hi) in &rows {
        let x0 = c - 0.4 * spacing + slot * (j.max(1) - 1) as f64;
        let y = f.py(hi);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            num(f.px(x0)),
            num(y),
            num((f.px(x0 + slot) - f.px(x0)).max(1.0)),
            num((f.py(lo) - y).max(1.0)),
            PALETTE[(j.max(1) - 1) % PALETTE.len()]
        );
    }
    axes(&mut s, &f, "transport cost c", "w = ln x");
    let names: Vec<String> = (1..=n_j).map(|j| format!("j = {j}")).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    Ok(s)
}
