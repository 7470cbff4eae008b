//! Calibration measures and parameter identification for the growth model.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::growth::{mean_curve, simulate_weight_stats, GrowthParams, ModelKind};
use crate::stats::{NeumaierSum, SampleStats};

/// Binned body weights observed on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    /// `n_bins + 1` increasing edges (g); the last may be `f64::INFINITY`.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub observed_stats: SampleStats,
}

/// Width added to the lower edge of an unbounded bin to get its representative weight.
const OPEN_BIN_OFFSET: f64 = 5.0;

impl HistogramData {
    /// Builds a histogram. Statistics come from `raw` weights when given,
    /// otherwise from bin midpoints.
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>, raw: Option<&[f64]>) -> Result<Self> {
        if bin_edges.len() < 2 || counts.len() + 1 != bin_edges.len() {
            return Err(Error::Input(format!(
                "{} edges do not match {} bins",
                bin_edges.len(),
                counts.len()
            )));
        }
        if bin_edges[0].is_nan() || bin_edges.windows(2).any(|e| !(e[1] > e[0])) {
            return Err(Error::Input("bin edges must be strictly increasing".into()));
        }
        if bin_edges[..bin_edges.len() - 1].iter().any(|e| !e.is_finite()) {
            return Err(Error::Input("only the last bin edge may be unbounded".into()));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::Input("histogram has zero total count".into()));
        }
        let observed_stats = match raw {
            Some(w) => SampleStats::from_samples(w)?,
            None => {
                let mids = midpoints(&bin_edges);
                let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                SampleStats::from_weighted(&mids, &weights)?
            }
        };
        Ok(HistogramData {
            bin_edges,
            counts,
            observed_stats,
        })
    }

    /// Reads rows `bin_lo,bin_hi,count`; an empty `bin_hi` marks the open last bin.
    pub fn from_reader<R: Read>(reader: R, raw: Option<&[f64]>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            bin_lo: f64,
            bin_hi: Option<f64>,
            count: u64,
        }
        let mut edges = Vec::new();
        let mut counts = Vec::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for (k, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            match edges.last() {
                None => edges.push(row.bin_lo),
                Some(&hi) if hi == row.bin_lo => {}
                Some(&hi) => {
                    return Err(Error::Input(format!(
                        "row {}: bin_lo {} does not continue previous bin_hi {hi}",
                        k + 1,
                        row.bin_lo
                    )))
                }
            }
            edges.push(row.bin_hi.unwrap_or(f64::INFINITY));
            counts.push(row.count);
        }
        Self::new(edges, counts, raw)
    }

    pub fn from_path(path: &Path, raw: Option<&[f64]>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, raw)
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Observed relative frequency per bin.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Relative frequency of `samples` over the same bins. Samples below the
    /// first edge are dropped.
    pub fn bin_fractions(&self, samples: &[f64]) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_bins()];
        for &x in samples {
            let k = self.bin_edges.partition_point(|&e| e <= x);
            if k >= 1 && k <= self.n_bins() {
                counts[k - 1] += 1;
            }
        }
        let n = samples.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

fn midpoints(edges: &[f64]) -> Vec<f64> {
    edges
        .windows(2)
        .map(|e| {
            if e[1].is_finite() {
                0.5 * (e[0] + e[1])
            } else {
                e[0] + OPEN_BIN_OFFSET
            }
        })
        .collect()
}

/// Dated individual body weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalData {
    /// `(day, weight_g)` pairs.
    pub observations: Vec<(f64, f64)>,
}

impl HistoricalData {
    pub fn new(observations: Vec<(f64, f64)>) -> Result<Self> {
        for (k, &(t, x)) in observations.iter().enumerate() {
            if !(t > 0.0 && t <= 200.0) {
                return Err(Error::Input(format!("observation {k}: day {t} outside (0, 200]")));
            }
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Input(format!("observation {k}: weight {x} must be > 0")));
            }
        }
        Ok(HistoricalData { observations })
    }

    /// Reads rows `day,weight_g`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            day: f64,
            weight_g: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let obs = rdr
            .deserialize::<Row>()
            .map(|r| r.map(|r| (r.day, r.weight_g)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(obs)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Distinct observation days in increasing order.
    pub fn days(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.observations.iter().map(|o| o.0).collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

/// Sum of the relative errors of average, standard deviation and skewness.
pub fn perf_measure_p(obs: &SampleStats, model: &SampleStats) -> Result<f64> {
    let rel = |o: f64, m: f64, name: &'static str| {
        if o == 0.0 {
            Err(Error::ZeroObserved(name))
        } else {
            Ok(((m - o) / o).abs())
        }
    };
    Ok(rel(obs.average, model.average, "average")?
        + rel(obs.std_dev, model.std_dev, "std_dev")?
        + rel(obs.skewness, model.skewness, "skewness")?)
}

/// Mean squared deviation of the observations from a mean-weight curve.
pub fn err_measure(data: &HistoricalData, curve: impl Fn(f64) -> f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("no historical observations".into()));
    }
    let s: NeumaierSum = data
        .observations
        .iter()
        .map(|&(t, x)| (curve(t) - x).powi(2))
        .collect();
    Ok(s.value() / data.len() as f64)
}

/// Monte-Carlo settings shared by the identification drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub dt: f64,
    /// Paths per candidate during the search.
    pub search_paths: usize,
    /// Paths for the final report of the selected candidate.
    pub final_paths: usize,
    pub seed: u64,
    pub kind: ModelKind,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            dt: 0.004,
            search_paths: 100_000,
            final_paths: 1_000_000,
            seed: 2019,
            kind: ModelKind::Proposed,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be > 0"));
        }
        if self.search_paths < 2 || self.final_paths < 2 {
            return Err(Error::param("paths", "at least 2 paths are needed for statistics"));
        }
        Ok(())
    }
}

/// Closed ranges of the searched parameters. `x0` is held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub r: [f64; 2],
    pub d_relax: [f64; 2],
    pub sigma: [f64; 2],
    pub z0: [f64; 2],
    pub x0: f64,
    /// Grid points per non-degenerate axis.
    pub points: usize,
    /// Refinement passes, each on a grid 5 times finer centred on the incumbent.
    pub refinements: usize,
}

impl SearchBox {
    /// The box collapsed to a single parameter set.
    pub fn point(p: &GrowthParams) -> Self {
        SearchBox {
            r: [p.r; 2],
            d_relax: [p.d_relax; 2],
            sigma: [p.sigma; 2],
            z0: [p.z0; 2],
            x0: p.x0,
            points: 1,
            refinements: 0,
        }
    }

    fn axes(&self) -> [[f64; 2]; 4] {
        [self.r, self.d_relax, self.sigma, self.z0]
    }

    fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in ["r", "d_relax", "sigma", "z0"].iter().zip(self.axes()) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::param(
                    &format!("search_box.{name}"),
                    format!("invalid range [{lo}, {hi}]"),
                ));
            }
        }
        if self.points == 0 {
            return Err(Error::param("search_box.points", "must be >= 1"));
        }
        Ok(())
    }
}

fn axis_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if lo == hi || n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|k| (lo * (m - k as f64) + hi * k as f64) / m)
        .collect()
}

/// One evaluated candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub params: GrowthParams,
    pub p: f64,
    pub stats: SampleStats,
}

/// Outcome of a histogram identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramFit {
    /// Best candidate under the search-size ensemble.
    pub best: Candidate,
    /// The same parameters re-evaluated with the final-size ensemble.
    pub final_stats: SampleStats,
    pub final_p: f64,
    /// Every feasible candidate in evaluation order.
    pub evaluated: Vec<Candidate>,
}

/// Model weight statistics at `obs_day`.
pub fn model_stats(
    params: &GrowthParams,
    obs_day: f64,
    mc: &McConfig,
    n_paths: usize,
) -> Result<SampleStats> {
    let (avg, std, skew) =
        simulate_weight_stats(params, mc.kind, &[obs_day], mc.dt, n_paths, mc.seed)?[0];
    let skew = skew.ok_or(Error::SkewnessUndefined)?;
    Ok(SampleStats::new(avg, std, skew))
}

fn evaluate_grid(
    grids: &[Vec<f64>; 4],
    x0: f64,
    obs: &SampleStats,
    obs_day: f64,
    mc: &McConfig,
) -> Result<Vec<Candidate>> {
    let mut params = Vec::new();
    for &r in &grids[0] {
        for &d in &grids[1] {
            for &s in &grids[2] {
                for &z in &grids[3] {
                    if let Ok(p) = GrowthParams::new(r, d, s, x0, z) {
                        params.push(p);
                    }
                }
            }
        }
    }
    params
        .par_iter()
        .map(|p| {
            let stats = model_stats(p, obs_day, mc, mc.search_paths)?;
            Ok(Candidate {
                params: *p,
                p: perf_measure_p(obs, &stats)?,
                stats,
            })
        })
        .collect()
}

/// Grid search with refinement minimizing the performance measure.
pub fn identify_from_histogram(
    obs: &HistogramData,
    search_box: &SearchBox,
    mc: &McConfig,
    obs_day: f64,
) -> Result<HistogramFit> {
    search_box.validate()?;
    mc.validate()?;
    if !(obs_day > 0.0) {
        return Err(Error::param("obs_day", "must be > 0"));
    }
    let target = &obs.observed_stats;
    let axes = search_box.axes();
    let half = (search_box.points - 1) as f64 / 2.0;
    let mut steps: Vec<f64> = axes
        .iter()
        .map(|[lo, hi]| if half > 0.0 { (hi - lo) / (2.0 * half) } else { 0.0 })
        .collect();
    let mut grids: [Vec<f64>; 4] = axes.map(|[lo, hi]| axis_grid(lo, hi, search_box.points));
    let mut evaluated: Vec<Candidate> = Vec::new();
    let mut best: Option<Candidate> = None;
    for pass in 0..=search_box.refinements {
        let batch = evaluate_grid(&grids, search_box.x0, target, obs_day, mc)?;
        for c in &batch {
            if best.is_none_or(|b| c.p < b.p) {
                best = Some(*c);
            }
        }
        evaluated.extend(batch);
        let Some(inc) = best else {
            return Err(Error::Input("search box contains no admissible parameter set".into()));
        };
        if pass == search_box.refinements {
            break;
        }
        let centre = [inc.params.r, inc.params.d_relax, inc.params.sigma, inc.params.z0];
        for k in 0..4 {
            steps[k] /= 5.0;
            let [lo, hi] = axes[k];
            let mut g: Vec<f64> = (0..search_box.points)
                .map(|i| (centre[k] + (i as f64 - half) * steps[k]).clamp(lo, hi))
                .collect();
            g.dedup();
            grids[k] = g;
        }
    }
    let best = best.expect("at least one pass ran");
    let final_stats = model_stats(&best.params, obs_day, mc, mc.final_paths)?;
    Ok(HistogramFit {
        best,
        final_p: perf_measure_p(target, &final_stats)?,
        final_stats,
        evaluated,
    })
}

/// One row of the growth-rate error table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrRow {
    pub r: f64,
    pub err: f64,
    pub selected: bool,
}

/// Outcome of a growth-rate identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub r_star: f64,
    pub table: Vec<ErrRow>,
}

impl RateFit {
    /// Writes the table as CSV with header `r,err,selected`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "err", "selected"])?;
        for row in &self.table {
            w.write_record([
                format!("{}", row.r),
                format!("{:.6}", row.err),
                (row.selected as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean weight curve at `days` as a lookup function.
fn curve_lookup(days: Vec<f64>, means: Vec<f64>) -> impl Fn(f64) -> f64 {
    move |t| {
        let k = days.partition_point(|&d| d < t);
        means[k.min(means.len() - 1)]
    }
}

/// Picks the growth rate on `r_grid` whose Monte-Carlo mean curve best fits `data`.
pub fn identify_growth_rate(
    data: &HistoricalData,
    base: &GrowthParams,
    r_grid: &[f64],
    mc: &McConfig,
) -> Result<RateFit> {
    if r_grid.is_empty() {
        return Err(Error::Input("empty growth-rate grid".into()));
    }
    if data.is_empty() {
        return Err(Error::Input("no historical observations".into()));
    }
    mc.validate()?;
    let candidates = r_grid
        .iter()
        .map(|&r| GrowthParams { r, ..*base }.validate().map(|_| GrowthParams { r, ..*base }))
        .collect::<Result<Vec<_>>>()?;
    let days = data.days();
    let errs = candidates
        .par_iter()
        .map(|p| {
            let means = mean_curve(p, mc.kind, &days, mc.dt, mc.search_paths, mc.seed)?;
            err_measure(data, curve_lookup(days.clone(), means))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut k_best = 0;
    for (k, e) in errs.iter().enumerate() {
        if *e < errs[k_best] {
            k_best = k;
        }
    }
    let table = r_grid
        .iter()
        .zip(&errs)
        .enumerate()
        .map(|(k, (&r, &err))| ErrRow {
            r,
            err,
            selected: k == k_best,
        })
        .collect();
    Ok(RateFit {
        r_star: r_grid[k_best],
        table,
    })
}

/// Synthetic observations taken from the Monte-Carlo mean curve itself.
pub fn synthetic_mean_data(
    params: &GrowthParams,
    days: &[f64],
    mc: &McConfig,
) -> Result<HistoricalData> {
    let mut sorted = days.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let means = mean_curve(params, mc.kind, &sorted, mc.dt, mc.search_paths, mc.seed)?;
    let lookup = curve_lookup(sorted, means);
    HistoricalData::new(days.iter().map(|&t| (t, lookup(t))).collect())
}
