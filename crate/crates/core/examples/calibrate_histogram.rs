//! Fits (r, D, sigma) to a weight histogram by refined grid search.
//!
//! The histogram here is synthetic: counts are drawn from the model at
//! known parameters, then the search is asked to find them again.

use fpimpulse::calibrate::{identify_from_histogram, HistogramData, McConfig, SearchBox};
use fpimpulse::growth::{simulate_paths, GrowthParams, ModelKind};

fn main() -> fpimpulse::Result<()> {
    let truth = GrowthParams::identified_2019();
    let obs_day = 90.0;
    let sample = simulate_paths(&truth, ModelKind::Proposed, &[obs_day], 0.01, 2000, 7)?;
    let weights: Vec<f64> = sample.w_samples(0).iter().map(|w| w.exp()).collect();

    let edges: Vec<f64> = (0..=12).map(|k| 10.0 * k as f64).collect();
    let mut counts = vec![0u64; edges.len() - 1];
    for &x in &weights {
        let k = ((x / 10.0) as usize).min(counts.len() - 1);
        counts[k] += 1;
    }
    let hist = HistogramData::new(edges, counts, Some(&weights))?;
    let o = hist.observed_stats;
    println!("observed: Ave {:.2} Std {:.2} Skw {:.3}", o.average, o.std_dev, o.skewness);

    let search = SearchBox {
        r: [0.045, 0.057],
        d_relax: [0.013, 0.025],
        sigma: [0.051, 0.051],
        z0: [truth.z0, truth.z0],
        x0: truth.x0,
        points: 3,
        refinements: 1,
    };
    let mc = McConfig {
        dt: 0.01,
        search_paths: 5000,
        final_paths: 50_000,
        seed: 11,
        kind: ModelKind::Proposed,
    };
    let fit = identify_from_histogram(&hist, &search, &mc, obs_day)?;
    let b = &fit.best.params;
    println!("evaluated {} candidates", fit.evaluated.len());
    println!("best: r = {:.4}, D = {:.4}, sigma = {:.4}, P = {:.4}", b.r, b.d_relax, b.sigma, fit.best.p);
    let s = fit.final_stats;
    println!(
        "rerun with {} paths: Ave {:.2} Std {:.2} Skw {:.3}, P = {:.4}",
        mc.final_paths, s.average, s.std_dev, s.skewness, fit.final_p
    );
    Ok(())
}
