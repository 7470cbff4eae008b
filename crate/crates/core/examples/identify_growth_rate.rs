//! Growth-rate identification from a mean-weight time series.
//!
//! Observations come from the model's own mean curve at r = 0.048, so the
//! table should select that value.

use fpimpulse::calibrate::{identify_growth_rate, synthetic_mean_data, McConfig};
use fpimpulse::growth::{GrowthParams, ModelKind};

fn main() -> fpimpulse::Result<()> {
    let base = GrowthParams::identified_2019();
    let mc = McConfig {
        dt: 0.01,
        search_paths: 4000,
        final_paths: 4000,
        seed: 3,
        kind: ModelKind::Proposed,
    };
    let days: Vec<f64> = (1..=36).map(|k| 5.0 * k as f64).collect();
    let data = synthetic_mean_data(&GrowthParams { r: 0.048, ..base }, &days, &mc)?;
    let grid: Vec<f64> = (41..=51).map(|k| k as f64 / 1000.0).collect();
    let fit = identify_growth_rate(&data, &base, &grid, &mc)?;
    println!("{:>7} {:>12}", "r", "Err");
    for row in &fit.table {
        println!("{:>7.3} {:>12.4}{}", row.r, row.err, if row.selected { "  <-" } else { "" });
    }
    println!("r* = {}", fit.r_star);
    Ok(())
}
