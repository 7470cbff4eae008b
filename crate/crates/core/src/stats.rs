//! Compensated summation and body-weight summary statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neumaier's improved Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<NeumaierSum>().value()
}

/// Average, standard deviation and skewness of body weights.
///
/// Population (biased) conventions throughout: `std = sqrt(m2)`,
/// `skew = m3 / m2^(3/2)` with central moments `mk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub average: f64,
    pub std_dev: f64,
    pub skewness: f64,
}

impl SampleStats {
    pub fn new(average: f64, std_dev: f64, skewness: f64) -> Self {
        SampleStats {
            average,
            std_dev,
            skewness,
        }
    }

    /// Statistics of a sample. Errors when the spread is zero.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let (average, std_dev) = mean_std(samples)?;
        if std_dev == 0.0 {
            return Err(Error::SkewnessUndefined);
        }
        let n = samples.len() as f64;
        let m3 = samples
            .iter()
            .map(|&x| (x - average).powi(3))
            .collect::<NeumaierSum>()
            .value()
            / n;
        Ok(SampleStats {
            average,
            std_dev,
            skewness: m3 / std_dev.powi(3),
        })
    }

    /// Statistics of a weighted sample (weights need not be normalized).
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.len() != weights.len() || values.is_empty() {
            return Err(Error::Input("weighted sample shape mismatch".into()));
        }
        let total: f64 = compensated_sum(weights);
        if total <= 0.0 {
            return Err(Error::Input("weighted sample has zero total weight".into()));
        }
        let moment = |f: &dyn Fn(f64) -> f64| {
            values
                .iter()
                .zip(weights)
                .map(|(&x, &w)| w * f(x))
                .collect::<NeumaierSum>()
                .value()
                / total
        };
        let average = moment(&|x| x);
        let m2 = moment(&|x| (x - average).powi(2));
        let m3 = moment(&|x| (x - average).powi(3));
        if m2 <= 0.0 {
            return Err(Error::SkewnessUndefined);
        }
        Ok(SampleStats {
            average,
            std_dev: m2.sqrt(),
            skewness: m3 / m2.powf(1.5),
        })
    }
}

/// Sample mean and population standard deviation.
pub fn mean_std(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Input("empty sample".into()));
    }
    let n = samples.len() as f64;
    let mean = compensated_sum(samples) / n;
    let m2 = samples
        .iter()
        .map(|&x| (x - mean).powi(2))
        .collect::<NeumaierSum>()
        .value()
        / n;
    Ok((mean, m2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn degenerate_sample_has_no_skewness() {
        let s = vec![10.0; 5];
        assert_eq!(mean_std(&s).unwrap(), (10.0, 0.0));
        assert!(matches!(
            SampleStats::from_samples(&s),
            Err(Error::SkewnessUndefined)
        ));
    }

    #[test]
    fn symmetric_sample() {
        let s = SampleStats::from_samples(&[1.0, 2.0, 3.0]).unwrap();
        assert_relative_eq!(s.average, 2.0);
        assert_relative_eq!(s.std_dev, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert!(s.skewness.abs() < 1e-15);
    }

    #[test]
    fn right_skewed_sample() {
        // central moments of {0, 0, 3}: m2 = 2, m3 = 2
        let s = SampleStats::from_samples(&[0.0, 0.0, 3.0]).unwrap();
        assert_relative_eq!(s.skewness, 2.0 / 2f64.powf(1.5), epsilon = 1e-14);
    }

    #[test]
    fn weighted_matches_repeated() {
        let a = SampleStats::from_weighted(&[1.0, 4.0], &[2.0, 1.0]).unwrap();
        let b = SampleStats::from_samples(&[1.0, 1.0, 4.0]).unwrap();
        assert_relative_eq!(a.average, b.average, epsilon = 1e-14);
        assert_relative_eq!(a.std_dev, b.std_dev, epsilon = 1e-14);
        assert_relative_eq!(a.skewness, b.skewness, epsilon = 1e-14);
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let s = compensated_sum(&[1.0, 1e100, 1.0, -1e100]);
        assert_eq!(s, 2.0);
    }

    proptest! {
        #[test]
        fn shift_invariance(xs in prop::collection::vec(-50.0f64..50.0, 3..40), c in -100.0f64..100.0) {
            let (m, s) = mean_std(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let (m2, s2) = mean_std(&shifted).unwrap();
            prop_assert!((m2 - m - c).abs() < 1e-9);
            prop_assert!((s2 - s).abs() < 1e-9);
        }
    }
}
