//! Binomial and normal confidence intervals for Monte Carlo estimates.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{invalid, Result};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// A proportion estimated from Bernoulli trials, with an exact interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        let (ci_low, ci_high) = clopper_pearson(successes, trials, DEFAULT_LEVEL)?;
        Ok(Self {
            successes,
            trials,
            estimate: successes as f64 / trials as f64,
            ci_low,
            ci_high,
        })
    }
}

/// Clopper-Pearson interval for `successes` out of `trials` at `level`.
pub fn clopper_pearson(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return invalid("interval needs at least one trial");
    }
    if successes > trials {
        return invalid("more successes than trials");
    }
    if !(level > 0.0 && level < 1.0) {
        return invalid("confidence level must lie in (0, 1)");
    }
    let alpha = 1.0 - level;
    let (x, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0)
            .expect("positive shape")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x)
            .expect("positive shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

/// Sample mean with a normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
}

impl MeanEstimate {
    pub fn from_samples(values: &[f64], level: f64) -> Result<Self> {
        if values.is_empty() {
            return invalid("mean of an empty sample");
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
        let half = z * (var / n).sqrt();
        Ok(Self {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            samples: values.len() as u64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_successes_has_closed_form_upper_bound() {
        let (lo, hi) = clopper_pearson(0, 100, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert_relative_eq!(hi, 1.0 - 0.025f64.powf(0.01), epsilon = 1e-9);
    }

    #[test]
    fn interval_brackets_estimate() {
        for (x, n) in [(1, 10), (5, 10), (9, 10), (37, 1000)] {
            let p = Proportion::new(x, n).unwrap();
            assert!(p.ci_low <= p.estimate && p.estimate <= p.ci_high);
        }
        assert!(clopper_pearson(3, 2, 0.95).is_err());
        assert!(clopper_pearson(0, 0, 0.95).is_err());
    }

    #[test]
    fn mean_interval_is_symmetric() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0.95).unwrap();
        assert_relative_eq!(m.mean, 2.5);
        assert_relative_eq!(m.mean - m.ci_low, m.ci_high - m.mean, epsilon = 1e-12);
    }
}
