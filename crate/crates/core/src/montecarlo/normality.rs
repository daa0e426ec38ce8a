use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::rng::{substream, Gaussian, StreamPurpose};
use crate::error::{Error, Result};

pub const MIN_NORMALITY_SAMPLES: usize = 50;

/// Number of simulated samples behind the Lilliefors critical value.
pub const LILLIEFORS_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityTest {
    pub statistic: f64,
    /// Simulated 95% quantile of the statistic under normality.
    pub critical_value: f64,
    pub p_value: f64,
    pub reject_at_5pct: bool,
}

/// Kolmogorov–Smirnov distance between the sample and the normal law with
/// the sample mean and standard deviation.
pub fn ks_statistic(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { got: n, min: 2 });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("samples must be finite".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sd > 1e3 * f64::EPSILON * scale) {
        return Err(Error::DegenerateSample);
    }
    let mut z: Vec<f64> = samples.iter().map(|v| (v - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let nf = n as f64;
    let d = z.iter().enumerate().fold(0.0f64, |d, (i, &zi)| {
        let f = normal.cdf(zi);
        d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf)
    });
    Ok(d)
}

/// Lilliefors test: the KS statistic with estimated mean and variance,
/// calibrated against [`LILLIEFORS_RESAMPLES`] standard normal samples of
/// the same size drawn from the stream keyed by `seed`.
pub fn ks_normality(samples: &[f64], seed: u64) -> Result<NormalityTest> {
    let n = samples.len();
    if n < MIN_NORMALITY_SAMPLES {
        return Err(Error::InsufficientSamples { got: n, min: MIN_NORMALITY_SAMPLES });
    }
    let statistic = ks_statistic(samples)?;
    let mut null = simulate_null(n, seed);
    null.sort_by(f64::total_cmp);
    let m = null.len();
    let critical_value = null[(0.95 * m as f64).ceil() as usize - 1];
    let exceed = null.iter().filter(|&&d| d >= statistic).count();
    Ok(NormalityTest {
        statistic,
        critical_value,
        p_value: (exceed + 1) as f64 / (m + 1) as f64,
        reject_at_5pct: statistic > critical_value,
    })
}

fn simulate_null(n: usize, seed: u64) -> Vec<f64> {
    let mut g = Gaussian::new(substream(seed, n as u64, StreamPurpose::Normality));
    let mut buf = vec![0.0; n];
    (0..LILLIEFORS_RESAMPLES)
        .map(|_| {
            g.fill(&mut buf);
            ks_statistic(&buf).expect("normal draws are not degenerate")
        })
        .collect()
}
