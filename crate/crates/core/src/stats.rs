//! D'Agostino–Pearson omnibus normality test and histogram summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub n: usize,
    /// Sample skewness `g₁ = m₃ / m₂^{3/2}`.
    pub skewness: f64,
    /// Excess kurtosis `g₂ = m₄ / m₂² − 3`.
    pub kurtosis: f64,
    /// Normalized skewness statistic.
    pub z_skew: f64,
    /// Normalized kurtosis statistic.
    pub z_kurt: f64,
    pub k2: f64,
    pub p_value: f64,
}

/// Central moments `(mean, m₂, m₃, m₄)` with divisor `n`.
fn moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (mean, m2 / n, m3 / n, m4 / n)
}

/// D'Agostino's transform of the sample skewness to an approximate N(0, 1).
fn skew_z(g1: f64, n: f64) -> f64 {
    let y = g1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    delta * (y / alpha).asinh()
}

/// Anscombe–Glynn transform of the sample kurtosis `b₂ = m₄/m₂²`.
fn kurt_z(b2: f64, n: f64) -> f64 {
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

/// `K² = Z₁² + Z₂²` with the χ²₂ survival `p = exp(−K²/2)`. Needs `n ≥ 20`.
pub fn dagostino_pearson(sample: &[f64]) -> Result<NormalityReport> {
    let n = sample.len();
    if n < 20 {
        return Err(Error::Domain(format!("normality test needs n ≥ 20, got {n}")));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("sample contains non-finite values".into()));
    }
    let (_, m2, m3, m4) = moments(sample);
    if m2 == 0.0 {
        return Err(Error::Domain("constant sample".into()));
    }
    let g1 = m3 / m2.powf(1.5);
    let b2 = m4 / (m2 * m2);
    let nf = n as f64;
    let z_skew = skew_z(g1, nf);
    let z_kurt = kurt_z(b2, nf);
    let k2 = z_skew * z_skew + z_kurt * z_kurt;
    Ok(NormalityReport {
        n,
        skewness: g1,
        kurtosis: b2 - 3.0,
        z_skew,
        z_kurt,
        k2,
        p_value: (-0.5 * k2).exp(),
    })
}

/// Density-normalized histogram with a fitted normal `(μ, σ)`, σ with divisor `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl Histogram {
    /// Fitted normal density at `x`.
    pub fn fitted_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        (-0.5 * z * z).exp() / (self.std * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// `points` equally spaced `(x, fitted density)` pairs across the edges.
    pub fn fitted_curve(&self, points: usize) -> Vec<(f64, f64)> {
        let lo = self.edges[0];
        let hi = self.edges[self.edges.len() - 1];
        let steps = points.max(2) - 1;
        (0..=steps)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / steps as f64;
                (x, self.fitted_density(x))
            })
            .collect()
    }
}

pub fn histogram_with_normal_fit(sample: &[f64], bins: usize) -> Result<Histogram> {
    if sample.len() < 2 {
        return Err(Error::Domain("histogram needs at least 2 values".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain("degenerate sample: zero range".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    edges[bins] = hi;
    let mut counts = vec![0usize; bins];
    for v in sample {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = sample.len() as f64;
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(c, e)| *c as f64 / (n * (e[1] - e[0])))
        .collect();
    let (mean, m2, _, _) = moments(sample);
    Ok(Histogram {
        edges,
        densities,
        mean,
        std: m2.sqrt(),
    })
}
