use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-constant learning rate: the rate at step κ is the rate of the
/// first boundary `≥ κ`, and the last rate past the final boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub boundaries: Vec<u64>,
    pub rates: Vec<f64>,
}

impl LrSchedule {
    pub fn new(boundaries: Vec<u64>, rates: Vec<f64>) -> Result<Self> {
        let s = Self { boundaries, rates };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(rate: f64) -> Self {
        Self {
            boundaries: vec![u64::MAX],
            rates: vec![rate],
        }
    }

    /// Rates held for consecutive segment lengths, e.g. epochs `[1000, 100]`
    /// with rates `[1e-3, 3e-4]` gives boundaries `[1000, 1100]`.
    pub fn from_segments(lengths: &[u64], rates: &[f64]) -> Result<Self> {
        if lengths.len() != rates.len() {
            return Err(Error::Config(format!(
                "{} segment lengths for {} rates",
                lengths.len(),
                rates.len()
            )));
        }
        let mut acc = 0u64;
        let boundaries = lengths
            .iter()
            .map(|l| {
                acc += l;
                acc
            })
            .collect();
        Self::new(boundaries, rates.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundaries.is_empty() || self.boundaries.len() != self.rates.len() {
            return Err(Error::Config(
                "learning-rate schedule needs one rate per boundary".into(),
            ));
        }
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("schedule boundaries must be ascending".into()));
        }
        if self.rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    pub fn rate(&self, step: u64) -> f64 {
        let i = self.boundaries.partition_point(|&b| b < step);
        self.rates[i.min(self.rates.len() - 1)]
    }

    /// Total length when built from segments (the last boundary).
    pub fn total(&self) -> u64 {
        *self.boundaries.last().expect("validated schedule is non-empty")
    }
}
