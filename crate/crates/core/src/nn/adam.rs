use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a fixed list of tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    /// Zeroed moments shaped like `shapes` (tensor lengths).
    pub fn new(shapes: &[usize]) -> Self {
        Self::with_config(shapes, AdamConfig::default())
    }

    pub fn with_config(shapes: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_tensors(tensors: &[&[f64]]) -> Self {
        let shapes: Vec<usize> = tensors.iter().map(|t| t.len()).collect();
        Self::new(&shapes)
    }

    fn check_shapes(&self, lens: impl Iterator<Item = usize>, count: usize) -> Result<()> {
        if count != self.m.len() {
            return Err(Error::DimensionMismatch {
                context: "Adam tensor count",
                expected: self.m.len(),
                got: count,
            });
        }
        for (len, m) in lens.zip(&self.m) {
            if len != m.len() {
                return Err(Error::DimensionMismatch {
                    context: "Adam tensor length",
                    expected: m.len(),
                    got: len,
                });
            }
        }
        Ok(())
    }

    /// One update `θ ← θ − lr·m̂/(√v̂ + ε)`. Nothing is modified when a
    /// gradient component is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        self.check_shapes(params.iter().map(|p| p.len()), params.len())?;
        self.check_shapes(grads.iter().map(|g| g.len()), grads.len())?;
        if let Some((t, i)) = grads.iter().enumerate().find_map(|(t, g)| {
            g.iter().position(|v| !v.is_finite()).map(|i| (t, i))
        }) {
            return Err(Error::Diverged(format!(
                "non-finite gradient in tensor {t}, component {i}"
            )));
        }

        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.step as f64);
        let c2 = 1.0 - beta2.powf(self.step as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        let mut theta = vec![0.0];
        let mut adam = AdamState::new(&[1]);
        adam.step(&mut [theta.as_mut_slice()], &[&[1.0]], 0.01).unwrap();
        assert!((theta[0] + 0.01).abs() < 1e-9);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut theta = vec![0.3, -2.0];
        let before = theta.clone();
        let mut adam = AdamState::new(&[2]);
        for _ in 0..5 {
            adam.step(&mut [theta.as_mut_slice()], &[&[0.0, 0.0]], 0.1).unwrap();
        }
        assert_eq!(theta, before);
        assert_eq!(adam.step, 5);
    }

    #[test]
    fn descends_a_parabola() {
        // plain gradient-descent reference: θ² from 1 with the same lr would
        // overshoot forever at lr=1, so Adam's normalization is what is tested
        let mut theta = vec![1.0];
        let mut adam = AdamState::new(&[1]);
        for _ in 0..100 {
            let g = 2.0 * theta[0];
            adam.step(&mut [theta.as_mut_slice()], &[&[g]], 0.1).unwrap();
        }
        assert!(theta[0].abs() < 0.05, "theta = {}", theta[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut theta = vec![1.0];
        let mut adam = AdamState::new(&[1]);
        let err = adam
            .step(&mut [theta.as_mut_slice()], &[&[f64::NAN]], 0.1)
            .unwrap_err();
        assert!(err.is_divergence());
        assert_eq!(theta[0], 1.0);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn second_moments_stay_non_negative() {
        let mut theta = vec![0.0; 3];
        let mut adam = AdamState::new(&[3]);
        for k in 0..20 {
            let g = [(k as f64).sin(), -3.0, 1e-3 * k as f64];
            adam.step(&mut [theta.as_mut_slice()], &[&g], 0.01).unwrap();
            assert!(adam.v[0].iter().all(|v| *v >= 0.0));
        }
    }
}
