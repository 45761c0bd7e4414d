//! Brownian increments and Euler–Maruyama paths on a uniform grid.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::BsdeProblem;
use crate::rng;

/// `t_n = nΔt` for `n = 0..=N`, `Δt = T/N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() || steps == 0 {
            return Err(Error::Config(format!(
                "time grid needs T > 0 and N ≥ 1 (T = {horizon}, N = {steps})"
            )));
        }
        Ok(Self { horizon, steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }
}

/// Increments `ΔW` of shape `[m × N × d]`, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianBatch {
    pub samples: usize,
    pub steps: usize,
    pub dim: usize,
    pub seed: u64,
    increments: Vec<f64>,
}

impl BrownianBatch {
    /// Wraps explicit increments laid out as `[sample][step][component]`.
    pub fn from_increments(samples: usize, steps: usize, dim: usize, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != samples * steps * dim {
            return Err(Error::DimensionMismatch {
                context: "BrownianBatch increments",
                expected: samples * steps * dim,
                got: increments.len(),
            });
        }
        Ok(Self {
            samples,
            steps,
            dim,
            seed: 0,
            increments,
        })
    }

    #[inline]
    pub fn increment(&self, sample: usize, step: usize) -> &[f64] {
        let off = (sample * self.steps + step) * self.dim;
        &self.increments[off..off + self.dim]
    }

    #[inline]
    pub fn increment_mut(&mut self, sample: usize, step: usize) -> &mut [f64] {
        let off = (sample * self.steps + step) * self.dim;
        &mut self.increments[off..off + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }
}

/// Draws `√Δt · ξ` with `ξ` standard normal (ziggurat), consuming one
/// ChaCha8 stream seeded by `seed` in sample, step, component order.
pub fn sample_brownian(grid: &TimeGrid, m: usize, d: usize, seed: u64) -> Result<BrownianBatch> {
    if m == 0 || d == 0 {
        return Err(Error::Config("Brownian batch needs m ≥ 1 and d ≥ 1".into()));
    }
    let mut rng = rng::stream(seed);
    let sd = grid.dt().sqrt();
    let increments = (0..m * grid.steps * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Ok(BrownianBatch {
        samples: m,
        steps: grid.steps,
        dim: d,
        seed,
        increments,
    })
}

/// Simulated states `X` of shape `[m × (N+1) × d]`, sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub samples: usize,
    pub steps: usize,
    pub dim: usize,
    states: Vec<f64>,
}

impl Paths {
    #[inline]
    pub fn state(&self, sample: usize, n: usize) -> &[f64] {
        let off = (sample * (self.steps + 1) + n) * self.dim;
        &self.states[off..off + self.dim]
    }

    /// States of all samples at time index `n`, as an `m × d` row-major block.
    pub fn slice_at(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.samples * self.dim);
        for j in 0..self.samples {
            out.extend_from_slice(self.state(j, n));
        }
        out
    }
}

fn check_shape(problem: &dyn BsdeProblem, x0: &[f64], grid: &TimeGrid, batch: &BrownianBatch) -> Result<()> {
    let d = problem.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: d,
            got: x0.len(),
        });
    }
    if batch.dim != d {
        return Err(Error::DimensionMismatch {
            context: "Brownian batch dimension",
            expected: d,
            got: batch.dim,
        });
    }
    if batch.steps != grid.steps {
        return Err(Error::DimensionMismatch {
            context: "Brownian batch steps",
            expected: grid.steps,
            got: batch.steps,
        });
    }
    Ok(())
}

/// `X_{n+1} = X_n + a(t_n, X_n)Δt + b(t_n, X_n)ΔW_n` from `X_0 = x₀`.
pub fn euler_maruyama_forward(
    problem: &dyn BsdeProblem,
    x0: &[f64],
    grid: &TimeGrid,
    batch: &BrownianBatch,
) -> Result<Paths> {
    check_shape(problem, x0, grid, batch)?;
    let (m, n_steps, d) = (batch.samples, grid.steps, x0.len());
    let dt = grid.dt();
    let mut states = vec![0.0; m * (n_steps + 1) * d];
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d * d];
    // the first failing step over all samples, then the first sample at it
    let mut failure: Option<(usize, usize)> = None;
    for j in 0..m {
        let base = j * (n_steps + 1) * d;
        states[base..base + d].copy_from_slice(x0);
        for n in 0..n_steps {
            let (cur, next) = states[base + n * d..base + (n + 2) * d].split_at_mut(d);
            let t = grid.t(n);
            problem.drift(t, cur, &mut a);
            problem.diffusion(t, cur, &mut b);
            let dw = batch.increment(j, n);
            for i in 0..d {
                let row = &b[i * d..(i + 1) * d];
                let noise: f64 = row.iter().zip(dw).map(|(bik, w)| bik * w).sum();
                next[i] = cur[i] + a[i] * dt + noise;
            }
            if next.iter().any(|v| !v.is_finite()) {
                if failure.is_none_or(|(step, _)| n < step) {
                    failure = Some((n, j));
                }
                break;
            }
        }
    }
    if let Some((step, sample)) = failure {
        return Err(Error::SimulationDiverged { sample, step });
    }
    Ok(Paths {
        samples: m,
        steps: n_steps,
        dim: d,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{BlackScholes, BlackScholesParams, Burgers, BurgersParams, FnProblem};

    #[test]
    fn grid_endpoints() {
        let g = TimeGrid::new(0.3, 7).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(7), 0.3);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn increments_have_unit_moments_when_dt_is_one() {
        let g = TimeGrid::new(1.0, 1).unwrap();
        let b = sample_brownian(&g, 1_000_000, 1, 12345).unwrap();
        let n = b.as_slice().len() as f64;
        let mean = b.as_slice().iter().sum::<f64>() / n;
        let var = b.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // 3σ of the mean is 0.003; the variance estimate has sd ≈ √(2/n) ≈ 0.0014
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn increments_scale_with_sqrt_dt() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let b = sample_brownian(&g, 50_000, 2, 3).unwrap();
        let n = b.as_slice().len() as f64;
        let var = b.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
        assert!((var - 0.25).abs() < 0.005);
    }

    #[test]
    fn same_seed_same_batch() {
        let g = TimeGrid::new(1.0, 5).unwrap();
        assert_eq!(
            sample_brownian(&g, 10, 3, 9).unwrap(),
            sample_brownian(&g, 10, 3, 9).unwrap()
        );
        assert_ne!(
            sample_brownian(&g, 10, 3, 9).unwrap().as_slice(),
            sample_brownian(&g, 10, 3, 10).unwrap().as_slice()
        );
    }

    #[test]
    fn zero_coefficients_freeze_the_state() {
        let p = FnProblem::new(2, 1.0)
            .initial(vec![1.5, -2.0])
            .diffusion(|_, _, out| out.fill(0.0));
        let g = TimeGrid::new(1.0, 6).unwrap();
        let b = sample_brownian(&g, 4, 2, 0).unwrap();
        let x = euler_maruyama_forward(&p, &[1.5, -2.0], &g, &b).unwrap();
        for j in 0..4 {
            for n in 0..=6 {
                assert_eq!(x.state(j, n), &[1.5, -2.0]);
            }
        }
    }

    #[test]
    fn single_step_arithmetic() {
        let p = BlackScholes::new(BlackScholesParams {
            maturity: 0.5,
            ..BlackScholesParams::reference()
        })
        .unwrap();
        let g = TimeGrid::new(0.5, 1).unwrap();
        let b = BrownianBatch::from_increments(1, 1, 1, vec![0.1]).unwrap();
        let x = euler_maruyama_forward(&p, &[100.0], &g, &b).unwrap();
        assert!((x.state(0, 1)[0] - 104.5).abs() < 1e-12);
    }

    #[test]
    fn burgers_increments_are_scaled_brownian_increments() {
        let p = Burgers::new(BurgersParams::new(3, 2.5, 0.25)).unwrap();
        let g = TimeGrid::new(0.25, 8).unwrap();
        let b = sample_brownian(&g, 16, 3, 77).unwrap();
        let x = euler_maruyama_forward(&p, &[0.0; 3], &g, &b).unwrap();
        for j in 0..16 {
            for n in 0..8 {
                for k in 0..3 {
                    let dx = x.state(j, n + 1)[k] - x.state(j, n)[k];
                    let expected = x.state(j, n)[k] + 2.5 * b.increment(j, n)[k];
                    assert_eq!(x.state(j, n + 1)[k], expected, "{dx}");
                }
            }
        }
    }

    #[test]
    fn gbm_mean_matches_exponential_growth() {
        let p = BlackScholes::new(BlackScholesParams::reference()).unwrap();
        let g = TimeGrid::new(1.0, 20).unwrap();
        let m = 100_000;
        let b = sample_brownian(&g, m, 1, 2024).unwrap();
        let x = euler_maruyama_forward(&p, &[100.0], &g, &b).unwrap();
        let xt: Vec<f64> = (0..m).map(|j| x.state(j, 20)[0]).collect();
        let mean = xt.iter().sum::<f64>() / m as f64;
        let sd = (xt.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0)).sqrt();
        let se = sd / (m as f64).sqrt();
        // the Euler mean is x₀(1 + aΔt)^N exactly, within 1e-4 of x₀e^{aT}
        let target = 100.0 * 0.05f64.exp();
        assert!((mean - target).abs() < 3.0 * se, "{mean} vs {target} (se {se})");
    }

    #[test]
    fn non_finite_state_reports_first_failure() {
        let p = FnProblem::new(1, 1.0)
            .drift(|t, x, out| out[0] = if t >= 0.5 { f64::INFINITY } else { x[0] });
        let g = TimeGrid::new(1.0, 4).unwrap();
        let b = sample_brownian(&g, 3, 1, 0).unwrap();
        match euler_maruyama_forward(&p, &[1.0], &g, &b) {
            Err(Error::SimulationDiverged { sample, step }) => {
                assert_eq!((sample, step), (0, 2));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = FnProblem::new(2, 1.0);
        let g = TimeGrid::new(1.0, 4).unwrap();
        let b = sample_brownian(&g, 3, 1, 0).unwrap();
        assert!(euler_maruyama_forward(&p, &[0.0, 0.0], &g, &b).is_err());
    }
}
