use serde::{Deserialize, Serialize};

use super::{AnalyticSolution, BsdeProblem};
use crate::error::{Error, Result};

/// Burgers-type BSDE with `dX = b dW`, `X₀ = 0` and terminal
/// `g(x) = s(T + Σx/d)` where `s` is the logistic function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersParams {
    pub dim: usize,
    /// Scalar diffusion `b`.
    pub diffusion: f64,
    pub maturity: f64,
}

impl BurgersParams {
    pub fn new(dim: usize, diffusion: f64, maturity: f64) -> Self {
        Self {
            dim,
            diffusion,
            maturity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !(self.diffusion > 0.0) || !(self.maturity > 0.0) {
            return Err(Error::Config(
                "Burgers needs d ≥ 1, positive diffusion and maturity".into(),
            ));
        }
        Ok(())
    }

    fn logistic_arg(&self, t: f64, x: &[f64]) -> f64 {
        t + x.iter().sum::<f64>() / self.dim as f64
    }

    /// `Y_t = e^u / (1 + e^u)` with `u = t + Σx/d`.
    pub fn analytic_y(&self, t: f64, x: &[f64]) -> f64 {
        logistic(self.logistic_arg(t, x))
    }

    /// Every component of `Z_t` equals `(b/d) e^u / (1 + e^u)²`.
    pub fn analytic_z(&self, t: f64, x: &[f64]) -> f64 {
        let s = logistic(self.logistic_arg(t, x));
        self.diffusion / self.dim as f64 * s * (1.0 - s)
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct Burgers {
    pub params: BurgersParams,
}

impl Burgers {
    pub fn new(params: BurgersParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    fn coefficients(&self) -> (f64, f64) {
        let d = self.params.dim as f64;
        let b = self.params.diffusion;
        (b / d, (2.0 * d + b * b) / (2.0 * b * d))
    }
}

impl BsdeProblem for Burgers {
    fn dim(&self) -> usize {
        self.params.dim
    }

    fn horizon(&self) -> f64 {
        self.params.maturity
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.params.dim]
    }

    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        let d = self.params.dim;
        out.fill(0.0);
        for i in 0..d {
            out[i * d + i] = self.params.diffusion;
        }
    }

    fn driver(&self, _t: f64, _x: &[f64], y: f64, z: &[f64]) -> f64 {
        let (c1, c2) = self.coefficients();
        (c1 * y - c2) * z.iter().sum::<f64>()
    }

    fn driver_grad(&self, _t: f64, _x: &[f64], y: f64, z: &[f64], dz: &mut [f64]) -> f64 {
        let (c1, c2) = self.coefficients();
        dz.fill(c1 * y - c2);
        c1 * z.iter().sum::<f64>()
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        self.params.analytic_y(self.params.maturity, x)
    }

    fn analytic(&self) -> Option<AnalyticSolution> {
        let x0 = self.initial_state();
        Some(AnalyticSolution {
            y0: self.params.analytic_y(0.0, &x0),
            z0: vec![self.params.analytic_z(0.0, &x0); self.params.dim],
        })
    }

    fn y0_init_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_solution_d50() {
        let p = Burgers::new(BurgersParams::new(50, 25.0, 0.25)).unwrap();
        let a = p.analytic().unwrap();
        assert_eq!(a.y0, 0.5);
        assert_eq!(a.z0.len(), 50);
        assert!(a.z0.iter().all(|z| (z - 0.125).abs() < 1e-15));
    }

    #[test]
    fn y0_is_one_half_and_z0_is_b_over_4d() {
        for (d, b) in [(1, 0.2), (5, 2.5), (7, 40.0)] {
            let p = Burgers::new(BurgersParams::new(d, b, 0.1)).unwrap();
            let a = p.analytic().unwrap();
            assert_eq!(a.y0, 0.5);
            for z in a.z0 {
                assert!((z - b / (4.0 * d as f64)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn analytic_y_at_maturity_is_terminal() {
        let p = Burgers::new(BurgersParams::new(3, 1.5, 0.3)).unwrap();
        for x in [[0.1, -2.0, 4.0], [30.0, 30.0, 30.0], [-50.0, 0.0, 1.0]] {
            assert_eq!(p.params.analytic_y(0.3, &x), p.terminal(&x));
        }
    }

    #[test]
    fn driver_gradient_matches_driver() {
        let p = Burgers::new(BurgersParams::new(3, 1.5, 0.3)).unwrap();
        let x = [0.0; 3];
        let z = [0.2, -0.1, 0.4];
        let mut dz = [0.0; 3];
        let dy = p.driver_grad(0.0, &x, 0.7, &z, &mut dz);
        let h = 1e-6;
        let fy = (p.driver(0.0, &x, 0.7 + h, &z) - p.driver(0.0, &x, 0.7 - h, &z)) / (2.0 * h);
        assert!((dy - fy).abs() < 1e-8);
        for k in 0..3 {
            let mut zp = z;
            let mut zm = z;
            zp[k] += h;
            zm[k] -= h;
            let fz = (p.driver(0.0, &x, 0.7, &zp) - p.driver(0.0, &x, 0.7, &zm)) / (2.0 * h);
            assert!((dz[k] - fz).abs() < 1e-8);
        }
    }

    #[test]
    fn driver_at_analytic_solution_is_finite() {
        let p = Burgers::new(BurgersParams::new(4, 2.0, 0.25)).unwrap();
        for i in -50..=50 {
            let x = [i as f64 * 20.0, 0.0, -3.0, 1.0];
            let y = p.params.analytic_y(0.1, &x);
            let z = vec![p.params.analytic_z(0.1, &x); 4];
            assert!(p.driver(0.1, &x, y, &z).is_finite());
        }
    }
}
