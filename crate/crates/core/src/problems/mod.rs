//! Forward-backward SDE problems `dX = a dt + b dW`, `-dY = f dt - Z dW`,
//! `Y_T = g(X_T)` and the two benchmark instances.

mod black_scholes;
mod burgers;
mod custom;
mod normal;

use serde::{Deserialize, Serialize};

pub use black_scholes::{BlackScholes, BlackScholesParams};
pub use burgers::{Burgers, BurgersParams};
pub use custom::FnProblem;
pub use normal::{normal_cdf, normal_pdf};

use crate::error::Result;

/// Exact `(Y₀, Z₀)` where a closed form is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSolution {
    pub y0: f64,
    pub z0: Vec<f64>,
}

/// An FBSDE on `[0, T]` with state dimension `d`.
///
/// `diffusion` fills a `d × d` row-major matrix; `driver_grad` writes
/// `∂f/∂z` into `dz` and returns `∂f/∂y`.
pub trait BsdeProblem: Send + Sync {
    fn dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn initial_state(&self) -> Vec<f64>;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn driver(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64;
    fn driver_grad(&self, t: f64, x: &[f64], y: f64, z: &[f64], dz: &mut [f64]) -> f64;
    fn terminal(&self, x: &[f64]) -> f64;

    fn analytic(&self) -> Option<AnalyticSolution> {
        None
    }

    /// Default range for the uniform initialization of `θ₀^y`.
    fn y0_init_range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// Serializable problem description for experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSpec {
    BlackScholes(BlackScholesParams),
    Burgers(BurgersParams),
}

impl ProblemSpec {
    pub fn instantiate(&self) -> Result<Box<dyn BsdeProblem>> {
        Ok(match self {
            ProblemSpec::BlackScholes(p) => Box::new(BlackScholes::new(p.clone())?),
            ProblemSpec::Burgers(p) => Box::new(Burgers::new(p.clone())?),
        })
    }

    pub fn horizon(&self) -> f64 {
        match self {
            ProblemSpec::BlackScholes(p) => p.maturity,
            ProblemSpec::Burgers(p) => p.maturity,
        }
    }

    pub fn with_horizon(&self, t: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            ProblemSpec::BlackScholes(p) => p.maturity = t,
            ProblemSpec::Burgers(p) => p.maturity = t,
        }
        s
    }

    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::BlackScholes(_) => 1,
            ProblemSpec::Burgers(p) => p.dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::BlackScholes(_) => "black_scholes",
            ProblemSpec::Burgers(_) => "burgers",
        }
    }
}
