use super::{AnalyticSolution, BsdeProblem};

type VecFn = Box<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
type DriverFn = Box<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;
type DriverGradFn = Box<dyn Fn(f64, &[f64], f64, &[f64], &mut [f64]) -> f64 + Send + Sync>;
type TerminalFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Problem assembled from closures. Defaults to `a ≡ 0`, `b ≡ I`, `f ≡ 0`,
/// `g ≡ 0` and `x₀ = 0`.
pub struct FnProblem {
    dim: usize,
    horizon: f64,
    x0: Vec<f64>,
    drift: VecFn,
    diffusion: VecFn,
    driver: DriverFn,
    driver_grad: DriverGradFn,
    terminal: TerminalFn,
    analytic: Option<AnalyticSolution>,
    y0_range: (f64, f64),
}

impl FnProblem {
    pub fn new(dim: usize, horizon: f64) -> Self {
        Self {
            dim,
            horizon,
            x0: vec![0.0; dim],
            drift: Box::new(|_, _, out| out.fill(0.0)),
            diffusion: Box::new(move |_, _, out| {
                out.fill(0.0);
                for i in 0..dim {
                    out[i * dim + i] = 1.0;
                }
            }),
            driver: Box::new(|_, _, _, _| 0.0),
            driver_grad: Box::new(|_, _, _, _, dz| {
                dz.fill(0.0);
                0.0
            }),
            terminal: Box::new(|_| 0.0),
            analytic: None,
            y0_range: (0.0, 1.0),
        }
    }

    pub fn initial(mut self, x0: Vec<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn drift(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Box::new(f);
        self
    }

    pub fn diffusion(mut self, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Box::new(f);
        self
    }

    /// Driver and its gradient (`∂f/∂z` written to the slice, `∂f/∂y` returned).
    pub fn driver(
        mut self,
        f: impl Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(f64, &[f64], f64, &[f64], &mut [f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.driver = Box::new(f);
        self.driver_grad = Box::new(grad);
        self
    }

    pub fn terminal(mut self, g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Box::new(g);
        self
    }

    pub fn analytic(mut self, solution: AnalyticSolution) -> Self {
        self.analytic = Some(solution);
        self
    }

    pub fn y0_range(mut self, lo: f64, hi: f64) -> Self {
        self.y0_range = (lo, hi);
        self
    }
}

impl BsdeProblem for FnProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }

    fn driver(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.driver)(t, x, y, z)
    }

    fn driver_grad(&self, t: f64, x: &[f64], y: f64, z: &[f64], dz: &mut [f64]) -> f64 {
        (self.driver_grad)(t, x, y, z, dz)
    }

    fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    fn analytic(&self) -> Option<AnalyticSolution> {
        self.analytic.clone()
    }

    fn y0_init_range(&self) -> (f64, f64) {
        self.y0_range
    }
}
