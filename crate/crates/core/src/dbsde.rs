//! The deep BSDE scheme: `Y₀ = θ₀^y` and `Z₀ = θ₀^z` are free parameters,
//! `Z_n = φ_n(X_n)` for `n = 1..N-1` are small networks, and the Euler
//! recursion `Y_{n+1} = Y_n - f(t_n, X_n, Y_n, Z_n)Δt + Z_n·ΔW_n` is trained to
//! hit `g(X_N)` in mean square.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, AdamState, ForwardCache, LrSchedule, Mlp, MlpGrads, MlpSpec, Mode};
use crate::parallel::par_map;
use crate::problems::BsdeProblem;
use crate::rng::{self, tag};
use crate::sde::{euler_maruyama_forward, sample_brownian, BrownianBatch, Paths, TimeGrid};

/// Solver hyperparameters. The horizon `T` comes from the problem; only the
/// number of steps `N` lives here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DbsdeConfig {
    pub time_steps: usize,
    pub batch_size: usize,
    pub train_steps: u64,
    pub lr: LrSchedule,
    pub hidden_layers: usize,
    /// Defaults to `10 + d`.
    pub hidden_width: Option<usize>,
    pub activation: Activation,
    pub batch_norm: bool,
    /// Defaults to the problem's own range.
    pub y0_init_range: Option<(f64, f64)>,
    pub seed: u64,
    /// Paths used for the held-out loss reported next to the training loss.
    pub eval_paths: usize,
}

impl Default for DbsdeConfig {
    fn default() -> Self {
        Self {
            time_steps: 32,
            batch_size: 128,
            train_steps: 2000,
            lr: LrSchedule::constant(1e-2),
            hidden_layers: 2,
            hidden_width: None,
            activation: Activation::Relu,
            batch_norm: true,
            y0_init_range: None,
            seed: 0,
            eval_paths: 256,
        }
    }
}

impl DbsdeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.time_steps == 0 || self.train_steps == 0 || self.eval_paths == 0 {
            return Err(Error::Config("N, training steps and eval paths must be positive".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if let Some((lo, hi)) = self.y0_init_range {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("invalid Y₀ init range [{lo}, {hi}]")));
            }
        }
        self.lr.validate()
    }

    pub fn z_net_spec(&self, d: usize) -> MlpSpec {
        MlpSpec::new(
            d,
            d,
            self.hidden_layers,
            self.hidden_width.unwrap_or(10 + d),
            self.activation,
            self.batch_norm,
        )
    }

    pub fn grid(&self, problem: &dyn BsdeProblem) -> Result<TimeGrid> {
        TimeGrid::new(problem.horizon(), self.time_steps)
    }
}

/// Learnable `(θ₀^y, θ₀^z)` and the `N-1` networks for `Z_1..Z_{N-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbsdeModel {
    pub y0: f64,
    pub z0: Vec<f64>,
    pub subnets: Vec<Mlp>,
}

impl DbsdeModel {
    /// `θ₀^y ~ U[Y₀^min, Y₀^max]`, `θ₀^z ~ U[-1, 1]^d`, subnets Xavier-normal.
    pub fn init(problem: &dyn BsdeProblem, config: &DbsdeConfig) -> Result<Self> {
        config.validate()?;
        let d = problem.dim();
        let (lo, hi) = config.y0_init_range.unwrap_or_else(|| problem.y0_init_range());
        let mut rng = rng::stream(rng::tagged(config.seed, tag::INIT, 0));
        let y0 = lo + (hi - lo) * rng.random::<f64>();
        let z0 = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let spec = config.z_net_spec(d);
        let subnets = (1..config.time_steps)
            .map(|n| Mlp::xavier_normal(spec.clone(), rng::tagged(config.seed, tag::INIT, n as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { y0, z0, subnets })
    }

    pub fn dim(&self) -> usize {
        self.z0.len()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![std::slice::from_mut(&mut self.y0), self.z0.as_mut_slice()];
        for net in &mut self.subnets {
            out.extend(net.params.trainable_mut());
        }
        out
    }

    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out = vec![std::slice::from_ref(&self.y0), self.z0.as_slice()];
        for net in &self.subnets {
            out.extend(net.params.trainable());
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.trainable().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let expected: usize = self.trainable().iter().map(|t| t.len()).sum();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "DbsdeModel::set_flat",
                expected,
                got: values.len(),
            });
        }
        let mut off = 0;
        for t in self.trainable_mut() {
            t.copy_from_slice(&values[off..off + t.len()]);
            off += t.len();
        }
        Ok(())
    }
}

/// Gradient of the rollout loss, congruent to [`DbsdeModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct DbsdeGrads {
    pub y0: f64,
    pub z0: Vec<f64>,
    pub subnets: Vec<MlpGrads>,
}

impl DbsdeGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![std::slice::from_ref(&self.y0), self.z0.as_slice()];
        for g in &self.subnets {
            out.extend(g.tensors());
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}

/// Intermediates of one rollout needed by [`rollout_gradient`].
#[derive(Debug, Clone)]
pub struct RolloutCache {
    paths: Paths,
    /// `Z_n` for `n = 0..N-1`, each `m × d`.
    z: Vec<Matrix>,
    /// `Y_n` for `n = 0..=N`.
    y: Vec<Vec<f64>>,
    terminal: Vec<f64>,
    nets: Vec<Option<ForwardCache>>,
}

impl RolloutCache {
    pub fn paths(&self) -> &Paths {
        &self.paths
    }

    /// `Z_n` of every sample as an `m × d` matrix.
    pub fn z(&self, n: usize) -> &Matrix {
        &self.z[n]
    }

    pub fn y(&self, n: usize) -> &[f64] {
        &self.y[n]
    }
}

fn check_model(model: &DbsdeModel, problem: &dyn BsdeProblem, grid: &TimeGrid) -> Result<()> {
    if model.z0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            context: "θ₀^z",
            expected: problem.dim(),
            got: model.z0.len(),
        });
    }
    if model.subnets.len() + 1 != grid.steps {
        return Err(Error::DimensionMismatch {
            context: "number of Z subnetworks",
            expected: grid.steps - 1,
            got: model.subnets.len(),
        });
    }
    Ok(())
}

/// Simulates `X` and the `Y` recursion on `batch` and returns
/// `(1/m) Σ_j |g(X_N^j) - Y_N^j|²`. Training mode uses batch statistics in the
/// subnets (and updates their running averages); eval mode uses the running
/// statistics and leaves the model untouched.
pub fn rollout_loss(
    model: &mut DbsdeModel,
    problem: &dyn BsdeProblem,
    grid: &TimeGrid,
    batch: &BrownianBatch,
    mode: Mode,
) -> Result<(f64, RolloutCache)> {
    check_model(model, problem, grid)?;
    let paths = euler_maruyama_forward(problem, &problem.initial_state(), grid, batch)?;
    let (m, d, n_steps) = (batch.samples, problem.dim(), grid.steps);
    let dt = grid.dt();

    let mut z = Vec::with_capacity(n_steps);
    let mut y = Vec::with_capacity(n_steps + 1);
    let mut nets = Vec::with_capacity(n_steps);
    y.push(vec![model.y0; m]);
    for n in 0..n_steps {
        let zn = if n == 0 {
            nets.push(None);
            let mut zm = Matrix::zeros(m, d);
            for j in 0..m {
                zm.row_mut(j).copy_from_slice(&model.z0);
            }
            zm
        } else {
            let xn = Matrix::from_vec(m, d, paths.slice_at(n))?;
            let net = &mut model.subnets[n - 1];
            match mode {
                Mode::Train => {
                    let (out, cache) = net.forward_train(&xn)?;
                    nets.push(Some(cache));
                    out
                }
                Mode::Eval => {
                    nets.push(None);
                    net.forward_eval(&xn)?
                }
            }
        };
        let t = grid.t(n);
        let yn = &y[n];
        let mut next = Vec::with_capacity(m);
        for j in 0..m {
            let x = paths.state(j, n);
            let zj = zn.row(j);
            let dw = batch.increment(j, n);
            let f = problem.driver(t, x, yn[j], zj);
            let zdw: f64 = zj.iter().zip(dw).map(|(a, b)| a * b).sum();
            let v = yn[j] - f * dt + zdw;
            if !v.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite Y at step {}, sample {j}",
                    n + 1
                )));
            }
            next.push(v);
        }
        z.push(zn);
        y.push(next);
    }

    let terminal: Vec<f64> = (0..m).map(|j| problem.terminal(paths.state(j, n_steps))).collect();
    let loss = terminal
        .iter()
        .zip(&y[n_steps])
        .map(|(g, yn)| (g - yn) * (g - yn))
        .sum::<f64>()
        / m as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged("non-finite rollout loss".into()));
    }
    Ok((
        loss,
        RolloutCache {
            paths,
            z,
            y,
            terminal,
            nets,
        },
    ))
}

/// Exact gradient of the training-mode rollout loss. `X` does not depend on
/// the parameters, so the adjoint only runs through `Y` and `Z`.
pub fn rollout_gradient(
    model: &DbsdeModel,
    problem: &dyn BsdeProblem,
    grid: &TimeGrid,
    batch: &BrownianBatch,
    cache: &RolloutCache,
) -> Result<DbsdeGrads> {
    check_model(model, problem, grid)?;
    let (m, d, n_steps) = (batch.samples, problem.dim(), grid.steps);
    let dt = grid.dt();
    // λ = ∂loss/∂Y_n per sample
    let mut lambda: Vec<f64> = cache
        .terminal
        .iter()
        .zip(&cache.y[n_steps])
        .map(|(g, yn)| 2.0 * (yn - g) / m as f64)
        .collect();
    let mut fz = vec![0.0; d];
    let mut subnets = vec![None; model.subnets.len()];
    let mut z0 = vec![0.0; d];

    for n in (0..n_steps).rev() {
        let t = grid.t(n);
        let zn = &cache.z[n];
        let yn = &cache.y[n];
        let mut dz = Matrix::zeros(m, d);
        for j in 0..m {
            let fy = problem.driver_grad(t, cache.paths.state(j, n), yn[j], zn.row(j), &mut fz);
            let dw = batch.increment(j, n);
            let l = lambda[j];
            for (k, v) in dz.row_mut(j).iter_mut().enumerate() {
                *v = l * (dw[k] - fz[k] * dt);
            }
            lambda[j] = l * (1.0 - fy * dt);
        }
        if n == 0 {
            for j in 0..m {
                for (acc, v) in z0.iter_mut().zip(dz.row(j)) {
                    *acc += v;
                }
            }
        } else {
            let net_cache = cache.nets[n]
                .as_ref()
                .ok_or_else(|| Error::Contract("gradient needs a training-mode rollout".into()))?;
            subnets[n - 1] = Some(model.subnets[n - 1].backward(net_cache, &dz)?);
        }
    }
    Ok(DbsdeGrads {
        y0: lambda.iter().sum(),
        z0,
        subnets: subnets.into_iter().map(|g| g.expect("every subnet visited")).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbsdeResult {
    pub y0: f64,
    pub z0: Vec<f64>,
    /// Loss of the last training batch, as seen by the optimizer.
    pub final_loss: f64,
    /// Eval-mode loss on `eval_paths` fresh paths; absent after divergence.
    pub eval_loss: Option<f64>,
    pub seed: u64,
    pub steps_run: u64,
    pub diverged: bool,
}

/// Per-step view handed to training observers.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo<'a> {
    /// 1-based count of completed optimizer steps.
    pub step: u64,
    /// Training loss evaluated before this step's update.
    pub loss: f64,
    pub model: &'a DbsdeModel,
}

pub fn train(problem: &dyn BsdeProblem, config: &DbsdeConfig) -> Result<DbsdeResult> {
    train_with_observer(problem, config, |_| {})
}

/// Runs `config.train_steps` Adam steps, each on a fresh Brownian batch, and
/// calls `observer` after every update. Only configuration problems are
/// errors; a non-finite loss or gradient stops training and returns the last
/// finite iterate with `diverged` set.
pub fn train_with_observer(
    problem: &dyn BsdeProblem,
    config: &DbsdeConfig,
    mut observer: impl FnMut(StepInfo<'_>),
) -> Result<DbsdeResult> {
    let grid = config.grid(problem)?;
    let mut model = DbsdeModel::init(problem, config)?;
    let mut adam = AdamState::for_tensors(&model.trainable());
    let d = problem.dim();
    let mut last_loss = f64::NAN;
    let mut steps_run = 0;
    let mut diverged = false;

    for step in 1..=config.train_steps {
        let batch = sample_brownian(&grid, config.batch_size, d, rng::tagged(config.seed, tag::BATCH, step))?;
        // a failed step must not leave half-updated batch-norm statistics behind
        let snapshot = model.clone();
        let outcome = rollout_loss(&mut model, problem, &grid, &batch, Mode::Train).and_then(
            |(loss, cache)| {
                let grads = rollout_gradient(&model, problem, &grid, &batch, &cache)?;
                adam.step(&mut model.trainable_mut(), &grads.tensors(), config.lr.rate(step))?;
                Ok(loss)
            },
        );
        match outcome {
            Ok(loss) => {
                last_loss = loss;
                steps_run = step;
                observer(StepInfo {
                    step,
                    loss,
                    model: &model,
                });
            }
            Err(e) if e.is_divergence() => {
                model = snapshot;
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let eval_loss = if diverged {
        None
    } else {
        let batch = sample_brownian(&grid, config.eval_paths, d, rng::tagged(config.seed, tag::EVAL, 0))?;
        match rollout_loss(&mut model, problem, &grid, &batch, Mode::Eval) {
            Ok((loss, _)) => Some(loss),
            Err(e) if e.is_divergence() => None,
            Err(e) => return Err(e),
        }
    };
    Ok(DbsdeResult {
        y0: model.y0,
        z0: model.z0.clone(),
        final_loss: last_loss,
        eval_loss,
        seed: config.seed,
        steps_run,
        diverged,
    })
}

/// Seed of run `q` in an ensemble under `base`.
pub fn run_seed(base: u64, q: usize) -> u64 {
    rng::tagged(base, tag::RUN, q as u64)
}

/// `q` independent trainings with seeds [`run_seed`]`(config.seed, 0..q)`,
/// returned in run order.
pub fn ensemble_solve(problem: &dyn BsdeProblem, config: &DbsdeConfig, q: usize) -> Result<Vec<DbsdeResult>> {
    ensemble_solve_parallel(problem, config, q, 1)
}

pub fn ensemble_solve_parallel(
    problem: &dyn BsdeProblem,
    config: &DbsdeConfig,
    q: usize,
    workers: usize,
) -> Result<Vec<DbsdeResult>> {
    if q == 0 {
        return Err(Error::Config("ensemble size Q must be at least 1".into()));
    }
    let runs: Vec<DbsdeConfig> = (0..q)
        .map(|i| DbsdeConfig {
            seed: run_seed(config.seed, i),
            ..config.clone()
        })
        .collect();
    par_map(&runs, workers, |c| train(problem, c))?.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{BlackScholes, BlackScholesParams, Burgers, BurgersParams, FnProblem};

    fn small_config(n: usize, steps: u64) -> DbsdeConfig {
        DbsdeConfig {
            time_steps: n,
            batch_size: 16,
            train_steps: steps,
            hidden_width: Some(4),
            eval_paths: 32,
            seed: 5,
            ..DbsdeConfig::default()
        }
    }

    fn zero_subnets(model: &mut DbsdeModel) {
        for net in &mut model.subnets {
            let n = net.params.trainable_len();
            net.params.set_flat(&vec![0.0; n]).unwrap();
        }
    }

    #[test]
    fn init_respects_ranges_and_counts() {
        let p = Burgers::new(BurgersParams::new(3, 1.0, 0.25)).unwrap();
        let c = DbsdeConfig {
            y0_init_range: Some((2.0, 3.0)),
            ..small_config(6, 1)
        };
        for seed in 0..20 {
            let m = DbsdeModel::init(&p, &DbsdeConfig { seed, ..c.clone() }).unwrap();
            assert!((2.0..=3.0).contains(&m.y0));
            assert!(m.z0.iter().all(|z| (-1.0..=1.0).contains(z)));
            assert_eq!(m.subnets.len(), 5);
            assert_eq!(m.subnets[0].spec.input_dim, 3);
            assert_eq!(m.subnets[0].spec.output_dim, 3);
        }
    }

    #[test]
    fn constant_terminal_matched_exactly_gives_zero_loss() {
        let p = FnProblem::new(2, 1.0).terminal(|_| 3.0);
        let c = small_config(4, 1);
        let grid = c.grid(&p).unwrap();
        let mut model = DbsdeModel::init(&p, &c).unwrap();
        model.y0 = 3.0;
        model.z0 = vec![0.0, 0.0];
        zero_subnets(&mut model);
        let batch = sample_brownian(&grid, 16, 2, 1).unwrap();
        let (loss, _) = rollout_loss(&mut model, &p, &grid, &batch, Mode::Train).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn unit_offset_gives_unit_loss() {
        let p = FnProblem::new(1, 1.0);
        let c = small_config(3, 1);
        let grid = c.grid(&p).unwrap();
        let mut model = DbsdeModel::init(&p, &c).unwrap();
        model.y0 = 1.0;
        model.z0 = vec![0.0];
        zero_subnets(&mut model);
        let batch = sample_brownian(&grid, 16, 1, 1).unwrap();
        let (loss, _) = rollout_loss(&mut model, &p, &grid, &batch, Mode::Eval).unwrap();
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn single_step_hand_unroll() {
        // Black–Scholes with N=1 uses no networks: Y₁ = θy - f(0, S₀, θy, θz)Δt + θz ΔW
        let params = BlackScholesParams {
            maturity: 0.5,
            ..BlackScholesParams::reference()
        };
        let p = BlackScholes::new(params).unwrap();
        let c = DbsdeConfig {
            batch_size: 2,
            ..small_config(1, 1)
        };
        let grid = c.grid(&p).unwrap();
        let mut model = DbsdeModel::init(&p, &c).unwrap();
        model.y0 = 6.0;
        model.z0 = vec![10.0];
        let batch = BrownianBatch::from_increments(2, 1, 1, vec![0.1, -0.2]).unwrap();
        let (loss, _) = rollout_loss(&mut model, &p, &grid, &batch, Mode::Train).unwrap();

        // f = -(0.03·6 + (0.05 - 0.03)·10/0.2) = -(0.18 + 1.0) = -1.18
        // Y₁ = 6 + 1.18·0.5 + 10ΔW  →  7.59 and 4.59
        // S₁ = 100 + 0.05·100·0.5 + 0.2·100·ΔW  →  104.5 and 98.5
        // g  = 4.5 and 0
        let expected = ((4.5f64 - 7.59).powi(2) + (0.0f64 - 4.59).powi(2)) / 2.0;
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }

    #[test]
    fn z_n_depends_only_on_x_n() {
        let p = Burgers::new(BurgersParams::new(2, 1.0, 0.25)).unwrap();
        let c = small_config(5, 1);
        let grid = c.grid(&p).unwrap();
        let model = DbsdeModel::init(&p, &c).unwrap();
        let batch = sample_brownian(&grid, 8, 2, 3).unwrap();
        let (_, base) = rollout_loss(&mut model.clone(), &p, &grid, &batch, Mode::Eval).unwrap();
        for n in 1..5 {
            let mut perturbed = batch.clone();
            for j in 0..8 {
                for k in n..5 {
                    perturbed.increment_mut(j, k).iter_mut().for_each(|v| *v += 0.7);
                }
            }
            let (_, other) = rollout_loss(&mut model.clone(), &p, &grid, &perturbed, Mode::Eval).unwrap();
            for i in 0..=n {
                assert_eq!(base.z(i.min(4)).as_slice(), other.z(i.min(4)).as_slice(), "n={n}, i={i}");
                if i == n {
                    break;
                }
            }
        }
    }

    fn rollout_fd_error(problem: &dyn BsdeProblem, config: &DbsdeConfig) -> f64 {
        let grid = config.grid(problem).unwrap();
        let mut model = DbsdeModel::init(problem, config).unwrap();
        let batch = sample_brownian(&grid, config.batch_size, problem.dim(), 99).unwrap();
        let (_, cache) = rollout_loss(&mut model, problem, &grid, &batch, Mode::Train).unwrap();
        let analytic = rollout_gradient(&model, problem, &grid, &batch, &cache).unwrap().flat();
        let base = model.flat();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let eval = |delta: f64| {
                let mut probe = model.clone();
                let mut p = base.clone();
                p[i] += delta;
                probe.set_flat(&p).unwrap();
                rollout_loss(&mut probe, problem, &grid, &batch, Mode::Train).unwrap().0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn rollout_gradient_matches_finite_differences() {
        let burgers = Burgers::new(BurgersParams::new(3, 1.5, 0.25)).unwrap();
        let c = DbsdeConfig {
            activation: Activation::Tanh,
            batch_size: 8,
            ..small_config(4, 1)
        };
        let err = rollout_fd_error(&burgers, &c);
        assert!(err < 1e-4, "burgers {err}");

        // unit-scaled contract keeps the loss O(1) so differences are not round-off bound
        let bs = BlackScholes::new(BlackScholesParams {
            dividend: 0.01,
            spot: 1.0,
            strike: 1.0,
            ..BlackScholesParams::reference()
        })
        .unwrap();
        let c = DbsdeConfig {
            activation: Activation::Tanh,
            batch_size: 8,
            ..small_config(3, 1)
        };
        let err = rollout_fd_error(&bs, &c);
        assert!(err < 1e-4, "black-scholes {err}");
    }

    #[test]
    fn one_step_moves_y0_and_z0() {
        let p = Burgers::new(BurgersParams::new(2, 1.0, 0.25)).unwrap();
        let c = small_config(3, 1);
        let before = DbsdeModel::init(&p, &c).unwrap();
        let mut after = None;
        train_with_observer(&p, &c, |s| after = Some(s.model.clone())).unwrap();
        let after = after.unwrap();
        assert_ne!(before.y0, after.y0);
        assert!(before.z0.iter().zip(&after.z0).all(|(a, b)| a != b));
    }

    #[test]
    fn training_reduces_loss() {
        let p = FnProblem::new(1, 1.0).terminal(|x| 2.0 * x[0] + 1.0);
        let c = DbsdeConfig {
            batch_size: 32,
            ..small_config(4, 200)
        };
        let mut losses = Vec::new();
        train_with_observer(&p, &c, |s| losses.push(s.loss)).unwrap();
        assert_eq!(losses.len(), 200);
        let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = losses[190..].iter().sum::<f64>() / 10.0;
        assert!(tail < head, "{head} -> {tail}");
    }

    #[test]
    fn zero_driver_recovers_mean_terminal() {
        // g(x) = x, a ≡ 0, b ≡ 1: Y₀ = E[X_T] = x₀
        let p = FnProblem::new(1, 1.0).initial(vec![0.5]).terminal(|x| x[0]);
        let c = DbsdeConfig {
            batch_size: 64,
            y0_init_range: Some((0.0, 1.0)),
            ..small_config(4, 600)
        };
        let r = train(&p, &c).unwrap();
        assert!(!r.diverged);
        assert!((r.y0 - 0.5).abs() < 0.05, "y0 = {}", r.y0);
        assert!((r.z0[0] - 1.0).abs() < 0.1, "z0 = {:?}", r.z0);
    }

    #[test]
    fn training_is_deterministic() {
        let p = Burgers::new(BurgersParams::new(2, 1.0, 0.25)).unwrap();
        let c = small_config(4, 30);
        let a = train(&p, &c).unwrap();
        let b = train(&p, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.y0.to_bits(), b.y0.to_bits());
    }

    #[test]
    fn divergence_returns_last_finite_iterate() {
        // the driver blows up once Y leaves a narrow band
        let p = FnProblem::new(1, 1.0)
            .terminal(|x| 1e3 * x[0])
            .driver(
                |_, _, y, _| if y.abs() > 50.0 { f64::NAN } else { 0.0 },
                |_, _, _, _, dz| {
                    dz.fill(0.0);
                    0.0
                },
            );
        let c = DbsdeConfig {
            lr: LrSchedule::constant(0.5),
            ..small_config(3, 500)
        };
        let r = train(&p, &c).unwrap();
        assert!(r.diverged);
        assert!(r.steps_run < 500);
        assert!(r.y0.is_finite() && r.z0.iter().all(|z| z.is_finite()));
        assert!(r.final_loss.is_finite());
        assert!(r.eval_loss.is_none());
    }

    #[test]
    fn ensemble_is_order_stable_and_worker_independent() {
        let p = Burgers::new(BurgersParams::new(2, 1.0, 0.25)).unwrap();
        let c = small_config(3, 10);
        let a = ensemble_solve(&p, &c, 4).unwrap();
        let b = ensemble_solve_parallel(&p, &c, 4, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let seeds: Vec<u64> = a.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, (0..4).map(|q| run_seed(5, q)).collect::<Vec<_>>());

        let single = ensemble_solve(&p, &c, 1).unwrap();
        let direct = train(&p, &DbsdeConfig { seed: run_seed(5, 0), ..c }).unwrap();
        assert_eq!(single, vec![direct]);
    }

    #[test]
    fn rejects_bad_configs() {
        let p = FnProblem::new(1, 1.0);
        for c in [
            DbsdeConfig { batch_size: 1, ..small_config(3, 1) },
            DbsdeConfig { train_steps: 0, ..small_config(3, 1) },
            DbsdeConfig { time_steps: 0, ..small_config(3, 1) },
            DbsdeConfig { y0_init_range: Some((1.0, 0.0)), ..small_config(3, 1) },
        ] {
            assert!(matches!(train(&p, &c), Err(Error::Config(_))));
        }
        assert!(ensemble_solve(&p, &small_config(3, 1), 0).is_err());
    }
}
