//! Heteroscedastic Gaussian regression: a network maps normalized features
//! to `(μ̂, σ̂)` for `Y₀` (2 outputs) or for each component of `Z₀` (2d
//! outputs), trained on the negative log-likelihood plus an L2 penalty on
//! the weight matrices.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Activation, AdamState, LrSchedule, Mlp, MlpSpec, OutputTransform};
use crate::parallel::par_map;
use crate::rng::{self, tag};
use crate::uq_data::UqDataset;

/// Added to the softplus head so `σ̂` stays away from zero.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Feature STDs below this are treated as constant and replaced by 1.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Y,
    Z,
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" | "Y" => Ok(Target::Y),
            "z" | "Z" => Ok(Target::Z),
            other => Err(Error::Config(format!("unknown target {other:?} (expected y or z)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Column means and population STDs of `x`.
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (n, k) = (x.rows(), x.cols());
        if n == 0 {
            return Err(Error::Config("cannot fit a normalizer on no rows".into()));
        }
        let mut mean = vec![0.0; k];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; k];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd < STD_FLOOR {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "Normalizer::transform",
                expected: self.dim(),
                got: x.cols(),
            });
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

fn check_nll_shapes(t: &Matrix, mu: &Matrix, sigma: &Matrix) -> Result<()> {
    for (m, context) in [(mu, "nll μ̂"), (sigma, "nll σ̂")] {
        if m.rows() != t.rows() || m.cols() != t.cols() {
            return Err(Error::DimensionMismatch {
                context,
                expected: t.rows() * t.cols(),
                got: m.rows() * m.cols(),
            });
        }
    }
    if t.rows() == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    if let Some(i) = sigma.as_slice().iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Contract(format!("σ̂ must be positive (entry {i} is {})", sigma.as_slice()[i])));
    }
    Ok(())
}

/// Batch mean of `Σₖ log σ̂ₖ + ½((tₖ − μ̂ₖ)/σ̂ₖ)²` with its gradients w.r.t. `μ̂` and `σ̂`.
pub fn nll_with_grad(t: &Matrix, mu: &Matrix, sigma: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    check_nll_shapes(t, mu, sigma)?;
    let b = t.rows() as f64;
    let mut loss = 0.0;
    let mut d_mu = Matrix::zeros(t.rows(), t.cols());
    let mut d_sigma = Matrix::zeros(t.rows(), t.cols());
    for (k, ((tv, mv), sv)) in t
        .as_slice()
        .iter()
        .zip(mu.as_slice())
        .zip(sigma.as_slice())
        .enumerate()
    {
        let r = (tv - mv) / sv;
        loss += sv.ln() + 0.5 * r * r;
        d_mu.as_mut_slice()[k] = -r / sv / b;
        d_sigma.as_mut_slice()[k] = (1.0 - r * r) / sv / b;
    }
    Ok((loss / b, d_mu, d_sigma))
}

/// NLL for `Y₀`; the additive constant is omitted.
pub fn nll_y(y: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    let col = |v: &[f64]| Matrix::from_vec(v.len(), 1, v.to_vec());
    nll_with_grad(&col(y)?, &col(mu)?, &col(sigma)?).map(|(l, _, _)| l)
}

/// NLL for `Z₀` under a diagonal covariance; rows are samples.
pub fn nll_z(z: &Matrix, mu: &Matrix, sigma: &Matrix) -> Result<f64> {
    nll_with_grad(z, mu, sigma).map(|(l, _, _)| l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UqNetConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub batch_norm: bool,
    pub batch_size: usize,
    pub l2: f64,
    pub rates: Vec<f64>,
    /// Epochs spent at each rate.
    pub epochs: Vec<u64>,
    pub seed: u64,
}

impl Default for UqNetConfig {
    fn default() -> Self {
        Self::published(Target::Y)
    }
}

impl UqNetConfig {
    /// `η = 128`, `L = 2`, `B = 128`, five rate segments; `λ_y = 3·10⁻²`, `λ_z = 10⁻²`.
    pub fn published(target: Target) -> Self {
        Self {
            hidden_width: 128,
            hidden_layers: 2,
            activation: Activation::Relu,
            batch_norm: false,
            batch_size: 128,
            l2: match target {
                Target::Y => 3e-2,
                Target::Z => 1e-2,
            },
            rates: vec![1e-3, 3e-4, 1e-4, 3e-5, 1e-5],
            epochs: vec![1000, 100, 100, 100, 100],
            seed: 0,
        }
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::from_segments(&self.epochs, &self.rates)
    }

    pub fn total_epochs(&self) -> u64 {
        self.epochs.iter().sum()
    }

    pub fn net_spec(&self, inputs: usize, components: usize) -> Result<MlpSpec> {
        let out = 2 * components;
        if self.hidden_layers > 0 && self.hidden_width <= out {
            return Err(Error::Config(format!(
                "hidden width {} must exceed the output dimension {out}",
                self.hidden_width
            )));
        }
        let mut transforms = vec![OutputTransform::Identity; components];
        transforms.extend(vec![OutputTransform::Softplus; components]);
        let spec = MlpSpec::new(
            inputs,
            out,
            self.hidden_layers,
            self.hidden_width,
            self.activation,
            self.batch_norm,
        )
        .with_output_transforms(transforms);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::Config("L2 weight must be non-negative".into()));
        }
        self.schedule()?.validate()
    }
}

/// Features and targets, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct UqData {
    pub x: Matrix,
    pub t: Matrix,
}

impl UqData {
    pub fn new(x: Matrix, t: Matrix) -> Result<Self> {
        if x.rows() != t.rows() {
            return Err(Error::DimensionMismatch {
                context: "UqData rows",
                expected: x.rows(),
                got: t.rows(),
            });
        }
        if !x.all_finite() || !t.all_finite() {
            return Err(Error::Contract("UQ features and targets must be finite".into()));
        }
        Ok(Self { x, t })
    }

    /// Rows `indices` of a dataset with the first-run `y` or `z` as target.
    pub fn from_dataset(dataset: &UqDataset, indices: &[usize], target: Target) -> Result<Self> {
        let mut xs = Vec::with_capacity(indices.len());
        let mut ts = Vec::with_capacity(indices.len());
        for &i in indices {
            let r = dataset
                .records
                .get(i)
                .ok_or_else(|| Error::Config(format!("record {i} missing")))?;
            xs.push(r.x.clone());
            ts.push(match target {
                Target::Y => vec![r.y],
                Target::Z => r.z.clone(),
            });
        }
        Self::new(Matrix::from_rows(&xs)?, Matrix::from_rows(&ts)?)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// NLL on the full training split after each epoch.
    pub train: Vec<f64>,
    /// NLL on the validation split after each epoch (empty without one).
    pub valid: Vec<f64>,
}

/// Point prediction for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqModel {
    pub target: Target,
    pub net: Mlp,
    pub normalizer: Normalizer,
    pub config: UqNetConfig,
    pub log: TrainingLog,
}

impl UqModel {
    pub fn components(&self) -> usize {
        self.net.spec.output_dim / 2
    }

    /// `(μ̂, σ̂)` for each row of `x`, each `rows × components`.
    pub fn predict_batch(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let out = self.net.forward_eval(&self.normalizer.transform(x)?)?;
        Ok(split_heads(&out))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let (mu, sigma) = self.predict_batch(&Matrix::from_vec(1, x.len(), x.to_vec())?)?;
        Ok(Prediction {
            mu: mu.into_vec(),
            sigma: sigma.into_vec(),
        })
    }

    /// NLL of the model on `data` (no regularization).
    pub fn nll(&self, data: &UqData) -> Result<f64> {
        let (mu, sigma) = self.predict_batch(&data.x)?;
        nll_with_grad(&data.t, &mu, &sigma).map(|(l, _, _)| l)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

fn split_heads(out: &Matrix) -> (Matrix, Matrix) {
    let c = out.cols() / 2;
    let mut mu = Matrix::zeros(out.rows(), c);
    let mut sigma = Matrix::zeros(out.rows(), c);
    for i in 0..out.rows() {
        let row = out.row(i);
        mu.row_mut(i).copy_from_slice(&row[..c]);
        for (s, v) in sigma.row_mut(i).iter_mut().zip(&row[c..]) {
            *s = v + SIGMA_FLOOR;
        }
    }
    (mu, sigma)
}

/// Regularized loss on one batch and `∂loss/∂output`.
fn batch_loss(net: &Mlp, out: &Matrix, t: &Matrix, l2: f64) -> Result<(f64, Matrix)> {
    let (mu, sigma) = split_heads(out);
    let (nll, d_mu, d_sigma) = nll_with_grad(t, &mu, &sigma)?;
    let c = t.cols();
    let mut grad = Matrix::zeros(out.rows(), 2 * c);
    for i in 0..out.rows() {
        let g = grad.row_mut(i);
        g[..c].copy_from_slice(d_mu.row(i));
        g[c..].copy_from_slice(d_sigma.row(i));
    }
    Ok((nll + l2 * net.params.weight_sq_norm(), grad))
}

/// Mini-batch Adam on `train`; `valid` is only monitored.
pub fn fit(train: &UqData, valid: Option<&UqData>, target: Target, config: &UqNetConfig) -> Result<UqModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    if target == Target::Y && train.t.cols() != 1 {
        return Err(Error::DimensionMismatch {
            context: "Y-model targets",
            expected: 1,
            got: train.t.cols(),
        });
    }
    let components = train.t.cols();
    let spec = config.net_spec(train.x.cols(), components)?;
    let normalizer = Normalizer::fit(&train.x)?;
    let xn = normalizer.transform(&train.x)?;
    let mut net = Mlp::xavier_normal(spec, rng::tagged(config.seed, tag::INIT, 0))?;
    let mut adam = AdamState::for_tensors(&net.params.trainable());
    let schedule = config.schedule()?;
    let mut model = UqModel {
        target,
        net: net.clone(),
        normalizer,
        config: config.clone(),
        log: TrainingLog::default(),
    };

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let diverged = |epoch: u64, log: &TrainingLog| Error::TrainingDiverged {
        epoch,
        train_loss: log.train.clone(),
        valid_loss: log.valid.clone(),
    };
    for epoch in 1..=schedule.total() {
        let lr = schedule.rate(epoch);
        let mut rng = rng::stream(rng::tagged(config.seed, tag::SHUFFLE, epoch));
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            if config.batch_norm && batch.len() < 2 {
                continue;
            }
            let xb = xn.select_rows(batch);
            let tb = train.t.select_rows(batch);
            let (out, cache) = net.forward_train(&xb)?;
            let (loss, grad) = batch_loss(&net, &out, &tb, config.l2)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, &model.log));
            }
            let mut grads = net.backward(&cache, &grad)?;
            grads.add_l2(&net.params, config.l2);
            let g = grads.tensors();
            if adam.step(&mut net.params.trainable_mut(), &g, lr).is_err() {
                return Err(diverged(epoch, &model.log));
            }
        }
        model.net = net.clone();
        let train_nll = model.nll(train)?;
        if !train_nll.is_finite() {
            return Err(diverged(epoch, &model.log));
        }
        model.log.train.push(train_nll);
        if let Some(v) = valid {
            model.log.valid.push(model.nll(v)?);
        }
    }
    Ok(model)
}

/// Trains on the dataset's split (train rows fit, valid rows monitored).
pub fn train_uq(dataset: &UqDataset, target: Target, config: &UqNetConfig) -> Result<UqModel> {
    let split = dataset
        .split
        .as_ref()
        .ok_or_else(|| Error::Contract("dataset has no train/valid/test split".into()))?;
    let train = UqData::from_dataset(dataset, &split.train, target)?;
    let valid = if split.valid.is_empty() {
        None
    } else {
        Some(UqData::from_dataset(dataset, &split.valid, target)?)
    };
    fit(&train, valid.as_ref(), target, config)
}

/// Seed of ensemble member `k`.
pub fn model_seed(base: u64, k: usize) -> u64 {
    rng::tagged(base, tag::MODEL, k as u64)
}

/// `r` independently seeded fits. Each entry is that model's outcome, so a
/// diverged member does not discard the others.
pub fn ensemble_of_models(
    dataset: &UqDataset,
    target: Target,
    config: &UqNetConfig,
    r: usize,
    workers: usize,
) -> Result<Vec<Result<UqModel>>> {
    if r == 0 {
        return Err(Error::Config("R must be at least 1".into()));
    }
    config.validate()?;
    let ks: Vec<usize> = (0..r).collect();
    par_map(&ks, workers, |&k| {
        let cfg = UqNetConfig {
            seed: model_seed(config.seed, k),
            ..config.clone()
        };
        train_uq(dataset, target, &cfg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    fn small_config(epochs: u64) -> UqNetConfig {
        UqNetConfig {
            hidden_width: 16,
            hidden_layers: 2,
            batch_size: 64,
            l2: 0.0,
            rates: vec![1e-2, 1e-3],
            epochs: vec![epochs, epochs / 4],
            ..UqNetConfig::default()
        }
    }

    /// `y = sin x + ε`, `ε ~ N(0, (0.1 + 0.2x²)²)`, `x ∈ [−1, 1]`.
    fn hetero_data(n: usize, seed: u64) -> (UqData, Vec<f64>) {
        let mut rng = rng::stream(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.random_range(-1.0..1.0);
            let e: f64 = StandardNormal.sample(&mut rng);
            xs.push(x);
            ys.push(x.sin() + (0.1 + 0.2 * x * x) * e);
        }
        (UqData::new(m(n, 1, &xs), m(n, 1, &ys)).unwrap(), xs)
    }

    #[test]
    fn nll_trivial_values() {
        assert_eq!(nll_y(&[0.3], &[0.3], &[1.0]).unwrap(), 0.0);
        assert_eq!(nll_y(&[1.0], &[0.0], &[1.0]).unwrap(), 0.5);
        let z = m(1, 2, &[1.0, 2.0]);
        let l = nll_z(&z, &m(1, 2, &[0.0, 0.0]), &m(1, 2, &[1.0, 2.0])).unwrap();
        assert!((l - (2f64.ln() + 1.0)).abs() < 1e-15);
        assert_eq!(nll_z(&z, &z, &m(1, 2, &[1.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn nll_z_in_one_dimension_is_nll_y() {
        let (y, mu, s) = ([0.1, -2.0, 3.0], [0.0, 0.5, 2.0], [0.3, 1.5, 0.7]);
        assert_eq!(
            nll_y(&y, &mu, &s).unwrap(),
            nll_z(&m(3, 1, &y), &m(3, 1, &mu), &m(3, 1, &s)).unwrap()
        );
    }

    #[test]
    fn nll_rejects_non_positive_sigma() {
        assert!(matches!(nll_y(&[1.0], &[0.0], &[0.0]), Err(Error::Contract(_))));
        assert!(matches!(nll_y(&[1.0], &[0.0], &[-1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let t = m(3, 2, &[0.4, -1.0, 2.0, 0.1, -0.3, 0.8]);
        let mu = m(3, 2, &[0.1, -0.5, 1.2, 0.0, 0.3, 1.1]);
        let sigma = m(3, 2, &[0.5, 1.3, 0.9, 0.2, 2.0, 0.7]);
        let (_, d_mu, d_sigma) = nll_with_grad(&t, &mu, &sigma).unwrap();
        let h = 1e-6;
        for k in 0..6 {
            for (which, analytic) in [(0, &d_mu), (1, &d_sigma)] {
                let bump = |delta: f64| {
                    let (mut a, mut b) = (mu.clone(), sigma.clone());
                    let target = if which == 0 { &mut a } else { &mut b };
                    target.as_mut_slice()[k] += delta;
                    nll_z(&t, &a, &b).unwrap()
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = analytic.as_slice()[k];
                assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-3), "{k} {which}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn normalizer_standardizes_training_columns() {
        let x = m(4, 3, &[1.0, 5.0, 0.3, 2.0, 5.0, 0.1, 3.0, 5.0, 0.7, 10.0, 5.0, 0.2]);
        let norm = Normalizer::fit(&x).unwrap();
        assert_eq!(norm.std[1], 1.0);
        let xn = norm.transform(&x).unwrap();
        for c in [0, 2] {
            let col = xn.column(c);
            let mean = col.iter().sum::<f64>() / 4.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9 && (var.sqrt() - 1.0).abs() < 1e-9);
        }
        assert!(xn.column(1).iter().all(|v| *v == 0.0));
        assert!(norm.transform(&m(1, 2, &[0.0, 0.0])).is_err());
    }

    #[test]
    fn full_network_gradient_matches_finite_differences() {
        let cfg = UqNetConfig {
            hidden_width: 5,
            hidden_layers: 2,
            activation: Activation::Tanh,
            l2: 0.05,
            ..UqNetConfig::default()
        };
        let spec = cfg.net_spec(3, 2).unwrap();
        let mut net = Mlp::xavier_normal(spec, 4).unwrap();
        let x = m(4, 3, &[0.1, -0.4, 0.9, 1.2, 0.3, -0.7, -0.5, 0.8, 0.2, 0.0, -1.1, 0.6]);
        let t = m(4, 2, &[0.3, -0.2, 1.1, 0.5, -0.4, 0.9, 0.2, 0.0]);
        let (out, cache) = net.forward_train(&x).unwrap();
        let (_, grad) = batch_loss(&net, &out, &t, cfg.l2).unwrap();
        let mut grads = net.backward(&cache, &grad).unwrap();
        grads.add_l2(&net.params, cfg.l2);
        let analytic = grads.flat();
        let theta = net.params.flat();
        let loss_at = |p: &[f64]| {
            let mut n2 = net.clone();
            n2.params.set_flat(p).unwrap();
            let out = n2.forward_eval(&x).unwrap();
            batch_loss(&n2, &out, &t, cfg.l2).unwrap().0
        };
        let h = 1e-6;
        for k in 0..theta.len() {
            let mut p = theta.clone();
            p[k] += h;
            let up = loss_at(&p);
            p[k] -= 2.0 * h;
            let down = loss_at(&p);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - analytic[k]).abs() / analytic[k].abs().max(1e-4);
            assert!(err < 1e-3, "param {k}: fd {fd} vs {}", analytic[k]);
        }
    }

    #[test]
    fn width_must_exceed_output_dim() {
        let cfg = UqNetConfig {
            hidden_width: 4,
            ..UqNetConfig::default()
        };
        assert!(cfg.net_spec(3, 2).is_err());
        assert!(cfg.net_spec(3, 1).is_ok());
    }

    #[test]
    fn learns_heteroscedastic_noise() {
        let (train, _) = hetero_data(2000, 1);
        let (test, xs) = hetero_data(500, 2);
        let model = fit(&train, Some(&test), Target::Y, &small_config(200)).unwrap();
        let (mu, sigma) = model.predict_batch(&test.x).unwrap();
        let true_sigma: Vec<f64> = xs.iter().map(|x| 0.1 + 0.2 * x * x).collect();
        let rho = crate::metrics::pearson(sigma.as_slice(), &true_sigma).unwrap();
        assert!(rho > 0.9, "σ̂ correlation {rho}");
        let mae = xs
            .iter()
            .zip(mu.as_slice())
            .map(|(x, m)| (m - x.sin()).abs())
            .sum::<f64>()
            / xs.len() as f64;
        assert!(mae < 0.05, "μ̂ MAE {mae}");
        assert_eq!(model.log.train.len(), 250);
        assert_eq!(model.log.valid.len(), 250);
    }

    #[test]
    fn sigma_is_positive_everywhere_and_prediction_is_pure() {
        let (train, _) = hetero_data(300, 3);
        let model = fit(&train, None, Target::Y, &small_config(8)).unwrap();
        let mut rng = rng::stream(5);
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random_range(-50.0..50.0)).collect();
        let (_, sigma) = model.predict_batch(&m(xs.len(), 1, &xs)).unwrap();
        assert!(sigma.as_slice().iter().all(|s| *s > 0.0));
        let a = model.predict(&[0.25]).unwrap();
        assert_eq!(a, model.predict(&[0.25]).unwrap());
        assert!(model.predict(&[0.25, 1.0]).is_err());
    }

    #[test]
    fn same_seed_same_model() {
        let (train, _) = hetero_data(300, 3);
        let cfg = small_config(6);
        assert_eq!(
            fit(&train, None, Target::Y, &cfg).unwrap(),
            fit(&train, None, Target::Y, &cfg).unwrap()
        );
    }

    #[test]
    fn heavy_l2_shrinks_weights() {
        let (train, _) = hetero_data(300, 3);
        let free = fit(&train, None, Target::Y, &small_config(20)).unwrap();
        let tight = fit(&train, None, Target::Y, &UqNetConfig { l2: 1e3, ..small_config(20) }).unwrap();
        assert!(tight.net.params.weight_sq_norm() < free.net.params.weight_sq_norm());
    }

    #[test]
    fn constant_input_recovers_biased_sample_std() {
        let n = 10_000;
        let mut rng = rng::stream(8);
        let ys: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                2.0 + 0.5 * e
            })
            .collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let biased = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let data = UqData::new(Matrix::filled(n, 1, 0.3), m(n, 1, &ys)).unwrap();
        let cfg = UqNetConfig {
            hidden_width: 8,
            hidden_layers: 1,
            batch_size: n,
            l2: 0.0,
            rates: vec![5e-2, 5e-3],
            epochs: vec![600, 200],
            ..UqNetConfig::default()
        };
        let model = fit(&data, None, Target::Y, &cfg).unwrap();
        let p = model.predict(&[0.3]).unwrap();
        assert!((p.sigma[0] / biased - 1.0).abs() < 0.02, "{} vs {biased}", p.sigma[0]);
        assert!((p.mu[0] - mean).abs() < 0.02);
    }

    #[test]
    fn z_model_has_per_component_heads() {
        let (a, _) = hetero_data(200, 4);
        let (b, _) = hetero_data(200, 5);
        let mut t = Matrix::zeros(200, 2);
        for i in 0..200 {
            t.row_mut(i).copy_from_slice(&[a.t.get(i, 0), b.t.get(i, 0)]);
        }
        let data = UqData::new(a.x.clone(), t).unwrap();
        let model = fit(&data, None, Target::Z, &small_config(4)).unwrap();
        assert_eq!(model.components(), 2);
        let p = model.predict(&[0.1]).unwrap();
        assert_eq!((p.mu.len(), p.sigma.len()), (2, 2));
        assert!(fit(&data, None, Target::Y, &small_config(4)).is_err());
    }

    #[test]
    fn divergence_reports_partial_log() {
        let (train, _) = hetero_data(200, 6);
        let cfg = UqNetConfig {
            rates: vec![1e-2, 1e300],
            epochs: vec![2, 5],
            ..small_config(8)
        };
        match fit(&train, None, Target::Y, &cfg) {
            Err(Error::TrainingDiverged { epoch, train_loss, .. }) => {
                assert!(epoch >= 3);
                assert_eq!(train_loss.len() as u64, epoch - 1);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let (train, _) = hetero_data(200, 7);
        let model = fit(&train, None, Target::Y, &small_config(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = UqModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(&[0.4]).unwrap(), model.predict(&[0.4]).unwrap());
    }
}
