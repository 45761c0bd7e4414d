use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spec::{Activation, MlpSpec};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::rng;

/// Variance offset inside batch normalization.
pub const BN_EPSILON: f64 = 1e-6;
/// Exponential-moving-average momentum of the running statistics.
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; the network is left untouched.
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn identity(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

/// Affine layer `x ↦ W x + b`, optionally followed by batch normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub norm: Option<BatchNorm>,
}

impl Layer {
    /// `W h + b` on a feature-major batch (`in_dim × m` to `out_dim × m`).
    fn affine(&self, input: &Matrix) -> Matrix {
        let m = input.cols();
        let mut out = Matrix::zeros(self.out_dim, m);
        for o in 0..self.out_dim {
            let w = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let row = out.row_mut(o);
            row.fill(self.bias[o]);
            for (k, &wk) in w.iter().enumerate() {
                axpy(wk, input.row(k), row);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    /// Bumped on every mutable access; forward caches remember it.
    #[serde(skip)]
    version: u64,
}

impl PartialEq for MlpParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers, version: 0 }
    }

    /// Zero-mean normal weights with variance `2 / (fan_in + fan_out)`, zero
    /// biases, identity batch norm. Weights are drawn layer by layer in
    /// row-major order from a single stream.
    pub fn xavier_normal(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed);
        let n_layers = spec.hidden_layers + 1;
        let layers = spec
            .layer_dims()
            .into_iter()
            .enumerate()
            .map(|(l, (fan_in, fan_out))| {
                let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        std * z
                    })
                    .collect();
                let hidden = l + 1 < n_layers;
                Layer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights,
                    bias: vec![0.0; fan_out],
                    norm: (hidden && spec.batch_norm).then(|| BatchNorm::identity(fan_out)),
                }
            })
            .collect();
        Ok(Self::new(layers))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Trainable tensors: per layer weights, bias, then gamma and beta when normalized.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &mut self.layers {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
            if let Some(bn) = &mut layer.norm {
                out.push(bn.gamma.as_mut_slice());
                out.push(bn.beta.as_mut_slice());
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &self.layers {
            out.push(layer.weights.as_slice());
            out.push(layer.bias.as_slice());
            if let Some(bn) = &layer.norm {
                out.push(bn.gamma.as_slice());
                out.push(bn.beta.as_slice());
            }
        }
        out
    }

    pub fn trainable_len(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Trainable parameters concatenated in [`Self::trainable`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.trainable().concat()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.trainable_len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "MlpParams::set_flat",
                expected,
                got: values.len(),
            });
        }
        let mut offset = 0;
        for t in self.trainable_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// Sum of squared weight-matrix entries (biases and batch norm excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .map(|w| w * w)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
}

/// Gradients congruent to [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                    gamma: l.norm.as_ref().map(|n| vec![0.0; n.gamma.len()]),
                    beta: l.norm.as_ref().map(|n| vec![0.0; n.beta.len()]),
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &self.layers {
            out.push(l.weights.as_slice());
            out.push(l.bias.as_slice());
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.as_slice());
                out.push(b.as_slice());
            }
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Adds the gradient of `λ Σ W²` over all weight matrices.
    pub fn add_l2(&mut self, params: &MlpParams, lambda: f64) {
        for (g, p) in self.layers.iter_mut().zip(&params.layers) {
            for (gw, w) in g.weights.iter_mut().zip(&p.weights) {
                *gw += 2.0 * lambda * w;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Intermediates of a training-mode forward pass, stored feature-major
/// (`width × m`).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    /// Input of each layer.
    inputs: Vec<Matrix>,
    /// Argument of the activation (hidden layers) or the output transform (last layer).
    activation_args: Vec<Matrix>,
    /// Normalized pre-activations `x̂` and `1/√(σ²+ε)` for batch-normalized layers.
    normalized: Vec<Option<(Matrix, Vec<f64>)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if params.layers.len() != dims.len() {
            return Err(Error::DimensionMismatch {
                context: "Mlp::new layers",
                expected: dims.len(),
                got: params.layers.len(),
            });
        }
        for (layer, (i, o)) in params.layers.iter().zip(dims) {
            if layer.in_dim != i
                || layer.out_dim != o
                || layer.weights.len() != i * o
                || layer.bias.len() != o
            {
                return Err(Error::Config("layer shapes inconsistent with spec".into()));
            }
            if let Some(bn) = &layer.norm {
                if bn.running_var.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Config("running variance must be positive".into()));
                }
            }
        }
        Ok(Self { spec, params })
    }

    pub fn xavier_normal(spec: MlpSpec, seed: u64) -> Result<Self> {
        let params = MlpParams::xavier_normal(&spec, seed)?;
        Ok(Self { spec, params })
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                context: "Mlp input width",
                expected: self.spec.input_dim,
                got: batch.cols(),
            });
        }
        Ok(())
    }

    fn last(&self) -> usize {
        self.params.layers.len() - 1
    }

    /// Forward pass in either mode. Training mode updates the running statistics.
    pub fn forward(&mut self, batch: &Matrix, mode: Mode) -> Result<Matrix> {
        match mode {
            Mode::Train => self.forward_train(batch).map(|(out, _)| out),
            Mode::Eval => self.forward_eval(batch),
        }
    }

    /// Inference with running statistics. Pure in `(params, batch)`.
    pub fn forward_eval(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let act = self.spec.activation;
        let last = self.last();
        let mut h = batch.transpose();
        for (l, layer) in self.params.layers.iter().enumerate() {
            let mut z = layer.affine(&h);
            if l == last {
                apply_output(&mut z, &self.spec);
                return Ok(z.transpose());
            }
            if let Some(bn) = &layer.norm {
                for k in 0..z.rows() {
                    let (mu, sd) = (bn.running_mean[k], (bn.running_var[k] + BN_EPSILON).sqrt());
                    let (g, b) = (bn.gamma[k], bn.beta[k]);
                    for v in z.row_mut(k) {
                        *v = g * ((*v - mu) / sd) + b;
                    }
                }
            }
            apply_activation(&mut z, act);
            h = z;
        }
        unreachable!("network has at least one layer")
    }

    /// Training-mode forward pass returning the output and the cache needed by
    /// [`Mlp::backward`].
    pub fn forward_train(&mut self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        self.check_input(batch)?;
        let m = batch.rows();
        if self.spec.batch_norm && m < 2 {
            return Err(Error::Config(
                "batch normalization needs at least 2 samples per training batch".into(),
            ));
        }
        let act = self.spec.activation;
        let last = self.last();
        self.params.version += 1;
        let n_layers = self.params.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut activation_args = Vec::with_capacity(n_layers);
        let mut normalized = Vec::with_capacity(n_layers);
        let mut h = batch.transpose();
        for (l, layer) in self.params.layers.iter_mut().enumerate() {
            let mut z = layer.affine(&h);
            inputs.push(h);
            if l == last {
                let arg = z.clone();
                apply_output(&mut z, &self.spec);
                activation_args.push(arg);
                normalized.push(None);
                let cache = ForwardCache {
                    version: self.params.version,
                    inputs,
                    activation_args,
                    normalized,
                };
                return Ok((z.transpose(), cache));
            }
            let norm = match &mut layer.norm {
                Some(bn) => Some(batch_normalize(&mut z, bn)),
                None => None,
            };
            normalized.push(norm);
            let mut a = z.clone();
            apply_activation(&mut a, act);
            activation_args.push(z);
            h = a;
        }
        unreachable!("network has at least one layer")
    }

    /// Gradients of a scalar loss given `∂loss/∂output` for the batch seen by
    /// the forward pass that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Matrix) -> Result<MlpGrads> {
        if cache.version != self.params.version {
            return Err(Error::StaleCache);
        }
        let m = cache.inputs[0].cols();
        if loss_grad.rows() != m || loss_grad.cols() != self.spec.output_dim {
            return Err(Error::DimensionMismatch {
                context: "Mlp::backward loss_grad",
                expected: m * self.spec.output_dim,
                got: loss_grad.rows() * loss_grad.cols(),
            });
        }
        let act = self.spec.activation;
        let last = self.last();
        let mut grads = MlpGrads::zeros_like(&self.params);

        // gradient w.r.t. the activation argument of the current layer, feature-major
        let mut delta = loss_grad.transpose();
        {
            let arg = &cache.activation_args[last];
            for (k, transform) in self.spec.output_transforms.iter().enumerate() {
                for (d, &x) in delta.row_mut(k).iter_mut().zip(arg.row(k)) {
                    *d *= transform.derivative(x);
                }
            }
        }

        for l in (0..=last).rev() {
            let layer = &self.params.layers[l];
            let g = &mut grads.layers[l];

            if l != last {
                for (d, &x) in delta
                    .as_mut_slice()
                    .iter_mut()
                    .zip(cache.activation_args[l].as_slice())
                {
                    *d *= act.derivative(x);
                }
                if let (Some(bn), Some((xhat, inv_std))) = (&layer.norm, &cache.normalized[l]) {
                    delta = batch_norm_backward(&delta, xhat, inv_std, bn, g);
                }
            }

            // delta is now ∂loss/∂(W h + b)
            let input = &cache.inputs[l];
            for o in 0..layer.out_dim {
                let d = delta.row(o);
                g.bias[o] += d.iter().sum::<f64>();
                let gw = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (k, w) in gw.iter_mut().enumerate() {
                    *w += dot(d, input.row(k));
                }
            }
            if l > 0 {
                let mut prev = Matrix::zeros(layer.in_dim, m);
                for o in 0..layer.out_dim {
                    let w = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let d = delta.row(o);
                    for (k, &wk) in w.iter().enumerate() {
                        axpy(wk, d, prev.row_mut(k));
                    }
                }
                delta = prev;
            }
        }
        Ok(grads)
    }
}

fn apply_activation(z: &mut Matrix, act: Activation) {
    for v in z.as_mut_slice() {
        *v = act.apply(*v);
    }
}

fn apply_output(z: &mut Matrix, spec: &MlpSpec) {
    for (k, transform) in spec.output_transforms.iter().enumerate() {
        for v in z.row_mut(k) {
            *v = transform.apply(*v);
        }
    }
}

/// Normalizes the feature-major `z` in place with batch statistics and
/// updates the running statistics. Returns `(x̂, 1/√(σ²+ε))`.
fn batch_normalize(z: &mut Matrix, bn: &mut BatchNorm) -> (Matrix, Vec<f64>) {
    let (w, m) = (z.rows(), z.cols());
    let mf = m as f64;
    let mut xhat = Matrix::zeros(w, m);
    let mut inv_std = Vec::with_capacity(w);
    for k in 0..w {
        let row = z.row_mut(k);
        let mean = row.iter().sum::<f64>() / mf;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / mf;
        let s = 1.0 / (var + BN_EPSILON).sqrt();
        let (g, b) = (bn.gamma[k], bn.beta[k]);
        for (v, x) in row.iter_mut().zip(xhat.row_mut(k)) {
            *x = (*v - mean) * s;
            *v = g * *x + b;
        }
        inv_std.push(s);
        bn.running_mean[k] = BN_MOMENTUM * bn.running_mean[k] + (1.0 - BN_MOMENTUM) * mean;
        bn.running_var[k] = BN_MOMENTUM * bn.running_var[k] + (1.0 - BN_MOMENTUM) * var;
    }
    (xhat, inv_std)
}

/// Backward through `γ x̂ + β` including the batch-statistics pathway.
/// Accumulates dγ, dβ into `g` and returns ∂loss/∂(pre-normalization).
fn batch_norm_backward(
    delta: &Matrix,
    xhat: &Matrix,
    inv_std: &[f64],
    bn: &BatchNorm,
    g: &mut LayerGrads,
) -> Matrix {
    let (w, m) = (delta.rows(), delta.cols());
    let mf = m as f64;
    let dgamma = g.gamma.as_mut().expect("normalized layer has gamma grads");
    let dbeta = g.beta.as_mut().expect("normalized layer has beta grads");
    let mut out = Matrix::zeros(w, m);
    for k in 0..w {
        let (d, x) = (delta.row(k), xhat.row(k));
        let sum_d: f64 = d.iter().sum();
        let sum_dx = dot(d, x);
        dgamma[k] += sum_dx;
        dbeta[k] += sum_d;
        let gamma = bn.gamma[k];
        let (sum_dxhat, sum_dxhat_xhat) = (gamma * sum_d, gamma * sum_dx);
        let scale = inv_std[k] / mf;
        for ((o, &dv), &xv) in out.row_mut(k).iter_mut().zip(d).zip(x) {
            *o = scale * (mf * dv * gamma - sum_dxhat - xv * sum_dxhat_xhat);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::OutputTransform;
    use rand::Rng;

    fn random_batch(m: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = rng::stream(seed);
        let data = (0..m * d).map(|_| rng.random_range(-1.5..1.5)).collect();
        Matrix::from_vec(m, d, data).unwrap()
    }

    /// Loss `Σ c_ik · out_ik` with fixed random weights `c`.
    fn weighted_sum(out: &Matrix, c: &Matrix) -> f64 {
        out.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
    }

    /// Max relative error of `backward` vs central differences (step 1e-5).
    fn fd_check(spec: MlpSpec, m: usize, seed: u64) -> f64 {
        let mut net = Mlp::xavier_normal(spec.clone(), seed).unwrap();
        // move batch-norm affine params off their identity init
        let mut rng = rng::stream(seed ^ 7);
        for layer in &mut net.params.layers {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.3..0.3);
            }
            if let Some(bn) = &mut layer.norm {
                for g in &mut bn.gamma {
                    *g = rng.random_range(0.5..1.5);
                }
                for b in &mut bn.beta {
                    *b = rng.random_range(-0.5..0.5);
                }
            }
        }
        let x = random_batch(m, spec.input_dim, seed + 1);
        let c = random_batch(m, spec.output_dim, seed + 2);

        let (_, cache) = net.forward_train(&x).unwrap();
        let analytic = net.backward(&cache, &c).unwrap().flat();

        let base = net.params.flat();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let eval = |delta: f64| {
                let mut probe = net.clone();
                let mut p = base.clone();
                p[i] += delta;
                probe.params.set_flat(&p).unwrap();
                let (out, _) = probe.forward_train(&x).unwrap();
                weighted_sum(&out, &c)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        worst
    }

    #[test]
    fn xavier_is_deterministic() {
        let spec = MlpSpec::new(4, 3, 2, 8, Activation::Relu, true);
        let a = MlpParams::xavier_normal(&spec, 9).unwrap();
        let b = MlpParams::xavier_normal(&spec, 9).unwrap();
        let bits = |p: &MlpParams| p.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = MlpParams::xavier_normal(&spec, 10).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn xavier_variance_matches_fan_rule() {
        // 10 layers of 100×100 give 10⁵ weights with target variance 2/200
        let spec = MlpSpec::new(100, 100, 9, 100, Activation::Relu, false);
        let p = MlpParams::xavier_normal(&spec, 3).unwrap();
        let w: Vec<f64> = p.layers.iter().flat_map(|l| l.weights.clone()).collect();
        assert_eq!(w.len(), 100_000);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.01).abs() < 0.001, "variance {var}");
        assert!(p.layers.iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn xavier_initializes_batch_norm_to_identity() {
        let spec = MlpSpec::new(2, 1, 2, 4, Activation::Relu, true);
        let p = MlpParams::xavier_normal(&spec, 0).unwrap();
        for l in &p.layers[..2] {
            let bn = l.norm.as_ref().unwrap();
            assert!(bn.gamma.iter().all(|v| *v == 1.0));
            assert!(bn.beta.iter().all(|v| *v == 0.0));
            assert!(bn.running_mean.iter().all(|v| *v == 0.0));
            assert!(bn.running_var.iter().all(|v| *v == 1.0));
        }
        assert!(p.layers[2].norm.is_none());
        assert_eq!(p.trainable_len(), spec.parameter_count());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = MlpSpec::new(3, 2, 2, 4, Activation::Relu, false);
        let mut net = Mlp::xavier_normal(spec, 1).unwrap();
        let n = net.params.trainable_len();
        net.params.set_flat(&vec![0.0; n]).unwrap();
        let out = net.forward_eval(&random_batch(5, 3, 0)).unwrap();
        assert!(out.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softplus_head_at_zero_is_ln2() {
        let spec = MlpSpec::new(1, 1, 0, 0, Activation::Relu, false)
            .with_output_transforms(vec![OutputTransform::Softplus]);
        let mut net = Mlp::xavier_normal(spec, 1).unwrap();
        net.params.set_flat(&[0.0, 0.0]).unwrap();
        let out = net.forward_eval(&Matrix::filled(1, 1, 3.0)).unwrap();
        assert!((out.get(0, 0) - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn eval_forward_matches_direct_recomputation() {
        let spec = MlpSpec::new(3, 2, 2, 5, Activation::Tanh, true);
        let mut net = Mlp::xavier_normal(spec, 11).unwrap();
        // give the running statistics non-trivial values
        for _ in 0..3 {
            net.forward_train(&random_batch(16, 3, 5)).unwrap();
        }
        let x = random_batch(4, 3, 6);
        let out = net.forward_eval(&x).unwrap();

        for i in 0..4 {
            let mut h: Vec<f64> = x.row(i).to_vec();
            for (l, layer) in net.params.layers.iter().enumerate() {
                let mut z: Vec<f64> = (0..layer.out_dim)
                    .map(|o| {
                        layer.bias[o]
                            + (0..layer.in_dim)
                                .map(|k| layer.weights[o * layer.in_dim + k] * h[k])
                                .sum::<f64>()
                    })
                    .collect();
                if l < 2 {
                    let bn = layer.norm.as_ref().unwrap();
                    for (k, v) in z.iter_mut().enumerate() {
                        *v = bn.gamma[k] * (*v - bn.running_mean[k])
                            / (bn.running_var[k] + BN_EPSILON).sqrt()
                            + bn.beta[k];
                        *v = v.tanh();
                    }
                }
                h = z;
            }
            for k in 0..2 {
                assert!((out.get(i, k) - h[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eval_forward_is_pure() {
        let spec = MlpSpec::new(2, 1, 1, 4, Activation::Relu, true);
        let net = Mlp::xavier_normal(spec, 2).unwrap();
        let x = random_batch(3, 2, 0);
        let before = net.clone();
        let a = net.forward_eval(&x).unwrap();
        let b = net.forward_eval(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(net, before);
    }

    #[test]
    fn train_forward_updates_running_statistics() {
        let spec = MlpSpec::new(2, 1, 1, 4, Activation::Relu, true);
        let mut net = Mlp::xavier_normal(spec, 2).unwrap();
        net.forward(&random_batch(8, 2, 0), Mode::Train).unwrap();
        let bn = net.params.layers[0].norm.as_ref().unwrap();
        assert!(bn.running_mean.iter().any(|v| *v != 0.0));
        assert!(bn.running_var.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn single_sample_training_batch_with_batch_norm_is_rejected() {
        let spec = MlpSpec::new(2, 1, 1, 4, Activation::Relu, true);
        let mut net = Mlp::xavier_normal(spec, 2).unwrap();
        assert!(matches!(
            net.forward_train(&random_batch(1, 2, 0)),
            Err(Error::Config(_))
        ));
        assert!(net.forward_eval(&random_batch(1, 2, 0)).is_ok());
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let spec = MlpSpec::new(2, 1, 1, 4, Activation::Relu, false);
        let net = Mlp::xavier_normal(spec, 2).unwrap();
        assert!(matches!(
            net.forward_eval(&random_batch(3, 3, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences_on_3_3_2() {
        let spec = MlpSpec::new(3, 2, 1, 3, Activation::Tanh, false);
        assert!(fd_check(spec, 5, 1) < 1e-4);
    }

    #[test]
    fn gradients_match_finite_differences_with_batch_norm() {
        let spec = MlpSpec::new(3, 2, 2, 4, Activation::Tanh, true)
            .with_output_transforms(vec![OutputTransform::Identity, OutputTransform::Softplus]);
        assert!(fd_check(spec, 6, 2) < 1e-4);
    }

    #[test]
    fn gradients_match_finite_differences_relu_sin() {
        for (act, seed) in [(Activation::Relu, 3), (Activation::Sin, 4)] {
            let spec = MlpSpec::new(2, 3, 2, 6, act, seed == 3);
            let err = fd_check(spec, 7, seed);
            assert!(err < 1e-3, "{act:?}: {err}");
        }
    }

    #[test]
    fn zero_loss_grad_gives_zero_gradients() {
        let spec = MlpSpec::new(3, 2, 2, 4, Activation::Relu, true);
        let mut net = Mlp::xavier_normal(spec, 1).unwrap();
        let (_, cache) = net.forward_train(&random_batch(4, 3, 0)).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(4, 2)).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn l2_shifts_weight_gradients_by_two_lambda_w() {
        let spec = MlpSpec::new(3, 2, 1, 4, Activation::Relu, false);
        let mut net = Mlp::xavier_normal(spec, 1).unwrap();
        let (_, cache) = net.forward_train(&random_batch(4, 3, 0)).unwrap();
        let c = random_batch(4, 2, 1);
        let plain = net.backward(&cache, &c).unwrap();
        let mut reg = plain.clone();
        reg.add_l2(&net.params, 0.25);
        for ((gp, gr), layer) in plain.layers.iter().zip(&reg.layers).zip(&net.params.layers) {
            for ((a, b), w) in gp.weights.iter().zip(&gr.weights).zip(&layer.weights) {
                assert_eq!(*b, *a + 2.0 * 0.25 * w);
            }
            assert_eq!(gp.bias, gr.bias);
        }
    }

    #[test]
    fn stale_cache_is_a_usage_error() {
        let spec = MlpSpec::new(2, 1, 1, 4, Activation::Relu, false);
        let mut net = Mlp::xavier_normal(spec, 1).unwrap();
        let (_, cache) = net.forward_train(&random_batch(4, 2, 0)).unwrap();
        net.params.trainable_mut()[0][0] += 1.0;
        assert!(matches!(
            net.backward(&cache, &Matrix::zeros(4, 1)),
            Err(Error::StaleCache)
        ));
        let (_, old) = net.forward_train(&random_batch(4, 2, 0)).unwrap();
        net.forward_train(&random_batch(4, 2, 1)).unwrap();
        assert!(matches!(
            net.backward(&old, &Matrix::zeros(4, 1)),
            Err(Error::StaleCache)
        ));
    }
}
