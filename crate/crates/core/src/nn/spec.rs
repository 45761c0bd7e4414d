use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sin,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sin => x.sin(),
        }
    }

    /// Derivative expressed through the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sin => x.cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    Identity,
    Softplus,
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl OutputTransform {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            OutputTransform::Identity => x,
            // exp underflows below about -745; keep the head strictly positive
            OutputTransform::Softplus => softplus(x).max(f64::MIN_POSITIVE),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            OutputTransform::Identity => 1.0,
            OutputTransform::Softplus => sigmoid(x),
        }
    }
}

/// Architecture of a fully connected network with `hidden_layers` hidden
/// layers of `hidden_width` units each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    /// One entry per output unit.
    pub output_transforms: Vec<OutputTransform>,
    pub batch_norm: bool,
}

impl MlpSpec {
    /// Spec with identity outputs.
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden_layers: usize,
        hidden_width: usize,
        activation: Activation,
        batch_norm: bool,
    ) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden_layers,
            hidden_width,
            activation,
            output_transforms: vec![OutputTransform::Identity; output_dim],
            batch_norm,
        }
    }

    pub fn with_output_transforms(mut self, transforms: Vec<OutputTransform>) -> Self {
        self.output_transforms = transforms;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("network input and output dims must be positive".into()));
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if self.output_transforms.len() != self.output_dim {
            return Err(Error::DimensionMismatch {
                context: "MlpSpec::output_transforms",
                expected: self.output_dim,
                got: self.output_transforms.len(),
            });
        }
        Ok(())
    }

    /// `(in, out)` for each affine layer, input side first.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut prev = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((prev, self.hidden_width));
            prev = self.hidden_width;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Number of trainable parameters (weights, biases and batch-norm scale/shift).
    pub fn parameter_count(&self) -> usize {
        let affine: usize = self.layer_dims().iter().map(|(i, o)| o * (i + 1)).sum();
        let norm = if self.batch_norm {
            2 * self.hidden_width * self.hidden_layers
        } else {
            0
        };
        affine + norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_matches_closed_form() {
        for (d0, d1, l, eta) in [(3, 2, 1, 5), (1, 1, 2, 11), (5, 10, 3, 128), (4, 4, 2, 8)] {
            let spec = MlpSpec::new(d0, d1, l, eta, Activation::Relu, false);
            let closed = eta * (d0 + 1) + eta * (eta + 1) * (l - 1) + d1 * (eta + 1);
            assert_eq!(spec.parameter_count(), closed);
            let bn = MlpSpec::new(d0, d1, l, eta, Activation::Relu, true);
            assert_eq!(bn.parameter_count(), closed + 2 * eta * l);
        }
    }

    #[test]
    fn single_affine_layer_has_two_parameters() {
        let spec = MlpSpec::new(1, 1, 0, 0, Activation::Relu, false);
        assert_eq!(spec.parameter_count(), 2);
        spec.validate().unwrap();
    }

    #[test]
    fn softplus_at_zero_is_ln2() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(0.0) - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn softplus_stays_positive_and_finite() {
        for i in 0..=2000 {
            let x = -1e4 + 10.0 * i as f64;
            let y = OutputTransform::Softplus.apply(x);
            assert!(y.is_finite());
            assert!(y > 0.0);
        }
        assert!(softplus(-700.0) > 0.0);
        assert_eq!(softplus(1e4), 1e4);
    }
}
