//! Feed-forward networks with exact reverse-mode gradients.
//!
//! Everything here is `f64` and batch-oriented: inputs are `m × d₀` matrices,
//! outputs `m × d₁`. Hidden layers may be batch-normalized between the affine
//! map and the activation. Gradients are computed by hand-written backward
//! passes over a cache produced by [`Mlp::forward_train`].

mod adam;
mod checkpoint;
mod mlp;
mod schedule;
mod spec;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use mlp::{
    BatchNorm, ForwardCache, Layer, LayerGrads, Mlp, MlpGrads, MlpParams, Mode,
    BN_EPSILON, BN_MOMENTUM,
};
pub use schedule::LrSchedule;
pub use spec::{softplus, Activation, MlpSpec, OutputTransform};
