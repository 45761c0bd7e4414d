pub mod dbsde;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod parallel;
pub mod problems;
pub mod report;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod uq_data;
pub mod uq_model;

pub use error::{Error, Result};
