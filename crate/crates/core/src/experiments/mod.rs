//! Experiment drivers behind the `bsde-uq` subcommands. Each takes a JSON
//! config plus [`RunOptions`], writes its artifacts under `options.out`, and
//! reports what it wrote.

mod error_study;
mod gen;
mod normality;
mod solve;
mod uq;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use error_study::{cmd_error_study, ErrorStudyConfig, NamedSchedule, Sweep};
pub use gen::{cmd_gen, GenConfig};
pub use normality::{cmd_normality, NormalityConfig};
pub use solve::{cmd_solve, SolveConfig, SolveReport};
pub use uq::{cmd_eval_uq, cmd_train_uq, EvalSplit, EvalUqConfig, TrainUqConfig, UqManifest};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides the config's base seed.
    pub seed: Option<u64>,
    pub workers: usize,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            seed: None,
            workers: 1,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    fn prepare(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Some run or model diverged; artifacts were still written.
    pub diverged: bool,
    pub summary: String,
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// File-name-safe rendering of a sweep label.
fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}
