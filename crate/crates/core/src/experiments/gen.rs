use serde::{Deserialize, Serialize};

use super::{Outcome, RunOptions};
use crate::error::Result;
use crate::report::{write_json, Meta};
use crate::uq_data::{generate, GenerateConfig, GenerateOptions};

/// Dataset generation settings; see [`GenerateConfig`].
pub type GenConfig = GenerateConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GenSummary {
    records: usize,
    features: Vec<String>,
    census: crate::uq_data::DivergenceCensus,
}

/// Generates (or resumes) a dataset in `options.out`. Diverged solver runs
/// stay in the data and are only counted.
pub fn cmd_gen(config: &GenConfig, options: &RunOptions) -> Result<Outcome> {
    options.prepare()?;
    let effective = GenerateConfig {
        seed: options.seed.unwrap_or(config.seed),
        ..config.clone()
    };
    let dataset = generate(
        &effective,
        &options.out,
        GenerateOptions {
            workers: options.workers,
            stop_after: None,
        },
    )?;
    let census = dataset.census();
    let meta = Meta::new("gen", &effective, effective.seed)?;
    let path = options.path("census.json");
    write_json(
        &path,
        &meta,
        &GenSummary {
            records: dataset.records.len(),
            features: dataset.snapshot.features.clone(),
            census,
        },
    )?;
    Ok(Outcome {
        files: vec![
            options.path(crate::uq_data::SNAPSHOT_FILE),
            options.path(crate::uq_data::RECORDS_FILE),
            path,
        ],
        diverged: false,
        summary: format!(
            "{} records, features {:?}; negative y: {}, negative z: {}, flagged runs: {}",
            dataset.records.len(),
            dataset.snapshot.features,
            census.negative_y,
            census.negative_z,
            census.flagged_runs
        ),
    })
}
