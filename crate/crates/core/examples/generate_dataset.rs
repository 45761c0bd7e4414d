//! Build a small parameter-sweep dataset of ensemble solutions, then resume
//! it: the second call finds every record on disk and solves nothing.

use deep_bsde_uq::dbsde::DbsdeConfig;
use deep_bsde_uq::uq_data::{generate, GenerateConfig, GenerateOptions, ParamSampler};

fn main() -> deep_bsde_uq::Result<()> {
    let dir = std::env::temp_dir().join("bsde-uq-example-dataset");
    let config = GenerateConfig {
        sampler: ParamSampler::black_scholes_d2(),
        draws: 12,
        q: 3,
        solver: DbsdeConfig {
            train_steps: 300,
            ..DbsdeConfig::default()
        },
        seed: 4,
    };
    let staged = GenerateOptions {
        workers: 2,
        stop_after: Some(6),
    };
    let partial = generate(&config, &dir, staged)?;
    println!("staged: {} of {} records", partial.records.len(), config.records());
    let dataset = generate(&config, &dir, GenerateOptions { workers: 2, stop_after: None })?;
    println!("features {:?}", dataset.snapshot.features);
    for r in dataset.records.iter().take(4) {
        println!("x {:?} → y {:.4} (ensemble {:?})", r.x, r.y, r.ens_y);
    }
    println!("{:?}", dataset.census());
    println!("written to {}", dir.display());
    Ok(())
}
