//! RMSE of `Y₀` against the exact price for a sweep over the number of time
//! steps, read at checkpoints during training.

use deep_bsde_uq::dbsde::DbsdeConfig;
use deep_bsde_uq::experiments::{cmd_error_study, ErrorStudyConfig, RunOptions, Sweep};

fn main() -> deep_bsde_uq::Result<()> {
    let out = std::env::temp_dir().join("bsde-uq-example-error-study");
    let config = ErrorStudyConfig {
        solver: DbsdeConfig {
            train_steps: 600,
            seed: 8,
            ..DbsdeConfig::default()
        },
        runs: 3,
        checkpoints: vec![100, 300, 600],
        sweep: Sweep::Steps { steps: vec![2, 8] },
        ..ErrorStudyConfig::default()
    };
    let outcome = cmd_error_study(&config, &RunOptions::new(&out).workers(2))?;
    println!("{}", outcome.summary);
    print!("{}", std::fs::read_to_string(out.join("rmse_y.dat")).map_err(|e| deep_bsde_uq::Error::Io {
        path: out.join("rmse_y.dat"),
        source: e,
    })?);
    Ok(())
}
