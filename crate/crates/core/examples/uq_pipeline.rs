//! The whole workflow through the experiment drivers: generate a dataset,
//! train an ensemble of UQ models and evaluate them on the test split.

use deep_bsde_uq::dbsde::DbsdeConfig;
use deep_bsde_uq::experiments::{cmd_eval_uq, cmd_gen, cmd_train_uq, EvalUqConfig, RunOptions, TrainUqConfig};
use deep_bsde_uq::uq_data::{GenerateConfig, ParamSampler};
use deep_bsde_uq::uq_model::{Target, UqNetConfig};

fn main() -> deep_bsde_uq::Result<()> {
    let root = std::env::temp_dir().join("bsde-uq-example-pipeline");
    let gen = GenerateConfig {
        sampler: ParamSampler::black_scholes_d1(),
        draws: 60,
        q: 3,
        solver: DbsdeConfig {
            time_steps: 10,
            train_steps: 400,
            ..DbsdeConfig::default()
        },
        seed: 21,
    };
    let options = |name: &str| RunOptions::new(root.join(name)).workers(2);
    println!("{}", cmd_gen(&gen, &options("data"))?.summary);

    let train = TrainUqConfig {
        dataset: root.join("data"),
        target: Target::Y,
        net: Some(UqNetConfig {
            hidden_width: 32,
            batch_size: 16,
            rates: vec![3e-3, 1e-3],
            epochs: vec![150, 50],
            ..UqNetConfig::published(Target::Y)
        }),
        models: 2,
        ..TrainUqConfig::default()
    };
    println!("{}", cmd_train_uq(&train, &options("models"))?.summary);

    let eval = EvalUqConfig {
        models: root.join("models"),
        ..EvalUqConfig::default()
    };
    let outcome = cmd_eval_uq(&eval, &options("eval"))?;
    println!("{}", outcome.summary);
    for f in outcome.files {
        println!("  {}", f.display());
    }
    Ok(())
}
