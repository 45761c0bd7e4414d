//! Central finite differences against the adjoint gradient of the rollout loss.

use deep_bsde_uq::dbsde::{rollout_gradient, rollout_loss, DbsdeConfig, DbsdeModel};
use deep_bsde_uq::nn::{Activation, Mode};
use deep_bsde_uq::problems::{Burgers, BurgersParams};
use deep_bsde_uq::sde::sample_brownian;

fn main() -> deep_bsde_uq::Result<()> {
    let problem = Burgers::new(BurgersParams::new(2, 1.0, 0.25))?;
    let config = DbsdeConfig {
        time_steps: 3,
        batch_size: 8,
        hidden_width: Some(4),
        activation: Activation::Tanh,
        ..DbsdeConfig::default()
    };
    let grid = config.grid(&problem)?;
    let mut model = DbsdeModel::init(&problem, &config)?;
    let batch = sample_brownian(&grid, config.batch_size, 2, 9)?;
    let (loss, cache) = rollout_loss(&mut model, &problem, &grid, &batch, Mode::Train)?;
    let analytic = rollout_gradient(&model, &problem, &grid, &batch, &cache)?.flat();
    let theta = model.flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let at = |delta: f64| -> deep_bsde_uq::Result<f64> {
            let mut probe = model.clone();
            let mut p = theta.clone();
            p[i] += delta;
            probe.set_flat(&p)?;
            Ok(rollout_loss(&mut probe, &problem, &grid, &batch, Mode::Train)?.0)
        };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6));
    }
    println!("loss {loss:.6}, {} parameters, max relative error {worst:.2e}", theta.len());
    Ok(())
}
