//! European call under Black–Scholes: a small ensemble of deep BSDE runs
//! against the closed-form price and delta.

use deep_bsde_uq::dbsde::{ensemble_solve_parallel, DbsdeConfig};
use deep_bsde_uq::metrics::ensemble_stats;
use deep_bsde_uq::nn::LrSchedule;
use deep_bsde_uq::problems::{BlackScholes, BlackScholesParams, BsdeProblem};

fn main() -> deep_bsde_uq::Result<()> {
    let problem = BlackScholes::new(BlackScholesParams::reference())?;
    let exact = problem.analytic().expect("closed form");
    let config = DbsdeConfig {
        time_steps: 16,
        train_steps: 1500,
        lr: LrSchedule::constant(1e-2),
        seed: 3,
        ..DbsdeConfig::default()
    };
    let runs = ensemble_solve_parallel(&problem, &config, 3, 3)?;
    for r in &runs {
        println!("seed {:>20}  y0 {:.4}  z0 {:.4}  eval loss {:.3e}", r.seed, r.y0, r.z0[0], r.eval_loss.unwrap_or(f64::NAN));
    }
    let ys: Vec<f64> = runs.iter().map(|r| r.y0).collect();
    let stats = ensemble_stats(&ys, Some(exact.y0))?;
    println!(
        "exact y0 {:.4}, ensemble mean {:.4}, std {:.4}, rmse {:.4}",
        exact.y0,
        stats.mean,
        stats.std,
        stats.rmse.unwrap_or(f64::NAN)
    );
    Ok(())
}
