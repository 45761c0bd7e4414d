//! Euler–Maruyama paths of geometric Brownian motion; the sample mean of
//! `S_T` should match `S₀ e^{aT}`.

use deep_bsde_uq::problems::{BlackScholes, BlackScholesParams, BsdeProblem};
use deep_bsde_uq::sde::{euler_maruyama_forward, sample_brownian, TimeGrid};

fn main() -> deep_bsde_uq::Result<()> {
    let params = BlackScholesParams::reference();
    let problem = BlackScholes::new(params.clone())?;
    let grid = TimeGrid::new(problem.horizon(), 50)?;
    let m = 20_000;
    let batch = sample_brownian(&grid, m, 1, 42)?;
    let paths = euler_maruyama_forward(&problem, &problem.initial_state(), &grid, &batch)?;
    let terminal = paths.slice_at(grid.steps);
    let mean = terminal.iter().sum::<f64>() / m as f64;
    let expected = params.spot * (params.drift * params.maturity).exp();
    println!("mean S_T {mean:.3}, expected {expected:.3}");
    println!("first path: {:?}", (0..=5).map(|n| paths.state(0, n)[0]).collect::<Vec<_>>());
    Ok(())
}
