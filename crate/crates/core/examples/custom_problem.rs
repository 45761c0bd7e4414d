//! Any FBSDE can be solved by supplying its coefficients as closures. Here
//! `dX = dW`, `f = 0`, `g(x) = x²` on `[0, 1]`, so `Y₀ = x₀² + T` and `Z₀ = 2x₀`.

use deep_bsde_uq::dbsde::{train, DbsdeConfig};
use deep_bsde_uq::problems::FnProblem;

fn main() -> deep_bsde_uq::Result<()> {
    let x0 = 0.5;
    let problem = FnProblem::new(1, 1.0)
        .initial(vec![x0])
        .terminal(|x| x[0] * x[0])
        .y0_range(0.0, 2.0);
    let config = DbsdeConfig {
        time_steps: 8,
        train_steps: 1500,
        hidden_width: Some(8),
        seed: 2,
        ..DbsdeConfig::default()
    };
    let r = train(&problem, &config)?;
    println!("y0 {:.4} (exact {:.4}), z0 {:.4} (exact {:.4})", r.y0, x0 * x0 + 1.0, r.z0[0], 2.0 * x0);
    Ok(())
}
