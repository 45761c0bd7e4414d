//! Multidimensional Burgers-type equation with a known solution.

use deep_bsde_uq::dbsde::{train, DbsdeConfig};
use deep_bsde_uq::problems::{Burgers, BurgersParams, BsdeProblem};

fn main() -> deep_bsde_uq::Result<()> {
    let problem = Burgers::new(BurgersParams::new(5, 2.5, 0.25))?;
    let exact = problem.analytic().expect("closed form");
    let config = DbsdeConfig {
        time_steps: 16,
        train_steps: 2000,
        seed: 1,
        ..DbsdeConfig::default()
    };
    let r = train(&problem, &config)?;
    println!("y0 {:.5} (exact {:.5})", r.y0, exact.y0);
    println!("z0 {:?}", r.z0);
    println!("exact z0 {:?}", exact.z0);
    Ok(())
}
