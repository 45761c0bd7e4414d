//! Heteroscedastic regression on `y = sin x + ε`, `ε ~ N(0, (0.1 + 0.2x²)²)`:
//! the fitted σ̂ should follow the true noise level.

use deep_bsde_uq::linalg::Matrix;
use deep_bsde_uq::metrics::pearson;
use deep_bsde_uq::uq_model::{fit, Target, UqData, UqNetConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sample(n: usize, seed: u64) -> deep_bsde_uq::Result<(UqData, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| {
            let e: f64 = StandardNormal.sample(&mut rng);
            x.sin() + (0.1 + 0.2 * x * x) * e
        })
        .collect();
    let data = UqData::new(Matrix::from_vec(n, 1, xs.clone())?, Matrix::from_vec(n, 1, ys)?)?;
    Ok((data, xs))
}

fn main() -> deep_bsde_uq::Result<()> {
    let (train, _) = sample(2000, 1)?;
    let (test, xs) = sample(500, 2)?;
    let config = UqNetConfig {
        hidden_width: 16,
        batch_size: 64,
        l2: 0.0,
        rates: vec![1e-2, 1e-3],
        epochs: vec![200, 50],
        seed: 5,
        ..UqNetConfig::default()
    };
    let model = fit(&train, Some(&test), Target::Y, &config)?;
    let (mu, sigma) = model.predict_batch(&test.x)?;
    let truth: Vec<f64> = xs.iter().map(|x| 0.1 + 0.2 * x * x).collect();
    let mae = xs.iter().zip(mu.as_slice()).map(|(x, m)| (m - x.sin()).abs()).sum::<f64>() / xs.len() as f64;
    println!("corr(σ̂, σ) = {:.4}", pearson(sigma.as_slice(), &truth)?);
    println!("MAE(μ̂, sin) = {mae:.4}");
    println!("final train / valid NLL: {:.4} / {:.4}", model.log.train.last().unwrap(), model.log.valid.last().unwrap());
    for x in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let p = model.predict(&[x])?;
        println!("x = {x:>4}: μ̂ {:.3}  σ̂ {:.3}  (true σ {:.3})", p.mu[0], p.sigma[0], 0.1 + 0.2 * x * x);
    }
    Ok(())
}
