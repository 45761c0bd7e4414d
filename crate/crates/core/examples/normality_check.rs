//! D'Agostino–Pearson on normal and exponential samples, and a histogram
//! with its fitted normal density.

use deep_bsde_uq::stats::{dagostino_pearson, histogram_with_normal_fit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

fn main() -> deep_bsde_uq::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let normal: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let exp = Exp::new(1.0).expect("positive rate");
    let skewed: Vec<f64> = (0..5000).map(|_| exp.sample(&mut rng)).collect();
    for (name, sample) in [("normal", &normal), ("exponential", &skewed)] {
        let r = dagostino_pearson(sample)?;
        println!(
            "{name:>12}: skew {:+.3}  excess kurtosis {:+.3}  K² {:.2}  p {:.3e}",
            r.skewness, r.kurtosis, r.k2, r.p_value
        );
    }
    let h = histogram_with_normal_fit(&normal, 12)?;
    println!("fitted N({:.3}, {:.3}²)", h.mean, h.std);
    for (w, d) in h.edges.windows(2).zip(&h.densities) {
        let mid = 0.5 * (w[0] + w[1]);
        println!("{:>7.2} {:<40} {:.3}", mid, "#".repeat((d * 80.0) as usize), h.fitted_density(mid));
    }
    Ok(())
}
