//! The evaluation metrics on hand-made inputs.

use deep_bsde_uq::metrics::{
    accuracy_binary, ensemble_stats, mrr, pearson_log, q_curve, rank_by, spearman,
};

fn main() -> deep_bsde_uq::Result<()> {
    let runs = [9.1, 9.6, 9.3, 9.8];
    let s = ensemble_stats(&runs, Some(9.4134))?;
    println!(
        "ensemble: mean {:.4}, std {:.4}, rmse {:.4}, relative std {:.4}",
        s.mean,
        s.std,
        s.rmse.unwrap_or(f64::NAN),
        s.relative_std().unwrap_or(f64::NAN)
    );

    let err = [0.01, 0.05, 0.002, 0.2];
    let std = [0.012, 0.04, 0.003, 0.15];
    println!("log-domain pearson {:.4}", pearson_log(&err, &std)?);
    println!("spearman {:.4}", spearman(&err, &std)?);

    let truth = [true, false, true, true];
    let pred = [true, false, false, true];
    println!("binary accuracy {:.2}", accuracy_binary(&truth, &pred)?);

    let grid = [2usize, 8, 32];
    let ranked = vec![rank_by(&grid, &[0.3, 0.1, 0.2]), rank_by(&grid, &[0.1, 0.2, 0.3])];
    println!("ranked {:?}, MRR {:.3}", ranked, mrr(&[8, 8], &ranked)?);

    let ensembles = vec![
        vec![1.0, 1.1, 0.9, 1.05],
        vec![2.0, 2.6, 1.5, 2.2],
        vec![3.0, 3.02, 2.99, 3.01],
        vec![4.0, 4.5, 3.2, 4.1],
    ];
    let exact = [1.0, 2.1, 3.0, 3.9];
    println!("q curve {:?}", q_curve(&ensembles, &exact, 4)?);
    Ok(())
}
