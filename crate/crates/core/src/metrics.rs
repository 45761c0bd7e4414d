//! Ensemble statistics, log-domain correlations and ranking scores.
//!
//! Logarithms are base 10. Ensemble STDs use divisor `Q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean `μ̃`, biased STD `σ̃` and, given the exact value, RMSE `ε̃` of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean: f64,
    pub std: f64,
    pub rmse: Option<f64>,
}

impl EnsembleStats {
    /// `σ̃ / |μ̃|`, when `μ̃ ≠ 0`.
    pub fn relative_std(&self) -> Option<f64> {
        relative(self.std, self.mean)
    }

    /// `ε̃ / |truth|`, when both exist and `truth ≠ 0`.
    pub fn relative_rmse(&self, truth: f64) -> Option<f64> {
        self.rmse.and_then(|e| relative(e, truth))
    }
}

pub fn ensemble_stats(values: &[f64], truth: Option<f64>) -> Result<EnsembleStats> {
    if values.is_empty() {
        return Err(Error::Config("ensemble statistics need at least one run".into()));
    }
    let q = values.len() as f64;
    let mean = values.iter().sum::<f64>() / q;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / q).sqrt();
    let rmse = truth.map(|t| (values.iter().map(|v| (v - t) * (v - t)).sum::<f64>() / q).sqrt());
    Ok(EnsembleStats { mean, std, rmse })
}

/// `value / |denominator|`, `None` for a zero or non-finite denominator.
pub fn relative(value: f64, denominator: f64) -> Option<f64> {
    let d = denominator.abs();
    (d > 0.0 && d.is_finite()).then(|| value / d)
}

/// Root mean squared difference.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    if a.is_empty() {
        return Err(Error::Config("rmse of an empty sample".into()));
    }
    Ok((a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt())
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "paired samples",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    let n = a.len();
    if n < 2 {
        return Err(Error::UndefinedCorrelation(format!("need n ≥ 2, got {n}")));
    }
    let nf = n as f64;
    let ma = a.iter().sum::<f64>() / nf;
    let mb = b.iter().sum::<f64>() / nf;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of `(log₁₀ a, log₁₀ b)`. All inputs must be positive.
pub fn pearson_log(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    let indices: Vec<usize> = a
        .iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| !(**x > 0.0 && **y > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !indices.is_empty() {
        return Err(Error::NonPositive { indices });
    }
    let la: Vec<f64> = a.iter().map(|v| v.log10()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.log10()).collect();
    pearson(&la, &lb)
}

/// [`pearson_log`] after dropping pairs with a non-positive or non-finite
/// entry. Returns the correlation and the number of dropped pairs.
pub fn pearson_log_filtered(a: &[f64], b: &[f64]) -> Result<(f64, usize)> {
    same_len(a, b)?;
    let (fa, fb): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .unzip();
    let dropped = a.len() - fa.len();
    Ok((pearson_log(&fa, &fb)?, dropped))
}

/// Mean and (divisor `R`) STD of per-model log correlations against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCorrelation {
    pub mean: f64,
    pub std: f64,
    pub per_model: Vec<f64>,
    /// Models whose correlation was undefined.
    pub failed: usize,
    /// Sample pairs dropped for non-positive values, summed over models.
    pub excluded: usize,
}

/// `ρ̄ = (1/R) Σ_r ρ(log reference, log values_r)`.
pub fn mean_model_correlation(per_model: &[Vec<f64>], reference: &[f64]) -> Result<ModelCorrelation> {
    if per_model.is_empty() {
        return Err(Error::Config("need at least one model".into()));
    }
    let mut rhos = Vec::with_capacity(per_model.len());
    let mut failed = 0;
    let mut excluded = 0;
    for values in per_model {
        match pearson_log_filtered(reference, values) {
            Ok((rho, dropped)) => {
                rhos.push(rho);
                excluded += dropped;
            }
            Err(Error::UndefinedCorrelation(_)) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if rhos.is_empty() {
        return Err(Error::UndefinedCorrelation("no model produced a defined correlation".into()));
    }
    let stats = ensemble_stats(&rhos, None)?;
    Ok(ModelCorrelation {
        mean: stats.mean,
        std: stats.std,
        per_model: rhos,
        failed,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeFlag {
    /// The target lies below the `q = 2` value.
    Below,
    Within,
    /// The target is never reached up to `Q_max`.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEquivalence {
    pub q: f64,
    pub flag: RangeFlag,
    /// `(q, ρ(log ε̃^r, log σ̃^r_q))` for `q = 2..=Q_max`.
    pub curve: Vec<(usize, f64)>,
}

/// Ensemble-size curve: the relative RMSE over all `q_max` runs is the fixed
/// reference, the relative STD uses the first `q` runs.
pub fn q_curve(ensembles: &[Vec<f64>], truth: &[f64], q_max: usize) -> Result<Vec<(usize, f64)>> {
    if q_max < 2 {
        return Err(Error::Config("Q_max must be at least 2".into()));
    }
    if ensembles.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "ensembles vs truth",
            expected: truth.len(),
            got: ensembles.len(),
        });
    }
    if let Some(short) = ensembles.iter().position(|e| e.len() < q_max) {
        return Err(Error::Config(format!("sample {short} has fewer than {q_max} runs")));
    }
    let reference: Vec<f64> = ensembles
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            let s = ensemble_stats(&e[..q_max], Some(*t))?;
            Ok(s.relative_rmse(*t).unwrap_or(f64::NAN))
        })
        .collect::<Result<_>>()?;
    (2..=q_max)
        .map(|q| {
            let rel_std: Vec<f64> = ensembles
                .iter()
                .map(|e| {
                    let s = ensemble_stats(&e[..q], None)?;
                    Ok(s.relative_std().unwrap_or(f64::NAN))
                })
                .collect::<Result<_>>()?;
            Ok((q, pearson_log_filtered(&reference, &rel_std)?.0))
        })
        .collect()
}

/// Fractional ensemble size at which the curve first reaches `uq_mean_corr`,
/// linearly interpolated between integer `q`.
pub fn q_equivalence(ensembles: &[Vec<f64>], truth: &[f64], uq_mean_corr: f64, q_max: usize) -> Result<QEquivalence> {
    let curve = q_curve(ensembles, truth, q_max)?;
    let (q, flag) = crossing(&curve, uq_mean_corr);
    Ok(QEquivalence { q, flag, curve })
}

/// First crossing of `target` by a `(q, value)` curve starting at its first point.
pub fn crossing(curve: &[(usize, f64)], target: f64) -> (f64, RangeFlag) {
    let (q0, c0) = curve[0];
    if target < c0 {
        return (q0 as f64, RangeFlag::Below);
    }
    if target == c0 {
        return (q0 as f64, RangeFlag::Within);
    }
    for w in curve.windows(2) {
        let ((qa, ca), (qb, cb)) = (w[0], w[1]);
        if ca < target && cb >= target {
            let frac = (target - ca) / (cb - ca);
            return (qa as f64 + frac * (qb - qa) as f64, RangeFlag::Within);
        }
    }
    (curve[curve.len() - 1].0 as f64, RangeFlag::Above)
}

/// 1-based ranks; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's `ς = 1 − 6Σd²/(n(n²−1))` on average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    let n = a.len();
    if n < 2 {
        return Err(Error::UndefinedCorrelation(format!("need n ≥ 2, got {n}")));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(a) || constant(b) {
        return Err(Error::UndefinedCorrelation("constant input has no ranking".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
    let nf = n as f64;
    Ok(1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0)))
}

/// `ℓ_i = 1` when `a_i < b_i`.
pub fn binary_labels(a: &[f64], b: &[f64]) -> Result<Vec<bool>> {
    same_len(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x < y).collect())
}

fn match_fraction<T: PartialEq>(truth: &[T], pred: &[T]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            context: "label sets",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Config("accuracy of an empty label set".into()));
    }
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

pub fn accuracy_binary(truth: &[bool], pred: &[bool]) -> Result<f64> {
    match_fraction(truth, pred)
}

/// Exact-match fraction of one-hot rows.
pub fn accuracy_multilabel(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> Result<f64> {
    for row in truth.iter().chain(pred) {
        one_hot_index(row)?;
    }
    match_fraction(truth, pred)
}

/// Position of the smallest value; ties go to the earliest entry (smallest `N`
/// on an ascending grid).
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v < values[b]) {
            best = Some(i);
        }
    }
    best
}

pub fn one_hot(index: usize, len: usize) -> Vec<u8> {
    let mut v = vec![0; len];
    v[index] = 1;
    v
}

pub fn one_hot_index(row: &[u8]) -> Result<usize> {
    let ones: Vec<usize> = row.iter().enumerate().filter(|(_, v)| **v != 0).map(|(i, _)| i).collect();
    match ones.as_slice() {
        [i] if row[*i] == 1 => Ok(*i),
        _ => Err(Error::Contract(format!("label row {row:?} is not one-hot"))),
    }
}

/// Grid values sorted by ascending score (stable, so ties keep grid order).
pub fn rank_by<T: Copy>(grid: &[T], scores: &[f64]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..grid.len()).collect();
    idx.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    idx.into_iter().map(|i| grid[i]).collect()
}

/// Mean of `1 / position` (1-based) of each true label in its ranked list.
pub fn mrr<T: PartialEq + std::fmt::Debug>(truth: &[T], ranked: &[Vec<T>]) -> Result<f64> {
    if truth.len() != ranked.len() {
        return Err(Error::DimensionMismatch {
            context: "mrr inputs",
            expected: truth.len(),
            got: ranked.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Config("mrr of an empty set".into()));
    }
    let mut total = 0.0;
    for (i, (t, list)) in truth.iter().zip(ranked).enumerate() {
        let pos = list
            .iter()
            .position(|v| v == t)
            .ok_or_else(|| Error::Contract(format!("sample {i}: label {t:?} missing from ranking")))?;
        total += 1.0 / (pos + 1) as f64;
    }
    Ok(total / truth.len() as f64)
}
