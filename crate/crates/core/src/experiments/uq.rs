use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Outcome, RunOptions};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{
    accuracy_binary, accuracy_multilabel, argmin_first, ensemble_stats, mean_model_correlation, mrr, one_hot,
    pearson_log_filtered, q_equivalence, rank_by, rmse, spearman, ModelCorrelation, QEquivalence,
};
use crate::parallel::par_map;
use crate::report::{read_json_data, write_json, DatTable, Meta};
use crate::rng::{self, tag};
use crate::uq_data::{GridPolicy, Split, UqDataset};
use crate::uq_model::{ensemble_of_models, fit, model_seed, Target, UqData, UqModel, UqNetConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainUqConfig {
    /// Directory written by `gen`.
    pub dataset: PathBuf,
    pub target: Target,
    /// Defaults to the published settings for the target.
    pub net: Option<UqNetConfig>,
    /// Number of independently seeded models `R`.
    pub models: usize,
    /// Hold-out sizes in records; default a tenth of the data each.
    pub m_valid: Option<usize>,
    pub m_test: Option<usize>,
    /// Defaults to the base seed.
    pub split_seed: Option<u64>,
}

impl Default for TrainUqConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            target: Target::Y,
            net: None,
            models: 1,
            m_valid: None,
            m_test: None,
            split_seed: None,
        }
    }
}

/// What `train-uq` leaves behind for `eval-uq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqManifest {
    pub dataset: PathBuf,
    pub target: Target,
    pub net: UqNetConfig,
    pub split: Split,
    /// Model file per ensemble member; `None` where training diverged.
    pub models: Vec<Option<String>>,
}

impl UqManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json_data(&dir.join(MANIFEST_FILE))
    }

    pub fn load_models(&self, dir: &Path) -> Result<Vec<UqModel>> {
        self.models
            .iter()
            .flatten()
            .map(|f| UqModel::load(&dir.join(f)))
            .collect()
    }
}

/// Hold-out size: a tenth of the parameter draws, in whole groups.
fn holdout(dataset: &UqDataset) -> usize {
    let per = dataset.snapshot.config.sampler.grid.expansion();
    let groups = dataset.records.len() / per;
    ((groups as f64 * 0.1).round() as usize).max(1) * per
}

pub fn cmd_train_uq(config: &TrainUqConfig, options: &RunOptions) -> Result<Outcome> {
    options.prepare()?;
    if config.models == 0 {
        return Err(Error::Config("models must be at least 1".into()));
    }
    let mut net = config.net.clone().unwrap_or_else(|| UqNetConfig::published(config.target));
    let base = options.seed.unwrap_or(net.seed);
    net.seed = base;
    let dataset = UqDataset::load(&config.dataset)?;
    if !dataset.is_complete() {
        return Err(Error::Config(format!(
            "dataset {} is incomplete ({} of {} records); rerun gen to finish it",
            config.dataset.display(),
            dataset.records.len(),
            dataset.snapshot.config.records()
        )));
    }
    let m_valid = config.m_valid.unwrap_or_else(|| holdout(&dataset));
    let m_test = config.m_test.unwrap_or_else(|| holdout(&dataset));
    let dataset = dataset.with_split(m_valid, m_test, config.split_seed.unwrap_or(base))?;
    let split = dataset.split.clone().expect("split just assigned");
    let effective = TrainUqConfig {
        net: Some(net.clone()),
        m_valid: Some(m_valid),
        m_test: Some(m_test),
        split_seed: Some(config.split_seed.unwrap_or(base)),
        ..config.clone()
    };
    let meta = Meta::new("train-uq", &effective, base)?;

    let fits = ensemble_of_models(&dataset, config.target, &net, config.models, options.workers)?;
    let mut files = Vec::new();
    let mut names = Vec::with_capacity(fits.len());
    let mut logs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(fits.len());
    for (r, fitted) in fits.into_iter().enumerate() {
        match fitted {
            Ok(model) => {
                let name = format!("model_{r}.json");
                let path = options.path(&name);
                model.save(&path)?;
                files.push(path);
                names.push(Some(name));
                logs.push((model.log.train.clone(), model.log.valid.clone()));
            }
            Err(Error::TrainingDiverged {
                train_loss, valid_loss, ..
            }) => {
                names.push(None);
                logs.push((train_loss, valid_loss));
            }
            Err(e) => return Err(e),
        }
    }

    let mut columns = vec!["epoch".to_string()];
    for r in 0..logs.len() {
        columns.push(format!("train_nll_model{r}"));
        columns.push(format!("valid_nll_model{r}"));
    }
    let mut table = DatTable::new(columns);
    for e in 0..net.total_epochs() as usize {
        let mut row = vec![(e + 1) as f64];
        for (t, v) in &logs {
            row.push(t.get(e).copied().unwrap_or(f64::NAN));
            row.push(v.get(e).copied().unwrap_or(f64::NAN));
        }
        table.push(row)?;
    }
    let log_path = options.path("training_log.dat");
    table.write(&log_path, &meta)?;
    files.push(log_path);

    let diverged = names.iter().filter(|n| n.is_none()).count();
    let manifest = UqManifest {
        dataset: config.dataset.clone(),
        target: config.target,
        net,
        split: split.clone(),
        models: names,
    };
    let manifest_path = options.path(MANIFEST_FILE);
    write_json(&manifest_path, &meta, &manifest)?;
    files.push(manifest_path);

    Ok(Outcome {
        files,
        diverged: diverged > 0,
        summary: format!(
            "{} of {} models trained ({} train / {} valid / {} test records)",
            config.models - diverged,
            config.models,
            split.train.len(),
            split.valid.len(),
            split.test.len()
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Valid,
    #[default]
    Test,
}

impl EvalSplit {
    fn name(self) -> &'static str {
        match self {
            EvalSplit::Train => "train",
            EvalSplit::Valid => "valid",
            EvalSplit::Test => "test",
        }
    }

    fn indices(self, split: &Split) -> &[usize] {
        match self {
            EvalSplit::Train => &split.train,
            EvalSplit::Valid => &split.valid,
            EvalSplit::Test => &split.test,
        }
    }
}

impl std::str::FromStr for EvalSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(EvalSplit::Train),
            "valid" => Ok(EvalSplit::Valid),
            "test" => Ok(EvalSplit::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalUqConfig {
    /// Directory written by `train-uq`.
    pub models: PathBuf,
    /// Overrides the dataset recorded in the manifest.
    pub dataset: Option<PathBuf>,
    pub split: EvalSplit,
    /// Largest ensemble size on the Q-equivalence curve; defaults to the dataset's `Q`.
    pub q_max: Option<usize>,
    /// Component of `Z₀` evaluated by a Z-model.
    pub component: usize,
    /// Fractions of the training split for the retraining study; empty skips it.
    pub training_fractions: Vec<f64>,
}

impl Default for EvalUqConfig {
    fn default() -> Self {
        Self {
            models: PathBuf::new(),
            dataset: None,
            split: EvalSplit::Test,
            q_max: None,
            component: 0,
            training_fractions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Result<Self> {
        let s = ensemble_stats(values, None)?;
        Ok(Self { mean: s.mean, std: s.std })
    }
}

/// Correlation and mean-quality figures on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub split: EvalSplit,
    pub target: Target,
    pub component: usize,
    pub samples: usize,
    pub models: usize,
    /// `ρ(log ε̃^r, log σ̃^r)` over the split.
    pub rho_ensemble: Option<f64>,
    pub rho_ensemble_excluded: usize,
    /// `ρ̄(log ε̃^r, log σ̂^r)` across models.
    pub rho_uq: Option<ModelCorrelation>,
    /// RMSE of the ensemble mean `μ̃` against the exact solution.
    pub rmse_ensemble_mean_vs_exact: f64,
    /// RMSE of the UQ mean `μ̂` against the exact solution, across models.
    pub rmse_uq_mean_vs_exact: MeanStd,
    /// RMSE of `μ̂` against `μ̃`, across models.
    pub rmse_uq_mean_vs_ensemble_mean: MeanStd,
    pub q_equivalence: Option<QEquivalence>,
    /// `σ̂^r = σ̂ / |μ̂|` with the model's own mean.
    pub sigma_hat_relative_to: String,
}

/// Best-`N` selection scores on a `T`-fixed, `N`-grid dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSelectionReport {
    pub grid: Vec<usize>,
    pub groups: usize,
    pub accuracy_ensemble: f64,
    pub accuracy_uq: MeanStd,
    pub mrr_ensemble: f64,
    pub mrr_uq: MeanStd,
    pub spearman_ensemble: Option<f64>,
    pub spearman_uq: Option<MeanStd>,
    /// `(N_a, N_b, ensemble accuracy, UQ accuracy mean, UQ accuracy std)` of the label `ε̃^r(N_a) < ε̃^r(N_b)`.
    pub pairwise: Vec<(usize, usize, f64, f64, f64)>,
}

/// Per-sample quantities on the evaluated split.
struct Evaluation {
    indices: Vec<usize>,
    truth: Vec<f64>,
    ens_mean: Vec<f64>,
    eps_r: Vec<f64>,
    sig_tilde_r: Vec<f64>,
    /// Per model: `(μ̂, σ̂^r)`.
    uq: Vec<(Vec<f64>, Vec<f64>)>,
    ensembles: Vec<Vec<f64>>,
}

fn nan_if_none(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

fn targets(dataset: &UqDataset, i: usize, target: Target, component: usize) -> Result<(f64, Vec<f64>)> {
    let analytic = dataset.param_set(i).analytic()?.ok_or_else(|| {
        Error::Config("evaluation needs problems with an analytic solution".into())
    })?;
    let r = &dataset.records[i];
    Ok(match target {
        Target::Y => (analytic.y0, r.ens_y.clone()),
        Target::Z => (analytic.z0[component], r.ens_z_component(component)),
    })
}

fn features(dataset: &UqDataset, indices: &[usize]) -> Result<Matrix> {
    let rows: Vec<&[f64]> = indices.iter().map(|&i| dataset.records[i].x.as_slice()).collect();
    Matrix::from_rows(&rows)
}

/// `σ̂^r` for each row, from one model.
fn model_outputs(model: &UqModel, x: &Matrix, component: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mu, sigma) = model.predict_batch(x)?;
    let c = if model.components() == 1 { 0 } else { component };
    let mus = mu.column(c);
    let rel = mus
        .iter()
        .zip(sigma.column(c))
        .map(|(m, s)| nan_if_none(crate::metrics::relative(s, *m)))
        .collect();
    Ok((mus, rel))
}

fn evaluate(
    dataset: &UqDataset,
    models: &[UqModel],
    indices: &[usize],
    target: Target,
    component: usize,
) -> Result<Evaluation> {
    let mut ev = Evaluation {
        indices: indices.to_vec(),
        truth: Vec::with_capacity(indices.len()),
        ens_mean: Vec::with_capacity(indices.len()),
        eps_r: Vec::with_capacity(indices.len()),
        sig_tilde_r: Vec::with_capacity(indices.len()),
        uq: Vec::new(),
        ensembles: Vec::with_capacity(indices.len()),
    };
    for &i in indices {
        let (truth, runs) = targets(dataset, i, target, component)?;
        let s = ensemble_stats(&runs, Some(truth))?;
        ev.truth.push(truth);
        ev.ens_mean.push(s.mean);
        ev.eps_r.push(nan_if_none(s.relative_rmse(truth)));
        ev.sig_tilde_r.push(nan_if_none(s.relative_std()));
        ev.ensembles.push(runs);
    }
    let x = features(dataset, indices)?;
    ev.uq = models
        .iter()
        .map(|m| model_outputs(m, &x, component))
        .collect::<Result<_>>()?;
    Ok(ev)
}

fn defined_correlation<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn quality(ev: &Evaluation, split: EvalSplit, target: Target, component: usize, q_max: usize) -> Result<QualityReport> {
    let (rho_ensemble, rho_ensemble_excluded) = match defined_correlation(pearson_log_filtered(&ev.eps_r, &ev.sig_tilde_r))? {
        Some((r, x)) => (Some(r), x),
        None => (None, 0),
    };
    let per_model: Vec<Vec<f64>> = ev.uq.iter().map(|(_, s)| s.clone()).collect();
    let rho_uq = defined_correlation(mean_model_correlation(&per_model, &ev.eps_r))?;
    let rmse_exact: Vec<f64> = ev.uq.iter().map(|(mu, _)| rmse(mu, &ev.truth)).collect::<Result<_>>()?;
    let rmse_ens: Vec<f64> = ev.uq.iter().map(|(mu, _)| rmse(mu, &ev.ens_mean)).collect::<Result<_>>()?;
    let q_eq = match (&rho_uq, q_max >= 2) {
        (Some(rho), true) => defined_correlation(q_equivalence(&ev.ensembles, &ev.truth, rho.mean, q_max))?,
        _ => None,
    };
    Ok(QualityReport {
        split,
        target,
        component,
        samples: ev.indices.len(),
        models: ev.uq.len(),
        rho_ensemble,
        rho_ensemble_excluded,
        rho_uq,
        rmse_ensemble_mean_vs_exact: rmse(&ev.ens_mean, &ev.truth)?,
        rmse_uq_mean_vs_exact: MeanStd::of(&rmse_exact)?,
        rmse_uq_mean_vs_ensemble_mean: MeanStd::of(&rmse_ens)?,
        q_equivalence: q_eq,
        sigma_hat_relative_to: "model mean".into(),
    })
}

/// NaN scores sort last.
fn score(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn n_selection(ev: &Evaluation, dataset: &UqDataset, grid: &[usize]) -> Result<Option<NSelectionReport>> {
    let g = grid.len();
    // positions in `ev` grouped by parameter draw, in grid order
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut pos = 0;
    while pos < ev.indices.len() {
        let group = dataset.param_set(ev.indices[pos]).group;
        let block: Vec<usize> = (pos..ev.indices.len())
            .take_while(|&p| dataset.param_set(ev.indices[p]).group == group)
            .collect();
        pos += block.len();
        if block.len() == g {
            blocks.push(block);
        }
    }
    if blocks.is_empty() {
        return Ok(None);
    }
    let pick = |values: &[f64], block: &[usize]| -> Vec<f64> { block.iter().map(|&p| score(values[p])).collect() };
    let truth_idx: Vec<usize> = blocks
        .iter()
        .map(|b| argmin_first(&pick(&ev.eps_r, b)).expect("non-empty block"))
        .collect();
    let truth_hot: Vec<Vec<u8>> = truth_idx.iter().map(|&k| one_hot(k, g)).collect();
    let truth_n: Vec<usize> = truth_idx.iter().map(|&k| grid[k]).collect();

    let selection = |scores: &[f64]| -> Result<(f64, f64, Vec<f64>)> {
        let pred: Vec<Vec<u8>> = blocks
            .iter()
            .map(|b| one_hot(argmin_first(&pick(scores, b)).expect("non-empty block"), g))
            .collect();
        let ranked: Vec<Vec<usize>> = blocks.iter().map(|b| rank_by(grid, &pick(scores, b))).collect();
        let mut pairs = Vec::new();
        for a in 0..g {
            for c in a + 1..g {
                let lt = |v: &[f64]| -> Vec<bool> { blocks.iter().map(|b| score(v[b[a]]) < score(v[b[c]])).collect() };
                pairs.push(accuracy_binary(&lt(&ev.eps_r), &lt(scores))?);
            }
        }
        Ok((accuracy_multilabel(&truth_hot, &pred)?, mrr(&truth_n, &ranked)?, pairs))
    };
    let finite_pairs = |a: &[f64], b: &[f64]| -> (Vec<f64>, Vec<f64>) {
        a.iter()
            .zip(b)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| (*x, *y))
            .unzip()
    };
    let spearman_of = |scores: &[f64]| -> Result<Option<f64>> {
        let (a, b) = finite_pairs(&ev.eps_r, scores);
        defined_correlation(spearman(&a, &b))
    };

    let (acc_e, mrr_e, pairs_e) = selection(&ev.sig_tilde_r)?;
    let per_model = ev.uq.iter().map(|(_, s)| selection(s)).collect::<Result<Vec<_>>>()?;
    let spearman_models: Vec<f64> = ev
        .uq
        .iter()
        .map(|(_, s)| spearman_of(s))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut pairwise = Vec::new();
    let mut k = 0;
    for a in 0..g {
        for c in a + 1..g {
            let uq: Vec<f64> = per_model.iter().map(|(_, _, p)| p[k]).collect();
            let ms = MeanStd::of(&uq)?;
            pairwise.push((grid[a], grid[c], pairs_e[k], ms.mean, ms.std));
            k += 1;
        }
    }
    Ok(Some(NSelectionReport {
        grid: grid.to_vec(),
        groups: blocks.len(),
        accuracy_ensemble: acc_e,
        accuracy_uq: MeanStd::of(&per_model.iter().map(|(a, _, _)| *a).collect::<Vec<_>>())?,
        mrr_ensemble: mrr_e,
        mrr_uq: MeanStd::of(&per_model.iter().map(|(_, m, _)| *m).collect::<Vec<_>>())?,
        spearman_ensemble: spearman_of(&ev.sig_tilde_r)?,
        spearman_uq: if spearman_models.is_empty() {
            None
        } else {
            Some(MeanStd::of(&spearman_models)?)
        },
        pairwise,
    }))
}

fn log10_or_nan(v: f64) -> f64 {
    if v > 0.0 {
        v.log10()
    } else {
        f64::NAN
    }
}

fn scatter_table(ev: &Evaluation, dataset: &UqDataset) -> Result<DatTable> {
    let mut columns = vec!["i".to_string()];
    columns.extend(dataset.snapshot.features.iter().cloned());
    columns.extend(
        [
            "dt",
            "exact",
            "mu_tilde",
            "mu_hat_mean",
            "log10_eps_r",
            "log10_sigma_tilde_r",
            "log10_sigma_hat_r",
        ]
        .map(String::from),
    );
    let mut table = DatTable::new(columns);
    let r = ev.uq.len().max(1) as f64;
    for (p, &i) in ev.indices.iter().enumerate() {
        let mut row = vec![i as f64];
        row.extend(&dataset.records[i].x);
        let mu_hat = ev.uq.iter().map(|(m, _)| m[p]).sum::<f64>() / r;
        let sig_hat = ev.uq.iter().map(|(_, s)| s[p]).sum::<f64>() / r;
        row.extend([
            dataset.param_set(i).dt(),
            ev.truth[p],
            ev.ens_mean[p],
            mu_hat,
            log10_or_nan(ev.eps_r[p]),
            log10_or_nan(ev.sig_tilde_r[p]),
            log10_or_nan(sig_hat),
        ]);
        table.push(row)?;
    }
    Ok(table)
}

/// Retrains `R` models on growing prefixes of a seeded permutation of the
/// training split and scores `ρ̄` on the evaluated split.
fn training_size_study(
    dataset: &UqDataset,
    manifest: &UqManifest,
    fractions: &[f64],
    eval_indices: &[usize],
    component: usize,
    base: u64,
    workers: usize,
) -> Result<DatTable> {
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::Config("training fractions must lie in (0, 1]".into()));
    }
    let r = manifest.models.len();
    let mut order = manifest.split.train.clone();
    order.shuffle(&mut rng::stream(rng::tagged(base, tag::SPLIT, 1)));
    let valid = UqData::from_dataset(dataset, &manifest.split.valid, manifest.target)?;
    let valid = (!valid.is_empty()).then_some(valid);
    let jobs: Vec<(usize, usize)> = (0..fractions.len()).flat_map(|f| (0..r).map(move |k| (f, k))).collect();
    let sizes: Vec<usize> = fractions
        .iter()
        .map(|f| ((f * order.len() as f64).ceil() as usize).clamp(2.min(order.len()), order.len()))
        .collect();
    let fitted = par_map(&jobs, workers, |&(f, k)| {
        let mut subset = order[..sizes[f]].to_vec();
        subset.sort_unstable();
        let train = UqData::from_dataset(dataset, &subset, manifest.target)?;
        let cfg = UqNetConfig {
            seed: model_seed(base, k),
            ..manifest.net.clone()
        };
        match fit(&train, valid.as_ref(), manifest.target, &cfg) {
            Ok(m) => Ok(Some(m)),
            Err(Error::TrainingDiverged { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut table = DatTable::new(["fraction", "n_train", "rho_mean", "rho_std", "models"]);
    for (f, fraction) in fractions.iter().enumerate() {
        let models: Vec<UqModel> = fitted[f * r..(f + 1) * r].iter().flatten().cloned().collect();
        let ev = evaluate(dataset, &models, eval_indices, manifest.target, component)?;
        let per_model: Vec<Vec<f64>> = ev.uq.iter().map(|(_, s)| s.clone()).collect();
        let rho = if per_model.is_empty() {
            None
        } else {
            defined_correlation(mean_model_correlation(&per_model, &ev.eps_r))?
        };
        table.push(vec![
            *fraction,
            sizes[f] as f64,
            rho.as_ref().map_or(f64::NAN, |c| c.mean),
            rho.as_ref().map_or(f64::NAN, |c| c.std),
            models.len() as f64,
        ])?;
    }
    Ok(table)
}

pub fn cmd_eval_uq(config: &EvalUqConfig, options: &RunOptions) -> Result<Outcome> {
    options.prepare()?;
    let manifest = UqManifest::load(&config.models)?;
    let models = manifest.load_models(&config.models)?;
    if models.is_empty() {
        return Err(Error::Config(format!(
            "{} holds no trained models",
            config.models.display()
        )));
    }
    let dataset_dir = config.dataset.clone().unwrap_or_else(|| manifest.dataset.clone());
    let dataset = UqDataset::load(&dataset_dir)?;
    let base = options.seed.unwrap_or(manifest.net.seed);
    let effective = EvalUqConfig {
        dataset: Some(dataset_dir),
        ..config.clone()
    };
    let meta = Meta::new("eval-uq", &(&effective, &manifest), base)?;
    let split = config.split;
    let indices = split.indices(&manifest.split);
    if indices.is_empty() {
        return Err(Error::Config(format!("the {} split is empty", split.name())));
    }
    let q_max = config.q_max.unwrap_or(dataset.snapshot.config.q);
    if q_max > dataset.snapshot.config.q {
        return Err(Error::Config(format!(
            "q_max {q_max} exceeds the dataset's Q = {}",
            dataset.snapshot.config.q
        )));
    }
    let target = manifest.target;
    let ev = evaluate(&dataset, &models, indices, target, config.component)?;
    let report = quality(&ev, split, target, config.component, q_max)?;
    let tag = split.name();
    let mut files = Vec::new();

    let path = options.path(&format!("quality_{tag}.json"));
    write_json(&path, &meta, &report)?;
    files.push(path);

    if let Some(q) = &report.q_equivalence {
        let mut table = DatTable::new(["q", "rho_ensemble_q", "rho_uq_mean"]);
        let uq = report.rho_uq.as_ref().map_or(f64::NAN, |c| c.mean);
        for (qq, rho) in &q.curve {
            table.push(vec![*qq as f64, *rho, uq])?;
        }
        let path = options.path(&format!("q_curve_{tag}.dat"));
        table.write(&path, &meta)?;
        files.push(path);
    }

    let path = options.path(&format!("scatter_{tag}.dat"));
    scatter_table(&ev, &dataset)?.write(&path, &meta)?;
    files.push(path);

    if let GridPolicy::FixedTVaryNGrid { grid, .. } = &dataset.snapshot.config.sampler.grid {
        if let Some(sel) = n_selection(&ev, &dataset, grid)? {
            let path = options.path(&format!("n_selection_{tag}.json"));
            write_json(&path, &meta, &sel)?;
            files.push(path);
        }
    }

    if !config.training_fractions.is_empty() {
        let table = training_size_study(
            &dataset,
            &manifest,
            &config.training_fractions,
            indices,
            config.component,
            base,
            options.workers,
        )?;
        let path = options.path(&format!("training_size_{tag}.dat"));
        table.write(&path, &meta)?;
        files.push(path);
    }

    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
    Ok(Outcome {
        files,
        diverged: false,
        summary: format!(
            "{tag} split, {} samples: rho(eps_r, sigma_tilde_r) = {}, mean rho(eps_r, sigma_hat_r) = {} over {} models",
            report.samples,
            fmt(report.rho_ensemble),
            fmt(report.rho_uq.as_ref().map(|c| c.mean)),
            report.models
        ),
    })
}
