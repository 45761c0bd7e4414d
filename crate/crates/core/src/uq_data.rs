//! Dataset factory for the UQ model: sample BSDE parameter sets, solve each
//! one `Q` times, and persist `{xᵢ, yᵢ, zᵢ}` with the full ensembles.
//!
//! On disk a dataset is a directory holding `dataset.json` (the generation
//! snapshot) and `records.jsonl` (one record per line, in index order).

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dbsde::{ensemble_solve, run_seed, DbsdeConfig, DbsdeResult};
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::problems::{AnalyticSolution, BlackScholesParams, BurgersParams, ProblemSpec};
use crate::rng::{self, tag};

pub const SNAPSHOT_FILE: &str = "dataset.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const SPLIT_FILE: &str = "split.json";

/// Closed interval `[lo, hi]`; `lo == hi` pins the value.
pub type Range = (f64, f64);

fn draw(rng: &mut rng::StreamRng, (lo, hi): Range) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn varies((lo, hi): Range) -> bool {
    hi > lo
}

fn check_range(name: &str, (lo, hi): Range) -> Result<()> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("invalid range for {name}: [{lo}, {hi}]")));
    }
    Ok(())
}

/// Uniform ranges of the problem parameters other than `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyRanges {
    BlackScholes {
        drift: Range,
        vol: Range,
        spot: Range,
        rate: Range,
        dividend: Range,
        strike: f64,
    },
    Burgers {
        dim: usize,
        diffusion: Range,
    },
}

impl FamilyRanges {
    /// `b ∈ [0.1, 0.4]`, `S₀ ∈ [K−20, K+20]`, `R ∈ [0.001, 0.1]`, `a = 0.05`, `δ = 0`, `K = 100`.
    pub fn black_scholes_default() -> Self {
        FamilyRanges::BlackScholes {
            drift: (0.05, 0.05),
            vol: (0.1, 0.4),
            spot: (80.0, 120.0),
            rate: (0.001, 0.1),
            dividend: (0.0, 0.0),
            strike: 100.0,
        }
    }

    /// `b ∈ [0.2, 40]` in dimension `d`.
    pub fn burgers_default(dim: usize) -> Self {
        FamilyRanges::Burgers {
            dim,
            diffusion: (0.2, 40.0),
        }
    }

    fn named_ranges(&self) -> Vec<(&'static str, Range)> {
        match self {
            FamilyRanges::BlackScholes {
                drift,
                vol,
                spot,
                rate,
                dividend,
                ..
            } => vec![("a", *drift), ("b", *vol), ("S0", *spot), ("R", *rate), ("delta", *dividend)],
            FamilyRanges::Burgers { diffusion, .. } => vec![("b", *diffusion)],
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, r) in self.named_ranges() {
            check_range(name, r)?;
        }
        match self {
            FamilyRanges::BlackScholes { strike, vol, spot, .. } => {
                if !(*strike > 0.0) || !(vol.0 > 0.0) || !(spot.0 > 0.0) {
                    return Err(Error::Config("strike, volatility and spot must be positive".into()));
                }
            }
            FamilyRanges::Burgers { dim, diffusion } => {
                if *dim == 0 || !(diffusion.0 > 0.0) {
                    return Err(Error::Config("Burgers needs d ≥ 1 and positive diffusion".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            FamilyRanges::BlackScholes { .. } => 1,
            FamilyRanges::Burgers { dim, .. } => *dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FamilyRanges::BlackScholes { .. } => "black_scholes",
            FamilyRanges::Burgers { .. } => "burgers",
        }
    }
}

/// How `(T, N, Δt)` are chosen for each draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum GridPolicy {
    FixedNFixedT { steps: usize, maturity: f64 },
    /// `N = max(2, round(T/Δt))`.
    FixedDtVaryT { dt: f64, maturity: Range },
    FixedNVaryT { steps: usize, maturity: Range },
    /// Every draw is solved once per `N` in the grid.
    FixedTVaryNGrid { maturity: f64, grid: Vec<usize> },
}

impl GridPolicy {
    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let ok = match self {
            GridPolicy::FixedNFixedT { steps, maturity } => *steps > 0 && positive(*maturity),
            GridPolicy::FixedDtVaryT { dt, maturity } => {
                check_range("T", *maturity)?;
                positive(*dt) && positive(maturity.0)
            }
            GridPolicy::FixedNVaryT { steps, maturity } => {
                check_range("T", *maturity)?;
                *steps > 0 && positive(maturity.0)
            }
            GridPolicy::FixedTVaryNGrid { maturity, grid } => {
                !grid.is_empty() && grid.iter().all(|n| *n > 0) && positive(*maturity)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid grid policy {self:?}")))
        }
    }

    /// Records produced per parameter draw.
    pub fn expansion(&self) -> usize {
        match self {
            GridPolicy::FixedTVaryNGrid { grid, .. } => grid.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSampler {
    pub family: FamilyRanges,
    pub grid: GridPolicy,
}

/// One fully specified solver input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub problem: ProblemSpec,
    pub steps: usize,
    /// Index of the parameter draw; shared by all `N` of a grid expansion.
    pub group: usize,
    pub features: Vec<f64>,
}

impl ParamSet {
    pub fn dt(&self) -> f64 {
        self.problem.horizon() / self.steps as f64
    }

    pub fn analytic(&self) -> Result<Option<AnalyticSolution>> {
        Ok(self.problem.instantiate()?.analytic())
    }
}

impl ParamSampler {
    /// Dataset 𝒟₁: `T = 0.25`, `N = 10`.
    pub fn black_scholes_d1() -> Self {
        Self {
            family: FamilyRanges::black_scholes_default(),
            grid: GridPolicy::FixedNFixedT {
                steps: 10,
                maturity: 0.25,
            },
        }
    }

    /// Dataset 𝒟₂: `Δt = 0.025`, `T ∈ [1/12, 1]`.
    pub fn black_scholes_d2() -> Self {
        Self {
            family: FamilyRanges::black_scholes_default(),
            grid: GridPolicy::FixedDtVaryT {
                dt: 0.025,
                maturity: (1.0 / 12.0, 1.0),
            },
        }
    }

    /// Dataset 𝒟₃: `N = 16`, `T ∈ [1/12, 1]`.
    pub fn black_scholes_d3() -> Self {
        Self {
            family: FamilyRanges::black_scholes_default(),
            grid: GridPolicy::FixedNVaryT {
                steps: 16,
                maturity: (1.0 / 12.0, 1.0),
            },
        }
    }

    /// Burgers dataset: `b ∈ [0.2, 40]`, `T ∈ [1/12, 0.3]`, `N = 32`.
    pub fn burgers_table6(dim: usize) -> Self {
        Self {
            family: FamilyRanges::burgers_default(dim),
            grid: GridPolicy::FixedNVaryT {
                steps: 32,
                maturity: (1.0 / 12.0, 0.3),
            },
        }
    }

    /// `T = 0.3` with `N ∈ {2, 8, 32, 128}`.
    pub fn burgers_n_grid(dim: usize) -> Self {
        Self {
            family: FamilyRanges::burgers_default(dim),
            grid: GridPolicy::FixedTVaryNGrid {
                maturity: 0.3,
                grid: vec![2, 8, 32, 128],
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        self.grid.validate()
    }

    /// Names of the feature vector entries: the varied family parameters,
    /// then the grid quantities the policy varies.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .family
            .named_ranges()
            .into_iter()
            .filter(|(_, r)| varies(*r))
            .map(|(n, _)| n.to_string())
            .collect();
        match &self.grid {
            GridPolicy::FixedNFixedT { .. } => {}
            GridPolicy::FixedDtVaryT { .. } => names.extend(["T".into(), "N".into()]),
            GridPolicy::FixedNVaryT { .. } => names.extend(["T".into(), "dt".into()]),
            GridPolicy::FixedTVaryNGrid { .. } => names.push("N".into()),
        }
        names
    }

    /// Parameter sets for records `0..records`. Draw `g` uses its own stream,
    /// so any record can be regenerated on its own.
    pub fn param_set(&self, record: usize, seed: u64) -> ParamSet {
        let per = self.grid.expansion();
        let group = record / per;
        let mut rng = rng::stream(rng::tagged(seed, tag::PARAMS, group as u64));
        let values: Vec<f64> = self
            .family
            .named_ranges()
            .iter()
            .map(|(_, r)| draw(&mut rng, *r))
            .collect();
        let mut features: Vec<f64> = self
            .family
            .named_ranges()
            .iter()
            .zip(&values)
            .filter(|((_, r), _)| varies(*r))
            .map(|(_, v)| *v)
            .collect();

        let (maturity, steps) = match &self.grid {
            GridPolicy::FixedNFixedT { steps, maturity } => (*maturity, *steps),
            GridPolicy::FixedDtVaryT { dt, maturity } => {
                let t = draw(&mut rng, *maturity);
                let n = ((t / dt).round() as usize).max(2);
                features.extend([t, n as f64]);
                (t, n)
            }
            GridPolicy::FixedNVaryT { steps, maturity } => {
                let t = draw(&mut rng, *maturity);
                features.extend([t, t / *steps as f64]);
                (t, *steps)
            }
            GridPolicy::FixedTVaryNGrid { maturity, grid } => {
                let n = grid[record % per];
                features.push(n as f64);
                (*maturity, n)
            }
        };

        let problem = match &self.family {
            FamilyRanges::BlackScholes { strike, .. } => ProblemSpec::BlackScholes(BlackScholesParams {
                drift: values[0],
                vol: values[1],
                spot: values[2],
                rate: values[3],
                dividend: values[4],
                strike: *strike,
                maturity,
            }),
            FamilyRanges::Burgers { dim, .. } => {
                ProblemSpec::Burgers(BurgersParams::new(*dim, values[0], maturity))
            }
        };
        ParamSet {
            problem,
            steps,
            group,
            features,
        }
    }
}

/// `draws` i.i.d. parameter draws, each expanded over the policy's `N` grid.
pub fn sample_params(sampler: &ParamSampler, draws: usize, seed: u64) -> Result<Vec<ParamSet>> {
    sampler.validate()?;
    Ok((0..draws * sampler.grid.expansion())
        .map(|i| sampler.param_set(i, seed))
        .collect())
}

/// One solved parameter set. `y`, `z` are the first ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqRecord {
    pub i: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub z: Vec<f64>,
    pub ens_y: Vec<f64>,
    pub ens_z: Vec<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub div: Vec<bool>,
}

impl UqRecord {
    fn from_runs(i: usize, x: Vec<f64>, runs: &[DbsdeResult]) -> Self {
        Self {
            i,
            x,
            y: runs[0].y0,
            z: runs[0].z0.clone(),
            ens_y: runs.iter().map(|r| r.y0).collect(),
            ens_z: runs.iter().map(|r| r.z0.clone()).collect(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            div: runs.iter().map(|r| r.diverged).collect(),
        }
    }

    /// Component `k` of every ensemble member's `Z₀`.
    pub fn ens_z_component(&self, k: usize) -> Vec<f64> {
        self.ens_z.iter().map(|z| z[k]).collect()
    }
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub sampler: ParamSampler,
    /// Number of parameter draws (records = draws × grid expansion).
    pub draws: usize,
    pub q: usize,
    /// Solver settings; `time_steps` and `seed` are overridden per record.
    pub solver: DbsdeConfig,
    pub seed: u64,
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.draws == 0 || self.q == 0 {
            return Err(Error::Config("M and Q must be at least 1".into()));
        }
        self.solver.validate()
    }

    pub fn records(&self) -> usize {
        self.draws * self.sampler.grid.expansion()
    }

    pub fn param_set(&self, i: usize) -> ParamSet {
        self.sampler.param_set(i, self.seed)
    }

    /// Base seed of record `i`'s ensemble.
    pub fn record_seed(&self, i: usize) -> u64 {
        rng::tagged(self.seed, tag::RECORD, i as u64)
    }

    pub fn solver_for(&self, i: usize) -> DbsdeConfig {
        DbsdeConfig {
            time_steps: self.param_set(i).steps,
            seed: self.record_seed(i),
            ..self.solver.clone()
        }
    }

    /// Solves record `i` from scratch.
    pub fn solve_record(&self, i: usize) -> Result<UqRecord> {
        let params = self.param_set(i);
        let problem = params.problem.instantiate()?;
        let runs = ensemble_solve(problem.as_ref(), &self.solver_for(i), self.q)?;
        Ok(UqRecord::from_runs(i, params.features, &runs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSnapshot {
    pub problem: String,
    pub features: Vec<String>,
    pub config: GenerateConfig,
}

/// Disjoint sorted index lists covering every record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UqDataset {
    pub snapshot: DatasetSnapshot,
    pub records: Vec<UqRecord>,
    pub split: Option<Split>,
}

/// Records with a negative `y` or any negative `z` component, and runs flagged diverged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergenceCensus {
    pub negative_y: usize,
    pub negative_z: usize,
    pub flagged_runs: usize,
}

impl UqDataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let snapshot = read_snapshot(dir)?.ok_or_else(|| {
            Error::io(
                dir.join(SNAPSHOT_FILE),
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset snapshot not found"),
            )
        })?;
        let records = read_records(&dir.join(RECORDS_FILE))?;
        let split_path = dir.join(SPLIT_FILE);
        let split = if split_path.exists() {
            let text = fs::read_to_string(&split_path).map_err(|e| Error::io(&split_path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::json(&split_path, e))?)
        } else {
            None
        };
        Ok(Self {
            snapshot,
            records,
            split,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() == self.snapshot.config.records()
    }

    pub fn param_set(&self, i: usize) -> ParamSet {
        self.snapshot.config.param_set(i)
    }

    pub fn groups(&self) -> Vec<usize> {
        (0..self.records.len()).map(|i| self.param_set(i).group).collect()
    }

    pub fn census(&self) -> DivergenceCensus {
        DivergenceCensus {
            negative_y: self.records.iter().filter(|r| r.y < 0.0).count(),
            negative_z: self.records.iter().filter(|r| r.z.iter().any(|z| *z < 0.0)).count(),
            flagged_runs: self.records.iter().flat_map(|r| &r.div).filter(|d| **d).count(),
        }
    }

    /// Assigns a seeded split (see [`split`]) and returns it.
    pub fn with_split(mut self, m_valid: usize, m_test: usize, seed: u64) -> Result<Self> {
        self.split = Some(split(&self.groups(), m_valid, m_test, seed)?);
        Ok(self)
    }

    pub fn save_split(&self, dir: &Path) -> Result<()> {
        let split = self
            .split
            .as_ref()
            .ok_or_else(|| Error::Contract("dataset has no split".into()))?;
        let path = dir.join(SPLIT_FILE);
        let text = serde_json::to_string(split).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Default hold-out size: a tenth of the records, at least one.
pub fn default_holdout(records: usize) -> usize {
    ((records as f64 * 0.1).round() as usize).max(1)
}

/// Seeded permutation of the parameter-draw groups. Whole groups go to one
/// side, so `m_valid` and `m_test` must be multiples of the group size.
pub fn split(groups: &[usize], m_valid: usize, m_test: usize, seed: u64) -> Result<Split> {
    let m = groups.len();
    if m_valid + m_test >= m {
        return Err(Error::Config(format!(
            "M_valid + M_test = {} leaves no training data out of {m}",
            m_valid + m_test
        )));
    }
    let mut ids: Vec<usize> = groups.to_vec();
    ids.dedup();
    let per = m / ids.len().max(1);
    if ids.len() * per != m || m_valid % per != 0 || m_test % per != 0 {
        return Err(Error::Config(format!(
            "hold-out sizes must be multiples of the group size {per}"
        )));
    }
    let mut rng = rng::stream(rng::tagged(seed, tag::SPLIT, 0));
    ids.shuffle(&mut rng);
    let (nv, nt) = (m_valid / per, m_test / per);
    let members = |gs: &[usize]| {
        let mut v: Vec<usize> = (0..m).filter(|i| gs.contains(&groups[*i])).collect();
        v.sort_unstable();
        v
    };
    Ok(Split {
        valid: members(&ids[..nv]),
        test: members(&ids[nv..nv + nt]),
        train: members(&ids[nv + nt..]),
    })
}

fn read_snapshot(dir: &Path) -> Result<Option<DatasetSnapshot>> {
    let path = dir.join(SNAPSHOT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?))
}

/// Reads complete lines; a torn final line from an interrupted append is dropped.
fn read_records(path: &Path) -> Result<Vec<UqRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut records = Vec::with_capacity(lines.len());
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<UqRecord>(line) {
            Ok(r) => {
                if r.i != records.len() {
                    return Err(Error::Contract(format!(
                        "{}: record {} out of order at line {}",
                        path.display(),
                        r.i,
                        n + 1
                    )));
                }
                records.push(r);
            }
            Err(_) if n + 1 == lines.len() => break,
            Err(e) => return Err(Error::json(path, e)),
        }
    }
    Ok(records)
}

fn rewrite_records(path: &Path, records: &[UqRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::json(path, e))?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Options for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerateOptions {
    pub workers: usize,
    /// Stop once this many records exist (for staged runs).
    pub stop_after: Option<usize>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            stop_after: None,
        }
    }
}

/// Generates (or resumes) the dataset in `dir`. Records are computed in
/// parallel chunks and appended strictly in index order, so the file is
/// identical for any worker count and after any interruption.
pub fn generate(config: &GenerateConfig, dir: &Path, options: GenerateOptions) -> Result<UqDataset> {
    config.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let snapshot = DatasetSnapshot {
        problem: config.sampler.family.kind().to_string(),
        features: config.sampler.feature_names(),
        config: config.clone(),
    };
    match read_snapshot(dir)? {
        Some(existing) if existing != snapshot => {
            return Err(Error::Config(format!(
                "{} holds a dataset generated with a different configuration",
                dir.display()
            )));
        }
        Some(_) => {}
        None => {
            let path = dir.join(SNAPSHOT_FILE);
            let text = serde_json::to_string_pretty(&snapshot).map_err(|e| Error::json(&path, e))?;
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }

    let path: PathBuf = dir.join(RECORDS_FILE);
    let mut records = read_records(&path)?;
    // drop any torn tail so appends start on a clean line
    rewrite_records(&path, &records)?;
    let total = config.records();
    let target = options.stop_after.map_or(total, |s| s.min(total));
    let chunk = options.workers.max(1) * 2;
    let mut file = OpenOptions::new()
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;

    while records.len() < target {
        let start = records.len();
        let end = (start + chunk).min(target);
        let indices: Vec<usize> = (start..end).collect();
        let solved = par_map(&indices, options.workers, |&i| config.solve_record(i))?;
        let mut text = String::new();
        for r in solved {
            let r = r?;
            text.push_str(&serde_json::to_string(&r).map_err(|e| Error::json(&path, e))?);
            text.push('\n');
            records.push(r);
        }
        file.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
        file.flush().map_err(|e| Error::io(&path, e))?;
    }

    Ok(UqDataset {
        snapshot,
        records,
        split: None,
    })
}

/// Recomputes record `i` from the snapshot and its stored seeds.
pub fn rederive_record(dataset: &UqDataset, i: usize) -> Result<UqRecord> {
    let config = &dataset.snapshot.config;
    let record = dataset
        .records
        .get(i)
        .ok_or_else(|| Error::Config(format!("no record {i}")))?;
    let params = config.param_set(i);
    let problem = params.problem.instantiate()?;
    let base = DbsdeConfig {
        time_steps: params.steps,
        ..config.solver.clone()
    };
    let runs = record
        .seeds
        .iter()
        .map(|&seed| crate::dbsde::train(problem.as_ref(), &DbsdeConfig { seed, ..base.clone() }))
        .collect::<Result<Vec<_>>>()?;
    Ok(UqRecord::from_runs(i, params.features, &runs))
}

/// Stored seeds agree with the derivation rule for record `i`.
pub fn seeds_consistent(dataset: &UqDataset, i: usize) -> bool {
    let base = dataset.snapshot.config.record_seed(i);
    dataset.records[i]
        .seeds
        .iter()
        .enumerate()
        .all(|(q, s)| *s == run_seed(base, q))
}
