use serde::{Deserialize, Serialize};

use super::{Outcome, RunOptions};
use crate::dbsde::{run_seed, train_with_observer, DbsdeConfig, DbsdeResult};
use crate::error::{Error, Result};
use crate::metrics::{ensemble_stats, EnsembleStats};
use crate::parallel::par_map;
use crate::problems::{AnalyticSolution, BlackScholesParams, ProblemSpec};
use crate::report::{write_json, DatTable, Meta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub problem: ProblemSpec,
    pub solver: DbsdeConfig,
    /// Independent runs with seeds derived from the base seed.
    pub runs: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::BlackScholes(BlackScholesParams::reference()),
            solver: DbsdeConfig::default(),
            runs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: ProblemSpec,
    pub runs: Vec<DbsdeResult>,
    pub analytic: Option<AnalyticSolution>,
    /// `|Y₀,q − Y₀|` per run.
    pub y0_abs_error: Option<Vec<f64>>,
    pub y0_stats: EnsembleStats,
    /// One entry per component of `Z₀`.
    pub z0_stats: Vec<EnsembleStats>,
}

pub fn cmd_solve(config: &SolveConfig, options: &RunOptions) -> Result<Outcome> {
    options.prepare()?;
    if config.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let base = options.seed.unwrap_or(config.solver.seed);
    let effective = SolveConfig {
        solver: DbsdeConfig {
            seed: base,
            ..config.solver.clone()
        },
        ..config.clone()
    };
    effective.solver.validate()?;
    let problem = effective.problem.instantiate()?;
    let seeds: Vec<u64> = (0..config.runs).map(|q| run_seed(base, q)).collect();
    let outcomes = par_map(&seeds, options.workers, |&seed| {
        let cfg = DbsdeConfig {
            seed,
            ..effective.solver.clone()
        };
        let mut losses = Vec::with_capacity(cfg.train_steps as usize);
        train_with_observer(problem.as_ref(), &cfg, |info| losses.push(info.loss)).map(|r| (r, losses))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let analytic = problem.analytic();
    let runs: Vec<DbsdeResult> = outcomes.iter().map(|(r, _)| r.clone()).collect();
    let ys: Vec<f64> = runs.iter().map(|r| r.y0).collect();
    let y0_stats = ensemble_stats(&ys, analytic.as_ref().map(|a| a.y0))?;
    let z0_stats = (0..problem.dim())
        .map(|k| {
            let zs: Vec<f64> = runs.iter().map(|r| r.z0[k]).collect();
            ensemble_stats(&zs, analytic.as_ref().map(|a| a.z0[k]))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = SolveReport {
        problem: effective.problem.clone(),
        y0_abs_error: analytic.as_ref().map(|a| ys.iter().map(|y| (y - a.y0).abs()).collect()),
        analytic,
        runs,
        y0_stats,
        z0_stats,
    };

    let meta = Meta::new("solve", &effective, base)?;
    let json = options.path("solve.json");
    write_json(&json, &meta, &report)?;
    let mut columns = vec!["step".to_string()];
    columns.extend((0..config.runs).map(|q| format!("loss_run{q}")));
    let mut table = DatTable::new(columns);
    let longest = outcomes.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
    for step in 0..longest {
        let mut row = vec![(step + 1) as f64];
        row.extend(outcomes.iter().map(|(_, l)| l.get(step).copied().unwrap_or(f64::NAN)));
        table.push(row)?;
    }
    let dat = options.path("loss.dat");
    table.write(&dat, &meta)?;

    let diverged = report.runs.iter().any(|r| r.diverged);
    let mut summary = format!(
        "y0 = {:.6} (std {:.2e} over {} runs), z0 = {:?}",
        report.y0_stats.mean,
        report.y0_stats.std,
        config.runs,
        report.z0_stats.iter().map(|s| s.mean).collect::<Vec<_>>()
    );
    if let (Some(a), Some(e)) = (&report.analytic, report.y0_stats.rmse) {
        summary.push_str(&format!("; exact y0 = {:.6}, |y0 − exact| rmse = {e:.3e}", a.y0));
    }
    Ok(Outcome {
        files: vec![json, dat],
        diverged,
        summary,
    })
}
