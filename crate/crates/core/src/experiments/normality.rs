use serde::{Deserialize, Serialize};

use super::{Outcome, RunOptions};
use crate::dbsde::{ensemble_solve_parallel, DbsdeConfig};
use crate::error::{Error, Result};
use crate::problems::{BlackScholesParams, ProblemSpec};
use crate::report::{write_json, DatTable, Meta};
use crate::stats::{dagostino_pearson, histogram_with_normal_fit, NormalityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalityConfig {
    pub problem: ProblemSpec,
    pub solver: DbsdeConfig,
    /// Independent solver runs whose `(Y₀, Z₀)` form the samples.
    pub runs: usize,
    pub bins: usize,
    /// Points on the fitted normal curve.
    pub curve_points: usize,
    /// Test this sample instead of running the solver.
    pub samples: Option<Vec<f64>>,
}

impl Default for NormalityConfig {
    fn default() -> Self {
        let mut params = BlackScholesParams::reference();
        params.maturity = 0.33;
        Self {
            problem: ProblemSpec::BlackScholes(params),
            solver: DbsdeConfig {
                time_steps: 16,
                ..DbsdeConfig::default()
            },
            runs: 100,
            bins: 20,
            curve_points: 200,
            samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Series {
    name: String,
    report: NormalityReport,
    fitted_mean: f64,
    fitted_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct NormalitySummary {
    series: Vec<Series>,
    diverged_runs: usize,
    tests: &'static str,
}

pub fn cmd_normality(config: &NormalityConfig, options: &RunOptions) -> Result<Outcome> {
    options.prepare()?;
    let base = options.seed.unwrap_or(config.solver.seed);
    let effective = NormalityConfig {
        solver: DbsdeConfig {
            seed: base,
            ..config.solver.clone()
        },
        ..config.clone()
    };
    if effective.bins == 0 {
        return Err(Error::Config("bins must be positive".into()));
    }
    let (named, diverged_runs): (Vec<(String, Vec<f64>)>, usize) = match &effective.samples {
        Some(s) => (vec![("sample".into(), s.clone())], 0),
        None => {
            let problem = effective.problem.instantiate()?;
            let runs = ensemble_solve_parallel(problem.as_ref(), &effective.solver, effective.runs, options.workers)?;
            let mut named = vec![("y0".to_string(), runs.iter().map(|r| r.y0).collect())];
            for k in 0..problem.dim() {
                named.push((format!("z0_{k}"), runs.iter().map(|r| r.z0[k]).collect()));
            }
            (named, runs.iter().filter(|r| r.diverged).count())
        }
    };

    let meta = Meta::new("normality", &effective, base)?.with_note("tests=dagostino_pearson");
    let mut files = Vec::new();
    let mut series = Vec::new();
    for (name, sample) in &named {
        let report = dagostino_pearson(sample)?;
        let hist = histogram_with_normal_fit(sample, effective.bins)?;
        let mut bins = DatTable::new(["left", "right", "density"]);
        for (k, density) in hist.densities.iter().enumerate() {
            bins.push(vec![hist.edges[k], hist.edges[k + 1], *density])?;
        }
        let mut curve = DatTable::new(["x", "pdf"]);
        for (x, p) in hist.fitted_curve(effective.curve_points) {
            curve.push(vec![x, p])?;
        }
        for (prefix, table) in [("hist", &bins), ("fit", &curve)] {
            let path = options.path(&format!("{prefix}_{name}.dat"));
            table.write(&path, &meta)?;
            files.push(path);
        }
        series.push(Series {
            name: name.clone(),
            report,
            fitted_mean: hist.mean,
            fitted_std: hist.std,
        });
    }
    let summary = series
        .iter()
        .map(|s| format!("{}: K² = {:.3}, p = {:.4}", s.name, s.report.k2, s.report.p_value))
        .collect::<Vec<_>>()
        .join("; ");
    let path = options.path("normality.json");
    write_json(
        &path,
        &meta,
        &NormalitySummary {
            series,
            diverged_runs,
            tests: "D'Agostino-Pearson K² only (Shapiro-Wilk not computed)",
        },
    )?;
    files.push(path);
    Ok(Outcome {
        files,
        diverged: diverged_runs > 0,
        summary,
    })
}
