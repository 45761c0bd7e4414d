use serde::{Deserialize, Serialize};

use super::{slug, Outcome, RunOptions};
use crate::dbsde::{run_seed, train_with_observer, DbsdeConfig};
use crate::error::{Error, Result};
use crate::metrics::ensemble_stats;
use crate::nn::LrSchedule;
use crate::parallel::par_map;
use crate::problems::{AnalyticSolution, BlackScholesParams, ProblemSpec};
use crate::report::{write_json, DatTable, Meta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSchedule {
    pub name: String,
    pub lr: LrSchedule,
}

/// The one hyperparameter varied by a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum Sweep {
    /// Only the iteration count varies (read at the checkpoints).
    Checkpoints,
    LearningRate { variants: Vec<NamedSchedule> },
    Width { widths: Vec<usize> },
    Steps { steps: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorStudyConfig {
    pub problem: ProblemSpec,
    pub solver: DbsdeConfig,
    /// Ensemble size `Q` per sweep value.
    pub runs: usize,
    /// Iteration counts at which `(Y₀, Z₀)` are read; empty means ten even points.
    pub checkpoints: Vec<u64>,
    pub sweep: Sweep,
}

impl Default for ErrorStudyConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::BlackScholes(BlackScholesParams::reference()),
            solver: DbsdeConfig::default(),
            runs: 5,
            checkpoints: Vec::new(),
            sweep: Sweep::Checkpoints,
        }
    }
}

impl ErrorStudyConfig {
    fn points(&self) -> Result<Vec<(String, DbsdeConfig)>> {
        let base = &self.solver;
        let points: Vec<(String, DbsdeConfig)> = match &self.sweep {
            Sweep::Checkpoints => vec![("base".into(), base.clone())],
            Sweep::LearningRate { variants } => variants
                .iter()
                .map(|v| (v.name.clone(), DbsdeConfig { lr: v.lr.clone(), ..base.clone() }))
                .collect(),
            Sweep::Width { widths } => widths
                .iter()
                .map(|&w| (format!("eta{w}"), DbsdeConfig { hidden_width: Some(w), ..base.clone() }))
                .collect(),
            Sweep::Steps { steps } => steps
                .iter()
                .map(|&n| (format!("N{n}"), DbsdeConfig { time_steps: n, ..base.clone() }))
                .collect(),
        };
        if points.is_empty() {
            return Err(Error::Config("the sweep axis has no values".into()));
        }
        for (_, c) in &points {
            c.validate()?;
        }
        Ok(points)
    }

    fn checkpoint_list(&self) -> Result<Vec<u64>> {
        let k = self.solver.train_steps;
        let list: Vec<u64> = if self.checkpoints.is_empty() {
            (1..=10).map(|i| (k * i / 10).max(1)).collect()
        } else {
            self.checkpoints.clone()
        };
        if list.windows(2).any(|w| w[0] >= w[1]) || list[0] == 0 || *list.last().unwrap() > k {
            return Err(Error::Config(format!(
                "checkpoints must increase strictly within 1..={k}"
            )));
        }
        Ok(list)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct RunRecord {
    sweep: String,
    run: usize,
    seed: u64,
    diverged: bool,
    steps_run: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PointSummary {
    label: String,
    final_rmse_y: f64,
    final_rmse_z: f64,
    final_mean_y: f64,
    final_std_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct StudySummary {
    analytic: AnalyticSolution,
    checkpoints: Vec<u64>,
    points: Vec<PointSummary>,
}

/// `(Y₀, Z₀[0])` at each checkpoint for one run.
struct Trace {
    y: Vec<f64>,
    z: Vec<f64>,
    record: RunRecord,
}

pub fn cmd_error_study(config: &ErrorStudyConfig, options: &RunOptions) -> Result<Outcome> {
    options.prepare()?;
    if config.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let base = options.seed.unwrap_or(config.solver.seed);
    let effective = ErrorStudyConfig {
        solver: DbsdeConfig {
            seed: base,
            ..config.solver.clone()
        },
        ..config.clone()
    };
    let points = effective.points()?;
    let checkpoints = effective.checkpoint_list()?;
    let problem = effective.problem.instantiate()?;
    let truth = problem
        .analytic()
        .ok_or_else(|| Error::Config("error studies need a problem with an analytic solution".into()))?;

    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..effective.runs).map(move |q| (p, q)))
        .collect();
    let traces = par_map(&jobs, options.workers, |&(p, q)| {
        let (label, solver) = &points[p];
        let cfg = DbsdeConfig {
            seed: run_seed(base, q),
            ..solver.clone()
        };
        let mut y = Vec::with_capacity(checkpoints.len());
        let mut z = Vec::with_capacity(checkpoints.len());
        let mut next = 0;
        let result = train_with_observer(problem.as_ref(), &cfg, |info| {
            if next < checkpoints.len() && info.step == checkpoints[next] {
                y.push(info.model.y0);
                z.push(info.model.z0[0]);
                next += 1;
            }
        })?;
        // after a divergence the last finite iterate stands in for later checkpoints
        while y.len() < checkpoints.len() {
            y.push(result.y0);
            z.push(result.z0[0]);
        }
        Ok(Trace {
            y,
            z,
            record: RunRecord {
                sweep: label.clone(),
                run: q,
                seed: cfg.seed,
                diverged: result.diverged,
                steps_run: result.steps_run,
            },
        })
    })?
    .into_iter()
    .collect::<Result<Vec<Trace>>>()?;

    let meta = Meta::new("error-study", &effective, base)?
        .with_note("checkpoints=read mid-training from the running iterate, optimizer state kept");
    let mut files = Vec::new();
    let labels: Vec<&String> = points.iter().map(|(l, _)| l).collect();
    let mut rmse_y = DatTable::new(
        std::iter::once("K".to_string()).chain(labels.iter().map(|l| format!("rmse_y_{l}"))),
    );
    let mut rmse_z = DatTable::new(
        std::iter::once("K".to_string()).chain(labels.iter().map(|l| format!("rmse_z_{l}"))),
    );
    let per_point = |p: usize| &traces[p * effective.runs..(p + 1) * effective.runs];
    for (c, &k) in checkpoints.iter().enumerate() {
        let mut ry = vec![k as f64];
        let mut rz = vec![k as f64];
        for p in 0..points.len() {
            let ys: Vec<f64> = per_point(p).iter().map(|t| t.y[c]).collect();
            let zs: Vec<f64> = per_point(p).iter().map(|t| t.z[c]).collect();
            ry.push(ensemble_stats(&ys, Some(truth.y0))?.rmse.unwrap_or(f64::NAN));
            rz.push(ensemble_stats(&zs, Some(truth.z0[0]))?.rmse.unwrap_or(f64::NAN));
        }
        rmse_y.push(ry)?;
        rmse_z.push(rz)?;
    }
    for (name, table) in [("rmse_y.dat", &rmse_y), ("rmse_z.dat", &rmse_z)] {
        let path = options.path(name);
        table.write(&path, &meta)?;
        files.push(path);
    }

    for (p, label) in labels.iter().enumerate() {
        for (var, exact) in [("y", truth.y0), ("z", truth.z0[0])] {
            let mut table = DatTable::new(
                std::iter::once("K".to_string()).chain((0..effective.runs).map(|q| format!("abs_err_run{q}"))),
            );
            for (c, &k) in checkpoints.iter().enumerate() {
                let mut row = vec![k as f64];
                row.extend(per_point(p).iter().map(|t| {
                    let v = if var == "y" { t.y[c] } else { t.z[c] };
                    (v - exact).abs()
                }));
                table.push(row)?;
            }
            let path = options.path(&format!("abs_err_{var}_{}.dat", slug(label)));
            table.write(&path, &meta)?;
            files.push(path);
        }
    }

    let records: Vec<&RunRecord> = traces.iter().map(|t| &t.record).collect();
    let sidecar = options.path("divergence.json");
    write_json(&sidecar, &meta, &records)?;
    files.push(sidecar);

    let last = checkpoints.len() - 1;
    let summary_points: Vec<PointSummary> = labels
        .iter()
        .enumerate()
        .map(|(p, label)| {
            let ys: Vec<f64> = per_point(p).iter().map(|t| t.y[last]).collect();
            let stats = ensemble_stats(&ys, Some(truth.y0))?;
            Ok(PointSummary {
                label: (*label).clone(),
                final_rmse_y: rmse_y.rows[last][p + 1],
                final_rmse_z: rmse_z.rows[last][p + 1],
                final_mean_y: stats.mean,
                final_std_y: stats.std,
            })
        })
        .collect::<Result<_>>()?;
    let summary_text = summary_points
        .iter()
        .map(|p| format!("{}: rmse_y {:.3e}, rmse_z {:.3e}", p.label, p.final_rmse_y, p.final_rmse_z))
        .collect::<Vec<_>>()
        .join("; ");
    let json = options.path("error_study.json");
    write_json(
        &json,
        &meta,
        &StudySummary {
            analytic: truth,
            checkpoints: checkpoints.clone(),
            points: summary_points,
        },
    )?;
    files.push(json);

    Ok(Outcome {
        files,
        diverged: records.iter().any(|r| r.diverged),
        summary: summary_text,
    })
}
