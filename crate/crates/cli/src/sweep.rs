//! Parameter sweeps: one isolated run directory per value.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use grushin::Regime;
use serde::Serialize;

use crate::commands::{self, Failure, Outcome, EXIT_INVALID, EXIT_OK};
use crate::config::RunConfig;
use crate::report::write_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    Mu,
    MuFraction,
    R,
    Lambda,
}

#[derive(Debug, Serialize)]
struct SweepRow {
    value: f64,
    dir: String,
    exit_code: i32,
    message: String,
    metrics: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    command: &'static str,
    param: SweepParam,
    base: RunConfig,
    rows: Vec<SweepRow>,
    /// Over the converged runs sorted by μ: the plus-sheet level rises
    /// toward 0 as μ decreases.
    plus_energy_trend: Option<bool>,
}

fn apply(cfg: &mut RunConfig, param: SweepParam, v: f64) {
    match param {
        SweepParam::Mu => {
            cfg.problem.mu = v;
            cfg.solver.mu_fraction = None;
            cfg.critical.mu_fraction = None;
        }
        SweepParam::MuFraction => match cfg.problem.regime {
            Regime::Subcritical => cfg.solver.mu_fraction = Some(v),
            Regime::Critical => cfg.critical.mu_fraction = Some(v),
        },
        SweepParam::R => cfg.problem.r = v,
        SweepParam::Lambda => cfg.problem.lambda = v,
    }
}

fn label(param: SweepParam, v: f64) -> String {
    let name = match param {
        SweepParam::Mu => "mu",
        SweepParam::MuFraction => "mu_fraction",
        SweepParam::R => "r",
        SweepParam::Lambda => "lambda",
    };
    format!("{name}={v}")
}

fn one(cfg: &RunConfig, cache_root: &Path) -> Result<Outcome, Failure> {
    match cfg.problem.regime {
        Regime::Subcritical => commands::solve(cfg, None),
        Regime::Critical => commands::solve_critical(cfg, Some(cache_root)),
    }
}

/// Whether `m⁺` increases toward 0 as μ decreases.
fn trend(rows: &[SweepRow]) -> Option<bool> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.exit_code == EXIT_OK)
        .filter_map(|r| Some((*r.metrics.get("mu")?, *r.metrics.get("plus_energy")?)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(pts.windows(2).all(|w| w[1].1 <= w[0].1) && pts.iter().all(|p| p.1 < 0.0))
}

pub fn run(base: &RunConfig, param: SweepParam, values: &[f64], workers: usize) -> Result<Outcome, Failure> {
    if values.is_empty() {
        return Err(Failure::new(EXIT_INVALID, "sweep needs at least one value"));
    }
    let root = base.output_dir();
    fs::create_dir_all(&root)?;
    let workers = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    let jobs: Vec<(f64, RunConfig)> = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            apply(&mut cfg, param, v);
            // absolute so the output-root variable is not applied twice
            cfg.output.dir = root.join("sweep").join(label(param, v));
            (v, cfg)
        })
        .collect();
    let mut rows = Vec::with_capacity(jobs.len());
    for chunk in jobs.chunks(workers) {
        let done: Vec<SweepRow> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(v, cfg)| {
                    let root = &root;
                    scope.spawn(move || {
                        let res = one(cfg, root);
                        let (exit_code, message, metrics) = match res {
                            Ok(o) => (EXIT_OK, o.summary, o.metrics),
                            Err(f) => (f.code, f.message, BTreeMap::new()),
                        };
                        SweepRow {
                            value: *v,
                            dir: cfg.output.dir.display().to_string(),
                            exit_code,
                            message,
                            metrics,
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        rows.extend(done);
    }
    let plus_energy_trend = trend(&rows);
    let worst = rows.iter().map(|r| r.exit_code).max().unwrap_or(EXIT_OK);
    let failed = rows.iter().filter(|r| r.exit_code != EXIT_OK).count();
    write_json(
        &root.join("sweep.json"),
        &SweepReport {
            command: "sweep",
            param,
            base: base.clone(),
            rows,
            plus_energy_trend,
        },
    )?;
    let summary = format!(
        "sweep: {} runs, {} failed, plus-energy trend {}",
        values.len(),
        failed,
        match plus_energy_trend {
            Some(true) => "monotone",
            Some(false) => "not monotone",
            None => "n/a",
        }
    );
    if worst != EXIT_OK {
        return Err(Failure::new(worst, summary));
    }
    Ok(Outcome {
        summary,
        metrics: BTreeMap::new(),
    })
}
