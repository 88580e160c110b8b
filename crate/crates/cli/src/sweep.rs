//! Parallel parameter sweeps and their CSV outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use osc_core::analysis::{competitor_on, summary_from, RegretSummary};
use osc_core::engine::{run, GameConfig};
use osc_core::learner::{Algorithm, LearnerConfig};
use osc_core::model::FunctionClass;
use osc_core::rng::derive_seed;
use rayon::prelude::*;

use crate::config::{EtaExpr, ExperimentSpec, OutputMode, RateExpr};
use crate::error::CliError;

pub const SUMMARY_HEADER: &str = "run_id,seed,algorithm,adversary,T,p,eta,lambda,epsilon,M_T,A_T,A_star,M_star,excess_mistakes,excess_abstentions,MMEA,coin_heads";

const METRICS: [&str; 8] = [
    "M_T",
    "A_T",
    "A_star",
    "M_star",
    "excess_mistakes",
    "excess_abstentions",
    "MMEA",
    "coin_heads",
];

/// One cell of the parameter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub algorithm: Algorithm,
    pub p: RateExpr,
    pub eta: EtaExpr,
    pub lambda: f64,
    pub epsilon: f64,
    pub horizon: u32,
}

impl GridPoint {
    /// Identifies the point up to its horizon, so rate fits can group by it.
    pub fn series(&self, adversary: &str) -> String {
        format!(
            "{}|{}|p={}|eta={}|lambda={}|epsilon={}",
            self.algorithm.name(),
            adversary,
            self.p,
            self.eta,
            self.lambda,
            self.epsilon
        )
    }
}

/// Grid points in a fixed order: algorithm, p, eta, lambda, epsilon, horizon.
pub fn grid(spec: &ExperimentSpec) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &algorithm in &spec.algorithms {
        for &p in &spec.p {
            for &eta in &spec.eta {
                for &lambda in &spec.lambda {
                    for &epsilon in &spec.epsilon {
                        for &horizon in &spec.horizons {
                            out.push(GridPoint {
                                algorithm,
                                p,
                                eta,
                                lambda,
                                epsilon,
                                horizon,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Seed of the `i`-th replicate; shared across grid points so that
/// comparisons between points use common randomness.
pub fn replicate_seed(base: u64, i: u32) -> u64 {
    derive_seed(base, i as u64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub run_id: usize,
    pub point: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub adversary: &'static str,
    pub p: f64,
    pub eta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub summary: RegretSummary,
}

impl SummaryRow {
    fn metrics(&self) -> [f64; 8] {
        let s = &self.summary;
        [
            s.mistakes as f64,
            s.abstentions as f64,
            s.a_star as f64,
            s.m_star as f64,
            s.excess_mistakes as f64,
            s.excess_abstentions as f64,
            s.mmea as f64,
            s.coin_heads as f64,
        ]
    }
}

/// Everything a sweep produced.
#[derive(Debug)]
pub struct SweepResult {
    pub rows: Vec<SummaryRow>,
    pub summary_csv: String,
    pub aggregate_csv: String,
    pub failures: Vec<(usize, String)>,
}

/// Prefix lengths reported for a run of length `horizon`.
fn checkpoints(horizon: u32, every: Option<u32>) -> Vec<u32> {
    match every {
        None => vec![horizon],
        Some(k) => {
            let mut v: Vec<u32> = (1..).map(|i| i * k).take_while(|&t| t < horizon).collect();
            v.push(horizon);
            v
        }
    }
}

struct Job<'a> {
    run_id: usize,
    point: usize,
    seed: u64,
    gp: &'a GridPoint,
}

fn run_job(
    spec: &ExperimentSpec,
    class: &Arc<FunctionClass>,
    job: &Job<'_>,
    transcripts: Option<&Path>,
) -> Result<Vec<SummaryRow>, CliError> {
    let gp = job.gp;
    let cfg: LearnerConfig = spec.learner_config(gp, class.len())?;
    let game = GameConfig::new(cfg.clone(), spec.adversary.clone(), job.seed);
    let tr = run(&game, class.clone())?;
    if let Some(dir) = transcripts {
        fs::write(dir.join(format!("run_{:06}.csv", job.run_id)), tr.to_csv())?;
    }
    let rows = checkpoints(gp.horizon, spec.checkpoint_every)
        .into_iter()
        .map(|t| {
            let prefix = tr.prefix(t as usize);
            let report = competitor_on(prefix, class, false);
            SummaryRow {
                run_id: job.run_id,
                point: job.point,
                seed: job.seed,
                algorithm: gp.algorithm,
                adversary: spec.adversary.name(),
                p: cfg.p,
                eta: cfg.eta,
                lambda: cfg.lambda,
                epsilon: cfg.epsilon,
                summary: summary_from(prefix, &report),
            }
        })
        .collect();
    Ok(rows)
}

/// Worker count from `OSC_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var("OSC_WORKERS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs every (grid point, replicate) pair. Failed runs are reported in
/// `failures`; the CSVs cover the runs that succeeded.
pub fn run_sweep(spec: &ExperimentSpec, workers: Option<usize>, transcripts: Option<&Path>) -> Result<SweepResult, CliError> {
    let class = Arc::new(spec.class.build()?);
    spec.validate(class.len())?;
    let points = grid(spec);
    let jobs: Vec<Job<'_>> = points
        .iter()
        .enumerate()
        .flat_map(|(pi, gp)| {
            (0..spec.seeds).map(move |s| Job {
                run_id: pi * spec.seeds as usize + s as usize,
                point: pi,
                seed: replicate_seed(spec.base_seed, s),
                gp,
            })
        })
        .collect();

    let work = || -> Vec<Result<Vec<SummaryRow>, (usize, String)>> {
        jobs.par_iter()
            .map(|job| run_job(spec, &class, job, transcripts).map_err(|e| (job.run_id, e.to_string())))
            .collect()
    };
    let outcomes = match workers.or_else(workers_from_env) {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => rows.extend(r),
            Err(f) => failures.push(f),
        }
    }
    let summary_csv = summary_csv(&rows);
    let aggregate_csv = aggregate_csv(&rows, &points, spec.adversary.name());
    Ok(SweepResult {
        rows,
        summary_csv,
        aggregate_csv,
        failures,
    })
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::with_capacity(96 * (rows.len() + 1));
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run_id,
            r.seed,
            r.algorithm.name(),
            r.adversary,
            s.horizon,
            r.p,
            r.eta,
            r.lambda,
            r.epsilon,
            s.mistakes,
            s.abstentions,
            s.a_star,
            s.m_star,
            s.excess_mistakes,
            s.excess_abstentions,
            s.mmea,
            s.coin_heads
        );
    }
    out
}

/// Mean and sample standard deviation of each metric per (grid point, T).
pub fn aggregate_csv(rows: &[SummaryRow], points: &[GridPoint], adversary: &str) -> String {
    let mut out = String::from("series,algorithm,adversary,T,p,eta,lambda,epsilon,n");
    for m in METRICS {
        let _ = write!(out, ",mean_{m},sd_{m}");
    }
    out.push('\n');

    // Rows arrive grouped by point, then by seed; within a run, by T.
    let mut keys: Vec<(usize, u64)> = rows.iter().map(|r| (r.point, r.summary.horizon)).collect();
    keys.sort_unstable();
    keys.dedup();
    for (point, t) in keys {
        let group: Vec<&SummaryRow> = rows.iter().filter(|r| r.point == point && r.summary.horizon == t).collect();
        let first = group[0];
        let gp = &points[point];
        let n = group.len() as f64;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            gp.series(adversary),
            gp.algorithm.name(),
            adversary,
            t,
            first.p,
            first.eta,
            first.lambda,
            first.epsilon,
            group.len()
        );
        for k in 0..METRICS.len() {
            let vals: Vec<f64> = group.iter().map(|r| r.metrics()[k]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let sd = if group.len() > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let _ = write!(out, ",{mean},{sd}");
        }
        out.push('\n');
    }
    out
}

/// Runs a sweep and writes `summary.csv`, `aggregate.csv` and `resolved.cfg`
/// (the configuration with all defaults filled in) into the output directory.
pub fn sweep_to_dir(spec: &ExperimentSpec, output: Option<PathBuf>, workers: Option<usize>) -> Result<SweepResult, CliError> {
    let dir = output.unwrap_or_else(|| spec.output.clone());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("resolved.cfg"), spec.to_config_string())?;
    let transcripts = match spec.mode {
        OutputMode::FullTranscript => {
            let t = dir.join("transcripts");
            fs::create_dir_all(&t)?;
            Some(t)
        }
        OutputMode::SummaryOnly => None,
    };
    let result = run_sweep(spec, workers, transcripts.as_deref())?;
    fs::write(dir.join("summary.csv"), &result.summary_csv)?;
    fs::write(dir.join("aggregate.csv"), &result.aggregate_csv)?;
    let errors = dir.join("errors.txt");
    if result.failures.is_empty() {
        if errors.exists() {
            fs::remove_file(&errors)?;
        }
        Ok(result)
    } else {
        let mut text = String::new();
        for (id, msg) in &result.failures {
            let _ = writeln!(text, "run {id}: {msg}");
        }
        fs::write(&errors, text)?;
        Err(CliError::RunsFailed {
            failed: result.failures.len(),
            total: result.failures.len() + result.rows.iter().map(|r| r.run_id).collect::<std::collections::BTreeSet<_>>().len(),
            first: result.failures[0].1.clone(),
        })
    }
}
