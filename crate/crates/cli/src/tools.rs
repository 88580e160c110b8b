//! The non-sweep subcommands: single runs, the coupled lower-bound
//! experiment, rate fits over CSV output and the rate-region curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use osc_core::adversary::{lower_bound_class, AdversarySpec, LowerBoundVariant};
use osc_core::analysis::{fit_rate, lower_bound_check, summarize, RegretSummary};
use osc_core::engine::{run, run_coupled_pair, GameConfig};
use osc_core::learner::LearnerConfig;
use osc_core::model::{Context, Transcript};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentSpec;
use crate::error::CliError;
use crate::sweep::{grid, replicate_seed};

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub algorithm: String,
    pub adversary: String,
    pub seed: u64,
    pub config_digest: String,
    pub p: f64,
    pub eta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    #[serde(flatten)]
    pub summary: RegretSummary,
}

/// Plays the `point`-th grid point of a spec with its `replicate`-th seed.
pub fn single_run(spec: &ExperimentSpec, point: usize, replicate: u32) -> Result<(Transcript, RunReport), CliError> {
    let class = Arc::new(spec.class.build()?);
    let points = grid(spec);
    let gp = points
        .get(point)
        .ok_or_else(|| CliError::config(None, format!("grid point {point} out of range (grid has {})", points.len())))?;
    let cfg = spec.learner_config(gp, class.len())?;
    let seed = replicate_seed(spec.base_seed, replicate);
    let game = GameConfig::new(cfg.clone(), spec.adversary.clone(), seed);
    let tr = run(&game, class.clone())?;
    let report = RunReport {
        algorithm: gp.algorithm.name().to_string(),
        adversary: spec.adversary.name().to_string(),
        seed,
        config_digest: format!("{:016x}", tr.config_digest),
        p: cfg.p,
        eta: cfg.eta,
        lambda: cfg.lambda,
        epsilon: cfg.epsilon,
        summary: summarize(&tr, &class),
    };
    Ok((tr, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundReport {
    pub algorithm: String,
    pub gamma: f64,
    pub horizon: u32,
    pub seeds: u32,
    pub p: f64,
    /// Mean excess abstention under the all-ones process.
    pub k_hat: f64,
    /// Mean mistakes under the perturbed process.
    pub m_hat: f64,
    pub m_hat_stderr: f64,
    pub bound: f64,
    pub margin: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Runs `seeds` coupled (P1, P2) pairs for one learner and checks
/// `M̂ ≥ γ(e^{−2γK̂}T − K̂)` with a margin of three standard errors of `M̂`.
pub fn lower_bound_experiment(learner: &LearnerConfig, gamma: f64, seeds: u32, base_seed: u64) -> Result<LowerBoundReport, CliError> {
    if seeds < 2 {
        return Err(CliError::config(None, "the lower-bound experiment needs at least 2 seeds"));
    }
    let class = Arc::new(lower_bound_class());
    let spec = |variant| AdversarySpec::LowerBound {
        variant,
        gamma,
        context: Context(1),
    };
    let pairs: Result<Vec<(f64, f64)>, CliError> = (0..seeds)
        .into_par_iter()
        .map(|i| {
            let seed = replicate_seed(base_seed, i);
            let c1 = GameConfig::new(learner.clone(), spec(LowerBoundVariant::P1), seed);
            let c2 = GameConfig::new(learner.clone(), spec(LowerBoundVariant::P2), seed);
            let (t1, t2) = run_coupled_pair(&c1, &c2, class.clone())?;
            let k = summarize(&t1, &class).excess_abstentions as f64;
            let m = summarize(&t2, &class).mistakes as f64;
            Ok((k, m))
        })
        .collect();
    let pairs = pairs?;
    let n = pairs.len() as f64;
    let k_hat = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let m_hat = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let var = pairs.iter().map(|p| (p.1 - m_hat).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let check = lower_bound_check(k_hat, gamma, learner.horizon as f64, m_hat, 3.0 * se)?;
    Ok(LowerBoundReport {
        algorithm: learner.algorithm.name().to_string(),
        gamma,
        horizon: learner.horizon,
        seeds,
        p: learner.p,
        k_hat,
        m_hat,
        m_hat_stderr: se,
        bound: check.bound,
        margin: check.margin,
        slack: check.slack,
        pass: check.pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesFit {
    pub series: String,
    pub slope: f64,
    pub stderr: f64,
    pub n_points: usize,
}

/// Fits `log value` against `log T` for each series of a CSV.
///
/// Rows are grouped by the `series` column when present, otherwise by
/// `algorithm|adversary` when those exist, otherwise into one series named
/// after the value column. Repeated `T` values within a series are averaged.
pub fn fit_csv(text: &str, column: &str) -> Result<Vec<SeriesFit>, CliError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let t_col = find("T").ok_or_else(|| CliError::Input("CSV has no `T` column".into()))?;
    let v_col = find(column).ok_or_else(|| CliError::Input(format!("CSV has no `{column}` column")))?;
    let series_col = find("series");
    let alg_adv = find("algorithm").zip(find("adversary"));

    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let parse = |c: usize| -> Result<f64, CliError> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Input(format!("line {line}: column {} is not a number", headers.get(c).unwrap_or("?"))))
        };
        let t = parse(t_col)?;
        let v = parse(v_col)?;
        let key = match (series_col, alg_adv) {
            (Some(c), _) => rec.get(c).unwrap_or_default().to_string(),
            (None, Some((a, b))) => format!("{}|{}", rec.get(a).unwrap_or_default(), rec.get(b).unwrap_or_default()),
            (None, None) => column.to_string(),
        };
        let cell = groups.entry(key).or_default().entry(t.to_bits()).or_insert((0.0, 0));
        cell.0 += v;
        cell.1 += 1;
    }
    groups
        .into_iter()
        .map(|(series, cells)| {
            let mut pts: Vec<(f64, f64)> = cells.into_iter().map(|(t, (s, n))| (f64::from_bits(t), s / n as f64)).collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let fit = fit_rate(&pts).map_err(|e| CliError::Input(format!("series {series}: {e}")))?;
            Ok(SeriesFit {
                series,
                slope: fit.slope,
                stderr: fit.stderr,
                n_points: fit.n_points,
            })
        })
        .collect()
}

/// Boundary curves of the achievable (mistake, abstention) exponent region
/// as CSV rows `curve,mu,alpha`, for μ on a uniform grid over [0, 1].
///
/// * `frontier`: α + μ = 1, below which no learner can go.
/// * `fixed_rate`: α = 1 − μ/2, what a non-adaptive mixed-loss learner gets.
/// * `adaptive`: max(1/2, 1 − μ, (1 + α* − μ)/2), the adaptive guarantee.
/// * `alpha_star_constraint`: the segment where 2α + μ = 1 + α* binds;
///   only present when α* ≥ 1/2.
pub fn pareto_curves(alpha_star: f64, points: usize) -> Result<String, CliError> {
    if !(0.0..=1.0).contains(&alpha_star) {
        return Err(CliError::config(None, format!("alpha_star must lie in [0, 1], got {alpha_star}")));
    }
    if points < 2 {
        return Err(CliError::config(None, "need at least 2 grid points"));
    }
    let mut out = String::from("curve,mu,alpha\n");
    let mus: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    for &mu in &mus {
        let _ = writeln!(out, "frontier,{mu},{}", 1.0 - mu);
    }
    for &mu in &mus {
        let _ = writeln!(out, "fixed_rate,{mu},{}", 1.0 - mu / 2.0);
    }
    for &mu in &mus {
        let a = osc_core::analysis::target_rate(mu, alpha_star).alpha_tilde;
        let _ = writeln!(out, "adaptive,{mu},{a}");
    }
    if alpha_star >= 0.5 {
        for &mu in &mus {
            let a = (1.0 + alpha_star - mu) / 2.0;
            if a >= 0.5_f64.max(1.0 - mu) {
                let _ = writeln!(out, "alpha_star_constraint,{mu},{a}");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_powers_fit_exactly() {
        let mut text = String::from("T,value\n");
        for k in 10..=14 {
            let t = 2f64.powi(k);
            let _ = writeln!(text, "{t},{}", 3.0 * t.powf(0.5));
        }
        let fits = fit_csv(&text, "value").unwrap();
        assert_eq!(fits.len(), 1);
        assert_eq!(fits[0].series, "value");
        assert!((fits[0].slope - 0.5).abs() < 1e-9);
        assert!(fits[0].stderr < 1e-9);
        assert_eq!(fits[0].n_points, 5);
    }

    #[test]
    fn repeated_t_is_averaged_and_series_split() {
        let text = "series,T,v\na,100,1\na,100,3\na,200,4\na,400,8\nb,100,5\nb,200,5\nb,400,5\n";
        let fits = fit_csv(text, "v").unwrap();
        assert_eq!(fits.len(), 2);
        assert!((fits[0].slope - 1.0).abs() < 1e-9);
        // Constant values are floored to 0.5 but still give slope 0.
        assert!(fits[1].slope.abs() < 1e-9);
    }

    #[test]
    fn pareto_curves_meet_where_expected() {
        let csv = pareto_curves(0.8, 11).unwrap();
        let row = |curve: &str, mu: f64| -> f64 {
            csv.lines()
                .find(|l| l.starts_with(&format!("{curve},{mu},")))
                .and_then(|l| l.rsplit(',').next())
                .unwrap()
                .parse()
                .unwrap()
        };
        assert_eq!(row("frontier", 0.3), 0.7);
        assert_eq!(row("adaptive", 0.0), 1.0);
        // At μ = 0.6 the α* constraint binds: (1 + 0.8 − 0.6)/2 = 0.6.
        assert!((row("adaptive", 0.6) - 0.6).abs() < 1e-12);
        assert!((row("alpha_star_constraint", 0.6) - 0.6).abs() < 1e-12);
        assert!(!pareto_curves(0.3, 11).unwrap().contains("alpha_star_constraint"));
        assert!(pareto_curves(1.5, 11).is_err());
    }
}
