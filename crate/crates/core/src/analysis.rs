//! Post-hoc metrics over a finished transcript.
//!
//! Everything here is an exhaustive scan of the class against the realised
//! stream, so the reports are exact rather than estimated.

use serde::Serialize;

use crate::error::{param, Result};
use crate::model::{FunctionClass, RoundRecord, Transcript};

/// Best-in-hindsight quantities for one transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompetitorReport {
    /// Per-function mistake counts over the whole stream.
    pub mistakes: Vec<u64>,
    /// Per-function abstention counts over the whole stream.
    pub abstentions: Vec<u64>,
    /// Zero-mistake function with the fewest abstentions, lowest id on ties.
    pub f_star: usize,
    pub a_star: u64,
    /// Minimum mistakes over the class.
    pub m_star: u64,
    /// Pareto staircase `(m, A*(m))`: each entry is the fewest abstentions
    /// achievable with at most `m` mistakes, listed where the value drops.
    pub staircase: Vec<(u64, u64)>,
    /// `B_t*` for `t = 1..=T`, when requested.
    pub b_star_series: Option<Vec<u64>>,
}

impl CompetitorReport {
    /// `A*(m)`; `None` when no function has at most `m` mistakes.
    pub fn a_star_of_m(&self, m: u64) -> Option<u64> {
        self.staircase
            .iter()
            .take_while(|(mm, _)| *mm <= m)
            .last()
            .map(|(_, a)| *a)
    }

    /// `A*(m)` with the least-mistake fallback.
    pub fn a_star_of_m_or_fallback(&self, m: u64) -> u64 {
        self.a_star_of_m(m).unwrap_or_else(|| self.staircase[0].1)
    }
}

/// Tallies every function on the stream.
pub fn competitor(transcript: &Transcript, class: &FunctionClass, with_b_star: bool) -> CompetitorReport {
    competitor_on(&transcript.rounds, class, with_b_star)
}

/// As [`competitor`] over a slice of rounds (for prefixes).
pub fn competitor_on(rounds: &[RoundRecord], class: &FunctionClass, with_b_star: bool) -> CompetitorReport {
    let n = class.len();
    let mut mistakes = vec![0u64; n];
    let mut abstentions = vec![0u64; n];
    let mut sampled_mistake = vec![false; n];
    let mut b_series = with_b_star.then(|| Vec::with_capacity(rounds.len()));

    for r in rounds {
        let heads = r.coin.is_heads();
        for f in class.functions() {
            let out = f.at(r.context);
            if out.is_abstain() {
                abstentions[f.id] += 1;
            } else if out.is_mistake(r.label) {
                mistakes[f.id] += 1;
                if heads {
                    sampled_mistake[f.id] = true;
                }
            }
        }
        if let Some(series) = &mut b_series {
            let b = (0..n)
                .filter(|&f| !sampled_mistake[f])
                .map(|f| abstentions[f])
                .min()
                .expect("the all-abstain function never errs");
            series.push(b);
        }
    }

    let (f_star, a_star) = (0..n)
        .filter(|&f| mistakes[f] == 0)
        .map(|f| (f, abstentions[f]))
        .min_by_key(|&(f, a)| (a, f))
        .expect("the all-abstain function never errs");
    let m_star = *mistakes.iter().min().expect("class is non-empty");

    // Sort by mistakes; record each strict improvement in abstentions.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&f| (mistakes[f], abstentions[f]));
    let mut staircase: Vec<(u64, u64)> = Vec::new();
    for f in order {
        let (m, a) = (mistakes[f], abstentions[f]);
        match staircase.last() {
            Some(&(_, best)) if a >= best => {}
            _ => staircase.push((m, a)),
        }
    }

    CompetitorReport {
        mistakes,
        abstentions,
        f_star,
        a_star,
        m_star,
        staircase,
        b_star_series: b_series,
    }
}

/// Learner-side counts and regrets for one transcript.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RegretSummary {
    pub horizon: u64,
    pub mistakes: u64,
    pub abstentions: u64,
    pub a_star: u64,
    pub m_star: u64,
    pub excess_mistakes: i64,
    pub excess_abstentions: i64,
    /// Mistake-matched excess abstention `A_T − A*(M_T)`.
    pub mmea: i64,
    pub coin_heads: u64,
}

pub fn summarize(transcript: &Transcript, class: &FunctionClass) -> RegretSummary {
    summarize_on(&transcript.rounds, class)
}

pub fn summarize_on(rounds: &[RoundRecord], class: &FunctionClass) -> RegretSummary {
    let report = competitor_on(rounds, class, false);
    summary_from(rounds, &report)
}

/// Combines learner counts with an already computed report.
pub fn summary_from(rounds: &[RoundRecord], report: &CompetitorReport) -> RegretSummary {
    let mistakes = rounds.iter().filter(|r| r.is_mistake()).count() as u64;
    let abstentions = rounds.iter().filter(|r| r.is_abstention()).count() as u64;
    let coin_heads = rounds.iter().filter(|r| r.coin.is_heads()).count() as u64;
    let matched = report.a_star_of_m_or_fallback(mistakes);
    RegretSummary {
        horizon: rounds.len() as u64,
        mistakes,
        abstentions,
        a_star: report.a_star,
        m_star: report.m_star,
        excess_mistakes: mistakes as i64 - report.m_star as i64,
        excess_abstentions: abstentions as i64 - report.a_star as i64,
        mmea: abstentions as i64 - matched as i64,
        coin_heads,
    }
}

/// Least-squares fit of `log value = a + b log T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (0 with exactly collinear points).
    pub stderr: f64,
    pub n_points: usize,
    /// Set when some value was below 0.5 and got floored there.
    pub floored: bool,
}

/// Values below this are raised to it before taking logs.
pub const RATE_FLOOR: f64 = 0.5;

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(param(format!("fit_rate needs at least 3 points, got {}", points.len())));
    }
    let mut floored = false;
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(t, v) in points {
        if t.is_nan() || t <= 0.0 || !t.is_finite() || !v.is_finite() {
            return Err(param(format!("fit_rate point ({t}, {v}) is not usable")));
        }
        let v = if v < RATE_FLOOR {
            floored = true;
            RATE_FLOOR
        } else {
            v
        };
        xs.push(t.ln());
        ys.push(v.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(param("fit_rate needs at least two distinct horizons"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        intercept,
        stderr,
        n_points: points.len(),
        floored,
    })
}

/// Abstention exponent reachable for a mistake exponent, with its tuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TargetRate {
    pub alpha_tilde: f64,
    /// Exploration exponent: `p = T^{-u}`.
    pub u: f64,
    /// Abstention-weight excess exponent: `λ = T^{-(u+v)}`.
    pub v: f64,
}

/// `α̃ = max(1 − μ, (1 + (α* − μ)_+)/2)` with `v = (α* − μ)_+` and
/// `u = min(1 − v, 2μ)/2`.
pub fn target_rate(mu: f64, alpha_star: f64) -> TargetRate {
    let v = (alpha_star - mu).max(0.0);
    let u = (1.0 - v).min(2.0 * mu) / 2.0;
    TargetRate {
        alpha_tilde: (1.0 - mu).max((1.0 + v) / 2.0),
        u,
        v,
    }
}

/// Outcome of comparing mistakes under the noisy law with the coupling bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowerBoundCheck {
    pub bound: f64,
    pub observed: f64,
    pub margin: f64,
    /// `observed + margin − bound`; non-negative on a pass.
    pub slack: f64,
    pub pass: bool,
}

/// `γ(e^{−2γK}T − K)`.
pub fn lower_bound_value(k_hat: f64, gamma: f64, horizon: f64) -> f64 {
    gamma * ((-2.0 * gamma * k_hat).exp() * horizon - k_hat)
}

/// Passes when `M̂ ≥ bound − margin`.
pub fn lower_bound_check(k_hat: f64, gamma: f64, horizon: f64, m_hat: f64, margin: f64) -> Result<LowerBoundCheck> {
    if !(0.0..=0.5).contains(&gamma) {
        return Err(param(format!("gamma = {gamma} outside [0, 1/2]")));
    }
    let bound = lower_bound_value(k_hat, gamma, horizon);
    let slack = m_hat + margin - bound;
    Ok(LowerBoundCheck {
        bound,
        observed: m_hat,
        margin,
        slack,
        pass: slack >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coin, Context, Label, Prediction};
    use approx::assert_relative_eq;

    const A: Prediction = Prediction::Abstain;
    fn l(v: u16) -> Prediction {
        Prediction::Label(Label(v))
    }

    fn transcript(rows: &[(u32, u16, Prediction, Coin)]) -> Transcript {
        Transcript {
            rounds: rows
                .iter()
                .enumerate()
                .map(|(i, &(x, y, a, c))| RoundRecord::new(i as u32 + 1, Context(x), Label(y), a, c))
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn small_competitor_example() {
        // {f_⊥, g = (1, ⊥), h = (1, 1)}; stream a, a, b with labels 1, 1, 2.
        let class = FunctionClass::new(2, 2, vec![vec![A, A], vec![l(1), A], vec![l(1), l(1)]]).unwrap();
        let tr = transcript(&[
            (1, 1, A, Coin::Heads),
            (1, 1, A, Coin::Heads),
            (2, 2, A, Coin::Heads),
        ]);
        let rep = competitor(&tr, &class, true);
        assert_eq!(rep.f_star, 1);
        assert_eq!(rep.a_star, 1);
        assert_eq!(rep.m_star, 0);
        assert_eq!(rep.mistakes, vec![0, 0, 1]);
        assert_eq!(rep.a_star_of_m(0), Some(1));
        assert_eq!(rep.a_star_of_m(1), Some(0));
        // h errs on a heads round at t = 3, so B* stays with g.
        assert_eq!(rep.b_star_series.unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn all_abstain_class() {
        let class = FunctionClass::new(2, 2, vec![vec![A, A]]).unwrap();
        let tr = transcript(&[(1, 1, l(1), Coin::Tails); 7]);
        let rep = competitor(&tr, &class, false);
        assert_eq!(rep.f_star, class.abstain_index());
        assert_eq!(rep.a_star, 7);
    }

    #[test]
    fn summary_counts() {
        let class = FunctionClass::new(1, 2, vec![vec![A], vec![l(1)]]).unwrap();
        let tr = transcript(&[
            (1, 2, l(1), Coin::Tails),
            (1, 2, l(1), Coin::Tails),
            (1, 2, l(1), Coin::NotTossed),
            (1, 1, A, Coin::Heads),
            (1, 1, l(1), Coin::Tails),
        ]);
        let s = summarize(&tr, &class);
        assert_eq!(s.mistakes, 3);
        assert_eq!(s.abstentions, 1);
        assert_eq!(s.coin_heads, 1);
        assert_eq!(s.a_star, 5);
        assert_eq!(s.excess_abstentions, -4);
        // g has 3 mistakes and 0 abstentions: A*(3) = 0.
        assert_eq!(s.mmea, 1);
    }

    #[test]
    fn mmea_can_be_negative() {
        // A learner that abstains exactly on the label-2 rounds makes no
        // mistakes and beats every single function of the class.
        let class = FunctionClass::new(1, 2, vec![vec![A], vec![l(1)]]).unwrap();
        let tr = transcript(&[
            (1, 1, l(1), Coin::Tails),
            (1, 2, A, Coin::Heads),
            (1, 1, l(1), Coin::Tails),
        ]);
        let s = summarize(&tr, &class);
        assert_eq!((s.mistakes, s.m_star), (0, 0));
        assert_eq!(s.mmea, 1 - 3);
    }

    #[test]
    fn rate_fit_exact_power() {
        let pts: Vec<(f64, f64)> = (10..=17).map(|k| {
            let t = (1u64 << k) as f64;
            (t, t.sqrt())
        }).collect();
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-9);
        assert!(fit.stderr < 1e-9);
        assert!(!fit.floored);

        let flat: Vec<(f64, f64)> = pts.iter().map(|(t, _)| (*t, 3.0)).collect();
        assert!(fit_rate(&flat).unwrap().slope.abs() < 1e-12);
        assert!(fit_rate(&pts[..2]).is_err());
    }

    #[test]
    fn rate_fit_floors_zero() {
        let fit = fit_rate(&[(10.0, 0.0), (100.0, 1.0), (1000.0, 10.0)]).unwrap();
        assert!(fit.floored);
    }

    #[test]
    fn target_rate_examples() {
        let r = target_rate(0.5, 0.3);
        assert_eq!((r.alpha_tilde, r.u, r.v), (0.5, 0.5, 0.0));
        assert_eq!(target_rate(1.0, 0.4).alpha_tilde, 0.5);
        let r = target_rate(0.2, 0.8);
        assert_relative_eq!(r.v, 0.6, epsilon = 1e-15);
        assert_relative_eq!(r.u, 0.2, epsilon = 1e-15);
        assert_relative_eq!(r.alpha_tilde, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(lower_bound_value(0.0, 0.5, 100.0), 50.0);
        let c = lower_bound_check(5.0, 0.0, 100.0, 0.0, 0.0).unwrap();
        assert_eq!(c.bound, 0.0);
        assert!(c.pass);
        let v = lower_bound_value(10.0, 0.25, 1000.0);
        assert_relative_eq!(v, 0.25 * (6.737_946_999_085_467 - 10.0), epsilon = 1e-9);
        assert!(v < 0.0);
        assert!(lower_bound_check(1.0, 0.6, 10.0, 0.0, 0.0).is_err());
    }
}
