//! Probed counting processes and Monte Carlo checks of their deviation bounds.
//!
//! An adversary chooses incidences `U_t ∈ {0, 1}`; each is probed by an
//! independent `B_t ~ Bern(p)`. The trace keeps `W_t = Σ U_s` and
//! `W̃_t = Σ U_s B_s`. Two bounds are checked by simulation: the ALLN event
//! (many true incidences while at most one is probed) and the iterated
//! logarithm boundary on `|W_t − W̃_t / p|`.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeviationTrace {
    pub p: f64,
    pub w: u64,
    pub w_tilde: u64,
    pub t: u64,
}

impl DeviationTrace {
    pub fn new(p: f64) -> Self {
        Self { p, w: 0, w_tilde: 0, t: 0 }
    }

    pub fn step(&mut self, u: u8, b: u8) -> Result<()> {
        if u > 1 || b > 1 {
            return Err(param(format!("step inputs must be binary, got u = {u}, b = {b}")));
        }
        self.t += 1;
        self.w += u as u64;
        self.w_tilde += (u & b) as u64;
        Ok(())
    }

    /// `|W − W̃/p|`.
    pub fn deviation(&self) -> f64 {
        (self.w as f64 - self.w_tilde as f64 / self.p).abs()
    }
}

/// `8 ln(1/δ) / p`, for `p < 1/2` and `δ < e^{-1/2}`.
pub fn alln_threshold(p: f64, delta: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(param(format!("p = {p} outside (0, 1/2)")));
    }
    if !(delta > 0.0 && delta < (-0.5f64).exp()) {
        return Err(param(format!("delta = {delta} outside (0, e^-1/2)")));
    }
    Ok(8.0 * (1.0 / delta).ln() / p)
}

/// `2√((1−p)W/p · L) + L/(3p)` with `L = ln(2e/δ) + 2 ln max(1, ln W)`;
/// zero at `W = 0`.
pub fn lil_boundary(w: u64, p: f64, delta: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(param(format!("p = {p} outside (0, 1/2)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(param(format!("delta = {delta} outside (0, 1)")));
    }
    Ok(lil_boundary_unchecked(w, p, delta))
}

fn lil_boundary_unchecked(w: u64, p: f64, delta: f64) -> f64 {
    if w == 0 {
        return 0.0;
    }
    let wf = w as f64;
    let l = (2.0 * std::f64::consts::E / delta).ln() + 2.0 * wf.ln().max(1.0).ln();
    2.0 * ((1.0 - p) * wf / p * l).sqrt() + l / (3.0 * p)
}

/// How the adversary picks `U_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Stress {
    AllOnes,
    /// `U_t = 1` until `W̃ > 1`, then 0.
    AdaptiveStop,
    /// `U_t ~ Bern(q)`, independent of everything.
    Random(f64),
}

impl fmt::Display for Stress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stress::AllOnes => f.write_str("all_ones"),
            Stress::AdaptiveStop => f.write_str("adaptive_stop"),
            Stress::Random(q) => write!(f, "random({q})"),
        }
    }
}

impl FromStr for Stress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        match key.as_str() {
            "all_ones" => return Ok(Stress::AllOnes),
            "adaptive_stop" => return Ok(Stress::AdaptiveStop),
            _ => {}
        }
        let q = key
            .strip_prefix("random(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|q| q.trim().parse::<f64>().ok())
            .ok_or_else(|| param(format!("unknown stress `{s}`")))?;
        if !(0.0..=1.0).contains(&q) {
            return Err(param(format!("random stress rate {q} outside [0, 1]")));
        }
        Ok(Stress::Random(q))
    }
}

/// Monte Carlo result for one (p, δ, stress) cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub p: f64,
    pub delta: f64,
    pub horizon: u64,
    pub trials: u64,
    pub stress: String,
    pub violations: u64,
    pub fraction: f64,
    /// `δ + 3√(δ(1−δ)/trials)`: the largest fraction consistent with the bound.
    pub bound: f64,
}

impl ValidationReport {
    fn new(p: f64, delta: f64, horizon: u64, trials: u64, stress: Stress, violations: u64) -> Self {
        Self {
            p,
            delta,
            horizon,
            trials,
            stress: stress.to_string(),
            violations,
            fraction: violations as f64 / trials as f64,
            bound: delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt(),
        }
    }

    pub fn passed(&self) -> bool {
        self.fraction <= self.bound
    }
}

/// Bernoulli draw by integer comparison: `P(true) = p` up to 2^-64.
struct Bern(u64);

impl Bern {
    fn new(p: f64) -> Self {
        if p >= 1.0 {
            Bern(u64::MAX)
        } else {
            Bern((p * 2f64.powi(64)) as u64)
        }
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> bool {
        rng.next_u64() < self.0
    }
}

struct Adversary {
    stress: Stress,
    draw_u: Option<Bern>,
}

impl Adversary {
    fn new(stress: Stress) -> Self {
        let draw_u = match stress {
            Stress::Random(q) => Some(Bern::new(q)),
            _ => None,
        };
        Self { stress, draw_u }
    }

    #[inline]
    fn next(&self, trace: &DeviationTrace, rng: &mut ChaCha8Rng) -> bool {
        match self.stress {
            Stress::AllOnes => true,
            Stress::AdaptiveStop => trace.w_tilde <= 1,
            Stress::Random(_) => self.draw_u.as_ref().is_some_and(|b| b.draw(rng)),
        }
    }

    /// Whether `U` is zero from now on.
    fn exhausted(&self, trace: &DeviationTrace) -> bool {
        match self.stress {
            Stress::AdaptiveStop => trace.w_tilde > 1,
            Stress::Random(q) => q == 0.0,
            Stress::AllOnes => false,
        }
    }
}

/// Runs one trace to the horizon with the given stress.
pub fn simulate_trace(p: f64, horizon: u64, stress: Stress, rng: &mut ChaCha8Rng) -> DeviationTrace {
    let probe = Bern::new(p);
    let adv = Adversary::new(stress);
    let mut trace = DeviationTrace::new(p);
    for _ in 0..horizon {
        let u = adv.next(&trace, rng);
        // B_t only matters when U_t = 1, so it is drawn only then.
        let b = u && probe.draw(rng);
        trace.t += 1;
        trace.w += u as u64;
        trace.w_tilde += b as u64;
    }
    trace
}

fn count_parallel(trials: u64, seed: u64, trial: impl Fn(&mut ChaCha8Rng) -> bool + Sync) -> u64 {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(derive_seed(seed, i));
            trial(&mut rng) as u64
        })
        .sum()
}

/// Fraction of traces with some `t` where `W̃_t ≤ 1` and `W_t > 8 ln(1/δ)/p`.
pub fn validate_alln(p: f64, delta: f64, horizon: u64, trials: u64, stress: Stress, seed: u64) -> Result<ValidationReport> {
    let threshold = alln_threshold(p, delta)?;
    validate_alln_at(p, delta, threshold, horizon, trials, stress, seed)
}

/// As [`validate_alln`] with an explicit threshold.
pub fn validate_alln_at(
    p: f64,
    delta: f64,
    threshold: f64,
    horizon: u64,
    trials: u64,
    stress: Stress,
    seed: u64,
) -> Result<ValidationReport> {
    if trials == 0 {
        return Err(param("trials must be at least 1"));
    }
    let probe = Bern::new(p);
    let adv = Adversary::new(stress);
    let violations = count_parallel(trials, seed, |rng| {
        let mut trace = DeviationTrace::new(p);
        for _ in 0..horizon {
            // W̃ never decreases, so once it passes 1 the event is out of reach.
            if trace.w_tilde > 1 || adv.exhausted(&trace) {
                return false;
            }
            let u = adv.next(&trace, rng);
            let b = u && probe.draw(rng);
            trace.w += u as u64;
            trace.w_tilde += b as u64;
            if trace.w_tilde <= 1 && trace.w as f64 > threshold {
                return true;
            }
        }
        false
    });
    Ok(ValidationReport::new(p, delta, horizon, trials, stress, violations))
}

/// Fraction of traces with some `t` where `W_t ≥ 1` and
/// `|W_t − W̃_t/p| ≥ lil_boundary(W_t)`.
pub fn validate_lil(p: f64, delta: f64, horizon: u64, trials: u64, stress: Stress, seed: u64) -> Result<ValidationReport> {
    lil_boundary(1, p, delta)?;
    if trials == 0 {
        return Err(param("trials must be at least 1"));
    }
    let table: Vec<f64> = (0..=horizon).map(|w| lil_boundary_unchecked(w, p, delta)).collect();
    let probe = Bern::new(p);
    let adv = Adversary::new(stress);
    let violations = count_parallel(trials, seed, |rng| {
        let mut trace = DeviationTrace::new(p);
        for _ in 0..horizon {
            if adv.exhausted(&trace) {
                // The counters are frozen and were already checked.
                return false;
            }
            let u = adv.next(&trace, rng);
            if !u {
                continue;
            }
            trace.w += 1;
            trace.w_tilde += probe.draw(rng) as u64;
            if trace.deviation() >= table[trace.w as usize] {
                return true;
            }
        }
        false
    });
    Ok(ValidationReport::new(p, delta, horizon, trials, stress, violations))
}
