//! Learners for the selective classification game.
//!
//! Every learner follows the same two-step contract per round: [`Learner::act`]
//! sees only the context, and [`Learner::observe`] sees the action it took and
//! the feedback (the label, revealed only on abstention). All learner
//! randomness comes from the [`RandomSource`] handed in by the caller.
//!
//! | algorithm                        | sampling set | versioning                     |
//! |----------------------------------|--------------|--------------------------------|
//! | `Vue`                            | none         | exact, every abstention        |
//! | `VueProd`                        | alive        | exact, coin-heads rounds       |
//! | `MixedLossProd`, `AdaptiveMlp`   | all          | none (mixed loss)              |
//! | `VueProdRelaxed`, `...TimeAdapted` | alive      | tolerance `ε`, every abstention |
//!
//! Weights are kept as natural logarithms so that long runs with `η = 1/2`
//! cannot underflow; [`VersionState::weight`] exponentiates on demand.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::target_rate;
use crate::error::{param, protocol, Error, Result};
use crate::model::{Coin, Context, FunctionClass, Label, Prediction};
use crate::rng::RandomSource;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    Vue,
    VueProd,
    MixedLossProd,
    AdaptiveMlp,
    VueProdRelaxed,
    VueProdRelaxedTimeAdapted,
    AlwaysAbstain,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Vue,
        Algorithm::VueProd,
        Algorithm::MixedLossProd,
        Algorithm::AdaptiveMlp,
        Algorithm::VueProdRelaxed,
        Algorithm::VueProdRelaxedTimeAdapted,
        Algorithm::AlwaysAbstain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vue => "vue",
            Algorithm::VueProd => "vue_prod",
            Algorithm::MixedLossProd => "mixed_loss_prod",
            Algorithm::AdaptiveMlp => "adaptive_mlp",
            Algorithm::VueProdRelaxed => "vue_prod_relaxed",
            Algorithm::VueProdRelaxedTimeAdapted => "vue_prod_relaxed_time_adapted",
            Algorithm::AlwaysAbstain => "always_abstain",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| param(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TieBreak {
    /// Smallest label among the candidates.
    LexMin,
    UniformRandom,
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lex_min" => Ok(TieBreak::LexMin),
            "uniform_random" => Ok(TieBreak::UniformRandom),
            _ => Err(param(format!("unknown tie_break `{s}`"))),
        }
    }
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieBreak::LexMin => "lex_min",
            TieBreak::UniformRandom => "uniform_random",
        })
    }
}

/// Hyper-parameters shared by all algorithms; each reads the subset it needs.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Exploration rate.
    pub p: f64,
    /// Learning rate of the multiplicative update.
    pub eta: f64,
    /// Abstention weight in the mixed loss.
    pub lambda: f64,
    /// Mistake tolerance of relaxed versioning.
    pub epsilon: f64,
    /// Target mistake exponent of the adaptive scheme.
    pub mu: f64,
    /// Phase scale of the adaptive scheme; `None` means `2 ln 2 / ln T`.
    pub theta: Option<f64>,
    pub horizon: u32,
    pub tie_break: TieBreak,
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, horizon: u32) -> Self {
        Self {
            algorithm,
            p: 0.1,
            eta: 0.5,
            lambda: 0.05,
            epsilon: 0.05,
            mu: 0.5,
            theta: None,
            horizon,
            tie_break: TieBreak::LexMin,
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(param(format!("p = {} outside (0, 1]", self.p)));
        }
        if !(self.eta > 0.0 && self.eta <= 0.5) {
            return Err(param(format!("eta = {} outside (0, 1/2]", self.eta)));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(param(format!("lambda = {} outside (0, 1]", self.lambda)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(param(format!("epsilon = {} outside [0, 1)", self.epsilon)));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(param(format!("mu = {} outside (0, 1]", self.mu)));
        }
        if let Some(theta) = self.theta {
            if !(theta > 0.0 && theta.is_finite()) {
                return Err(param(format!("theta = {theta} must be positive")));
            }
        }
        if self.horizon == 0 {
            return Err(param("horizon must be at least 1"));
        }
        if self.algorithm == Algorithm::MixedLossProd && self.lambda > self.p {
            return Err(param(format!(
                "mixed_loss_prod needs lambda <= p (lambda = {}, p = {})",
                self.lambda, self.p
            )));
        }
        Ok(())
    }
}

/// Mutable per-function bookkeeping shared by the versioning learners.
#[derive(Clone, Debug, PartialEq)]
pub struct VersionState {
    /// Membership in the version space.
    pub alive: Vec<bool>,
    /// Mistakes observed on versioning rounds.
    pub observed_mistakes: Vec<u32>,
    /// Number of versioning rounds.
    pub feedback_count: u32,
    /// Natural log of each weight.
    pub log_weights: Vec<f64>,
}

impl VersionState {
    pub fn new(n: usize) -> Self {
        Self {
            alive: vec![true; n],
            observed_mistakes: vec![0; n],
            feedback_count: 0,
            log_weights: vec![0.0; n],
        }
    }

    pub fn is_alive(&self, f: usize) -> bool {
        self.alive[f]
    }

    pub fn alive_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.alive.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i)
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn weight(&self, f: usize) -> f64 {
        self.log_weights[f].exp()
    }

    /// The sampling law over alive functions; zero elsewhere.
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self
            .alive_ids()
            .map(|f| self.log_weights[f])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = (0..self.alive.len())
            .map(|f| {
                if self.alive[f] {
                    (self.log_weights[f] - max).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        probs
    }

    /// Human-readable dump for replay debugging.
    pub fn dump(&self) -> String {
        let mut out = format!("feedback_count={}\n", self.feedback_count);
        for f in 0..self.alive.len() {
            let _ = writeln!(
                out,
                "f{f}: alive={} mistakes={} log_w={}",
                self.alive[f] as u8, self.observed_mistakes[f], self.log_weights[f]
            );
        }
        out
    }

    /// Draws one alive function with probability proportional to its weight.
    fn sample(&self, rng: &mut dyn RandomSource) -> Result<usize> {
        let u = rng.unit();
        let mut max = f64::NEG_INFINITY;
        let mut last = None;
        for f in self.alive_ids() {
            max = max.max(self.log_weights[f]);
            last = Some(f);
        }
        let last = last.ok_or_else(|| Error::Invariant("version space is empty".into()))?;
        let total: f64 = self
            .alive_ids()
            .map(|f| (self.log_weights[f] - max).exp())
            .sum();
        let target = u * total;
        let mut acc = 0.0;
        for f in self.alive_ids() {
            acc += (self.log_weights[f] - max).exp();
            if target < acc {
                return Ok(f);
            }
        }
        Ok(last)
    }

    /// Removes alive functions that are wrong on `(x, y)`.
    fn eliminate(&mut self, class: &FunctionClass, x: Context, y: Label) {
        self.feedback_count += 1;
        for f in class.functions() {
            if f.at(x).is_mistake(y) {
                self.observed_mistakes[f.id] += 1;
                self.alive[f.id] = false;
            }
        }
    }

    /// `w ← w (1 − η)` for alive functions abstaining on `x`.
    fn penalize_abstainers(&mut self, class: &FunctionClass, x: Context, log_factor: f64) {
        for f in class.functions() {
            if self.alive[f.id] && f.at(x).is_abstain() {
                self.log_weights[f.id] += log_factor;
            }
        }
    }
}

/// Retention bound of relaxed versioning: `ε·Ctr + √(2ε·Ctr)`.
pub fn retention_threshold(epsilon: f64, feedback_count: u32) -> f64 {
    let c = feedback_count as f64;
    epsilon * c + (2.0 * epsilon * c).sqrt()
}

/// Exploration schedule of the time-adapted relaxed learner: `min(0.1, 1/√t)`.
pub fn time_adapted_rate(t: u32) -> f64 {
    (1.0 / (t as f64).sqrt()).min(0.1)
}

/// Suggested exploration rate.
///
/// With `mu = None` this is the symmetric choice `√(N/T)`. With a target
/// mistake exponent it is `T^{-u}`: `u = μ` for VUE, `u = min(μ, 1/2)` for
/// VUE-PROD and its relaxed variants, and the mixed-loss optimizer for the
/// Prod schemes (taking `α* = 1`). Always capped at 1/2.
pub fn recommended_p(algorithm: Algorithm, n: usize, horizon: u32, mu: Option<f64>) -> f64 {
    let t = horizon.max(1) as f64;
    let p = match mu {
        None => (n as f64 / t).sqrt(),
        Some(mu) => {
            let u = match algorithm {
                Algorithm::Vue | Algorithm::AlwaysAbstain => mu,
                Algorithm::VueProd
                | Algorithm::VueProdRelaxed
                | Algorithm::VueProdRelaxedTimeAdapted => mu.min(0.5),
                Algorithm::MixedLossProd | Algorithm::AdaptiveMlp => target_rate(mu, 1.0).u,
            };
            t.powf(-u)
        }
    };
    p.min(0.5)
}

/// The act/observe contract.
pub trait Learner: Send {
    fn algorithm(&self) -> Algorithm;

    /// Chooses the round's action from the context alone.
    fn act(&mut self, x: Context, rng: &mut dyn RandomSource) -> Result<(Prediction, Coin)>;

    /// Absorbs the round's outcome. `feedback` must be `Some` exactly when
    /// `action` is an abstention.
    fn observe(
        &mut self,
        x: Context,
        action: Prediction,
        feedback: Option<Label>,
        coin: Coin,
        rng: &mut dyn RandomSource,
    ) -> Result<()>;

    /// Version space and weights, for learners that keep them.
    fn version_state(&self) -> Option<&VersionState> {
        None
    }

    /// Phase bookkeeping, for the adaptive scheme.
    fn phase_state(&self) -> Option<&PhaseState> {
        None
    }
}

fn check_feedback(action: Prediction, feedback: Option<Label>) -> Result<()> {
    if action.is_abstain() != feedback.is_some() {
        return Err(protocol(format!(
            "feedback {feedback:?} inconsistent with action {action:?}"
        )));
    }
    Ok(())
}

/// Builds the learner named by `config.algorithm`.
pub fn build_learner(config: &LearnerConfig, class: Arc<FunctionClass>) -> Result<Box<dyn Learner>> {
    config.validate()?;
    Ok(match config.algorithm {
        Algorithm::Vue => Box::new(Vue::new(class, config.p, config.tie_break)),
        Algorithm::VueProd => Box::new(VueProd::new(class, config.p, config.eta)),
        Algorithm::MixedLossProd => Box::new(MixedLossProd::new(class, config.p, config.eta, config.lambda)),
        Algorithm::AdaptiveMlp => Box::new(MixedLossProd::adaptive(
            class,
            config.eta,
            config.mu,
            config.theta,
            config.horizon,
        )),
        Algorithm::VueProdRelaxed => Box::new(RelaxedVueProd::new(
            class,
            config.p,
            config.eta,
            config.epsilon,
        )),
        Algorithm::VueProdRelaxedTimeAdapted => {
            Box::new(RelaxedVueProd::time_adapted(class, config.epsilon))
        }
        Algorithm::AlwaysAbstain => Box::new(AlwaysAbstain),
    })
}

/// Versioned uniform explorer.
#[derive(Clone, Debug)]
pub struct Vue {
    class: Arc<FunctionClass>,
    p: f64,
    tie_break: TieBreak,
    state: VersionState,
    candidates: Vec<Label>,
}

impl Vue {
    pub fn new(class: Arc<FunctionClass>, p: f64, tie_break: TieBreak) -> Self {
        let state = VersionState::new(class.len());
        Self {
            class,
            p,
            tie_break,
            state,
            candidates: Vec::new(),
        }
    }
}

impl Learner for Vue {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Vue
    }

    fn act(&mut self, x: Context, rng: &mut dyn RandomSource) -> Result<(Prediction, Coin)> {
        self.candidates.clear();
        let mut first = None;
        let mut singleton = true;
        for f in self.class.functions() {
            if !self.state.alive[f.id] {
                continue;
            }
            let out = f.at(x);
            match first {
                None => first = Some(out),
                Some(v) if v != out => singleton = false,
                _ => {}
            }
            if let Prediction::Label(l) = out {
                if !self.candidates.contains(&l) {
                    self.candidates.push(l);
                }
            }
        }
        let first = first.ok_or_else(|| Error::Invariant("version space is empty".into()))?;
        if singleton {
            return Ok((first, Coin::NotTossed));
        }
        if rng.coin(self.p) {
            return Ok((Prediction::Abstain, Coin::Heads));
        }
        let label = match self.tie_break {
            TieBreak::LexMin => *self.candidates.iter().min().expect("non-singleton has a label"),
            TieBreak::UniformRandom => {
                self.candidates.sort_unstable();
                self.candidates[rng.below(self.candidates.len())]
            }
        };
        Ok((Prediction::Label(label), Coin::Tails))
    }

    fn observe(
        &mut self,
        x: Context,
        action: Prediction,
        feedback: Option<Label>,
        _coin: Coin,
        _rng: &mut dyn RandomSource,
    ) -> Result<()> {
        check_feedback(action, feedback)?;
        if let Some(y) = feedback {
            self.state.eliminate(&self.class, x, y);
        }
        Ok(())
    }

    fn version_state(&self) -> Option<&VersionState> {
        Some(&self.state)
    }
}

/// Prod over the version space with uniform exploration.
#[derive(Clone, Debug)]
pub struct VueProd {
    class: Arc<FunctionClass>,
    p: f64,
    log_decay: f64,
    state: VersionState,
}

impl VueProd {
    pub fn new(class: Arc<FunctionClass>, p: f64, eta: f64) -> Self {
        let state = VersionState::new(class.len());
        Self {
            class,
            p,
            log_decay: (1.0 - eta).ln(),
            state,
        }
    }
}

impl Learner for VueProd {
    fn algorithm(&self) -> Algorithm {
        Algorithm::VueProd
    }

    fn act(&mut self, x: Context, rng: &mut dyn RandomSource) -> Result<(Prediction, Coin)> {
        let f = self.state.sample(rng)?;
        let heads = rng.coin(self.p);
        let action = if heads {
            Prediction::Abstain
        } else {
            self.class.functions()[f].at(x)
        };
        Ok((action, Coin::from_heads(heads)))
    }

    fn observe(
        &mut self,
        x: Context,
        action: Prediction,
        feedback: Option<Label>,
        coin: Coin,
        _rng: &mut dyn RandomSource,
    ) -> Result<()> {
        check_feedback(action, feedback)?;
        if coin.is_heads() {
            let y = feedback.ok_or_else(|| protocol("coin heads without feedback"))?;
            self.state.eliminate(&self.class, x, y);
        }
        self.state.penalize_abstainers(&self.class, x, self.log_decay);
        Ok(())
    }

    fn version_state(&self) -> Option<&VersionState> {
        Some(&self.state)
    }
}

/// Phase bookkeeping of the adaptive mixed-loss scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub phase: u32,
    /// Round at which the current phase started (0 for the first phase).
    pub phase_start: u32,
    pub max_phase: u32,
    pub theta: f64,
    /// `B*` over the current phase; `None` before the first round.
    pub best_alive_abstentions: Option<u32>,
    pub p: f64,
    pub lambda: f64,
    phase_abstentions: Vec<u32>,
    phase_sampled_mistake: Vec<bool>,
}

impl PhaseState {
    fn new(n: usize, mu: f64, theta: f64, horizon: u32) -> Self {
        let mut s = Self {
            phase: 0,
            phase_start: 0,
            max_phase: (1.0 / theta).ceil() as u32,
            theta,
            best_alive_abstentions: None,
            p: 1.0,
            lambda: 1.0,
            phase_abstentions: vec![0; n],
            phase_sampled_mistake: vec![false; n],
        };
        s.set_rates(mu, horizon);
        s
    }

    /// `p = T^{-u}`, `λ = T^{-(u+v)}` with `u = min(1 − nθ, 2μ)/2`, `v = nθ`.
    fn set_rates(&mut self, mu: f64, horizon: u32) {
        let (u, v) = phase_exponents(self.phase, self.theta, mu);
        let t = horizon as f64;
        self.p = t.powf(-u).min(1.0);
        self.lambda = t.powf(-(u + v)).min(1.0);
    }
}

/// Exponents `(u, v)` of phase `n`; `u` is floored at 0 once `nθ > 1`.
pub fn phase_exponents(phase: u32, theta: f64, mu: f64) -> (f64, f64) {
    let v = phase as f64 * theta;
    let u = ((1.0 - v).min(2.0 * mu) / 2.0).max(0.0);
    (u, v)
}

/// Default phase scale `2 ln 2 / ln T`.
pub fn default_theta(horizon: u32) -> f64 {
    if horizon < 2 {
        1.0
    } else {
        2.0 * std::f64::consts::LN_2 / (horizon as f64).ln()
    }
}

#[derive(Clone, Debug)]
struct Adaptive {
    mu: f64,
    horizon: u32,
    phases: PhaseState,
}

/// Prod on the mixed loss `C_t·1{mistake} + λ·1{abstain}` over the whole class,
/// optionally with phase-wise retuning of `p` and `λ`.
#[derive(Clone, Debug)]
pub struct MixedLossProd {
    class: Arc<FunctionClass>,
    p: f64,
    eta: f64,
    lambda: f64,
    state: VersionState,
    adaptive: Option<Adaptive>,
    t: u32,
}

impl MixedLossProd {
    pub fn new(class: Arc<FunctionClass>, p: f64, eta: f64, lambda: f64) -> Self {
        let state = VersionState::new(class.len());
        Self {
            class,
            p,
            eta,
            lambda,
            state,
            adaptive: None,
            t: 0,
        }
    }

    pub fn adaptive(class: Arc<FunctionClass>, eta: f64, mu: f64, theta: Option<f64>, horizon: u32) -> Self {
        let theta = theta.unwrap_or_else(|| default_theta(horizon));
        let phases = PhaseState::new(class.len(), mu, theta, horizon);
        let mut s = Self::new(class, phases.p, eta, phases.lambda);
        s.adaptive = Some(Adaptive { mu, horizon, phases });
        s
    }

    pub fn current_p(&self) -> f64 {
        self.p
    }

    pub fn current_lambda(&self) -> f64 {
        self.lambda
    }
}

impl Learner for MixedLossProd {
    fn algorithm(&self) -> Algorithm {
        if self.adaptive.is_some() {
            Algorithm::AdaptiveMlp
        } else {
            Algorithm::MixedLossProd
        }
    }

    fn act(&mut self, x: Context, rng: &mut dyn RandomSource) -> Result<(Prediction, Coin)> {
        self.t += 1;
        let f = self.state.sample(rng)?;
        let heads = rng.coin(self.p);
        let action = if heads {
            Prediction::Abstain
        } else {
            self.class.functions()[f].at(x)
        };
        Ok((action, Coin::from_heads(heads)))
    }

    fn observe(
        &mut self,
        x: Context,
        action: Prediction,
        feedback: Option<Label>,
        coin: Coin,
        _rng: &mut dyn RandomSource,
    ) -> Result<()> {
        check_feedback(action, feedback)?;
        let sampled = if coin.is_heads() {
            Some(feedback.ok_or_else(|| protocol("coin heads without feedback"))?)
        } else {
            None
        };
        let log_mistake = (1.0 - self.eta).ln();
        let log_abstain = (1.0 - self.eta * self.lambda).ln();
        if sampled.is_some() {
            self.state.feedback_count += 1;
        }
        for f in self.class.functions() {
            let out = f.at(x);
            if out.is_abstain() {
                self.state.log_weights[f.id] += log_abstain;
            } else if let Some(y) = sampled {
                if out.is_mistake(y) {
                    self.state.observed_mistakes[f.id] += 1;
                    self.state.log_weights[f.id] += log_mistake;
                }
            }
        }

        if let Some(ad) = &mut self.adaptive {
            let ph = &mut ad.phases;
            let mut best: Option<u32> = None;
            for f in self.class.functions() {
                let out = f.at(x);
                if out.is_abstain() {
                    ph.phase_abstentions[f.id] += 1;
                }
                if let Some(y) = sampled {
                    if out.is_mistake(y) {
                        ph.phase_sampled_mistake[f.id] = true;
                    }
                }
                if !ph.phase_sampled_mistake[f.id] {
                    let a = ph.phase_abstentions[f.id];
                    best = Some(best.map_or(a, |b| b.min(a)));
                }
            }
            ph.best_alive_abstentions = best;
            let log_t = (ad.horizon as f64).ln();
            let level = (ad.mu + ph.phase as f64 * ph.theta) * log_t;
            if let Some(b) = best {
                if b > 0 && (b as f64).ln() >= level && ph.phase < ph.max_phase {
                    ph.phase += 1;
                    ph.phase_start = self.t;
                    ph.set_rates(ad.mu, ad.horizon);
                    ph.phase_abstentions.iter_mut().for_each(|a| *a = 0);
                    ph.phase_sampled_mistake.iter_mut().for_each(|m| *m = false);
                    ph.best_alive_abstentions = None;
                    self.state.log_weights.iter_mut().for_each(|w| *w = 0.0);
                    self.p = ph.p;
                    self.lambda = ph.lambda;
                }
            }
        }
        Ok(())
    }

    fn version_state(&self) -> Option<&VersionState> {
        Some(&self.state)
    }

    fn phase_state(&self) -> Option<&PhaseState> {
        self.adaptive.as_ref().map(|a| &a.phases)
    }
}

/// Prod over a tolerance-relaxed version space, refined on every abstention.
#[derive(Clone, Debug)]
pub struct RelaxedVueProd {
    class: Arc<FunctionClass>,
    p: f64,
    eta: f64,
    epsilon: f64,
    time_adapted: bool,
    t: u32,
    state: VersionState,
    scratch: Vec<u32>,
}

impl RelaxedVueProd {
    pub fn new(class: Arc<FunctionClass>, p: f64, eta: f64, epsilon: f64) -> Self {
        let state = VersionState::new(class.len());
        Self {
            class,
            p,
            eta,
            epsilon,
            time_adapted: false,
            t: 0,
            state,
            scratch: Vec::new(),
        }
    }

    /// Runs with `p_t = η_t = min(0.1, 1/√t)`.
    pub fn time_adapted(class: Arc<FunctionClass>, epsilon: f64) -> Self {
        let mut s = Self::new(class, 0.1, 0.1, epsilon);
        s.time_adapted = true;
        s
    }

    /// Exploration and learning rate in force for the current round.
    pub fn current_rates(&self) -> (f64, f64) {
        if self.time_adapted {
            let p = time_adapted_rate(self.t.max(1));
            (p, p)
        } else {
            (self.p, self.eta)
        }
    }
}

impl Learner for RelaxedVueProd {
    fn algorithm(&self) -> Algorithm {
        if self.time_adapted {
            Algorithm::VueProdRelaxedTimeAdapted
        } else {
            Algorithm::VueProdRelaxed
        }
    }

    fn act(&mut self, x: Context, rng: &mut dyn RandomSource) -> Result<(Prediction, Coin)> {
        self.t += 1;
        let (p, _) = self.current_rates();
        let f = self.state.sample(rng)?;
        let heads = rng.coin(p);
        let action = if heads {
            Prediction::Abstain
        } else {
            self.class.functions()[f].at(x)
        };
        Ok((action, Coin::from_heads(heads)))
    }

    fn observe(
        &mut self,
        x: Context,
        action: Prediction,
        feedback: Option<Label>,
        _coin: Coin,
        _rng: &mut dyn RandomSource,
    ) -> Result<()> {
        check_feedback(action, feedback)?;
        let (_, eta) = self.current_rates();
        if let Some(y) = feedback {
            let ctr = self.state.feedback_count + 1;
            let bound = retention_threshold(self.epsilon, ctr);
            self.scratch.clear();
            self.scratch.extend_from_slice(&self.state.observed_mistakes);
            let mut any_retained = false;
            let mut retained = self.state.alive.clone();
            for f in self.class.functions() {
                if !self.state.alive[f.id] {
                    continue;
                }
                if f.at(x).is_mistake(y) {
                    self.scratch[f.id] += 1;
                }
                if self.scratch[f.id] as f64 <= bound {
                    any_retained = true;
                } else {
                    retained[f.id] = false;
                }
            }
            if !any_retained {
                // Every alive function was ruled out: ignore this round.
                return Ok(());
            }
            self.state.feedback_count = ctr;
            std::mem::swap(&mut self.state.observed_mistakes, &mut self.scratch);
            self.state.alive = retained;
        }
        self.state
            .penalize_abstainers(&self.class, x, (1.0 - eta).ln());
        Ok(())
    }

    fn version_state(&self) -> Option<&VersionState> {
        Some(&self.state)
    }
}

/// Abstains every round.
#[derive(Clone, Copy, Debug, Default)]
pub struct AlwaysAbstain;

impl Learner for AlwaysAbstain {
    fn algorithm(&self) -> Algorithm {
        Algorithm::AlwaysAbstain
    }

    fn act(&mut self, _x: Context, _rng: &mut dyn RandomSource) -> Result<(Prediction, Coin)> {
        Ok((Prediction::Abstain, Coin::NotTossed))
    }

    fn observe(
        &mut self,
        _x: Context,
        action: Prediction,
        feedback: Option<Label>,
        _coin: Coin,
        _rng: &mut dyn RandomSource,
    ) -> Result<()> {
        check_feedback(action, feedback)
    }
}
