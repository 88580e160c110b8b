//! Data-generating processes.
//!
//! An [`Adversary`] emits one `(context, label)` pair per round. Stochastic
//! kinds draw from a fixed law and never look at the history; adaptive kinds
//! may read the full `(X_s, Y_s, Ŷ_s)` prefix. Each adversary owns its own
//! seeded stream, separate from the learner's.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{param, protocol, Result};
use crate::model::{make_threshold_class, Context, FunctionClass, Label, Prediction};
use crate::rng::stream;

/// Label the lower-bound pair and the tight example use for their "wrong" rounds.
pub const OFF_LABEL: Label = Label(2);

/// One entry of the adversary-visible history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistoryEntry {
    pub context: Context,
    pub label: Label,
    /// The learner's action; `None` when the caller withholds it.
    pub action: Option<Prediction>,
}

/// A fixed law over `(context, label)` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticLaw {
    support: Vec<(Context, Label, f64)>,
    cumulative: Vec<f64>,
}

impl StochasticLaw {
    pub fn new(support: Vec<(Context, Label, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(param("stochastic law needs a non-empty support"));
        }
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(support.len());
        for &(_, _, p) in &support {
            if p.is_nan() || p < 0.0 {
                return Err(param(format!("negative or NaN probability {p}")));
            }
            acc += p;
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > 1e-12 {
            return Err(param(format!("probabilities sum to {acc}, not 1")));
        }
        Ok(Self {
            support,
            cumulative,
        })
    }

    pub fn support(&self) -> &[(Context, Label, f64)] {
        &self.support
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (Context, Label) {
        let u: f64 = rng.random();
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.support.len() - 1);
        let (x, y, _) = self.support[i];
        (x, y)
    }
}

/// Distribution of contexts for the noisy synthetic adversary.
#[derive(Clone, Debug, PartialEq)]
pub enum ContextLaw {
    Uniform,
    Point(Context),
    /// Unnormalized weights for contexts `1..=len`.
    Weights(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LowerBoundVariant {
    /// Always label 1.
    P1,
    /// Label 2 with probability `gamma`, else label 1.
    P2,
}

/// User-supplied transition rule for scripted adversaries.
pub type ScriptedRule = Arc<dyn Fn(&[HistoryEntry], &mut ChaCha8Rng) -> (Context, Label) + Send + Sync>;

#[derive(Clone)]
pub enum AdversaryKind {
    Stochastic(StochasticLaw),
    ThresholdTight {
        n: u32,
        t_star: u32,
        block: u32,
    },
    LowerBound {
        variant: LowerBoundVariant,
        gamma: f64,
        context: Context,
    },
    NoisySynthetic {
        target: Vec<Prediction>,
        num_labels: u16,
        noise_rate: f64,
        context_cdf: Vec<f64>,
    },
    Scripted(ScriptedRule),
}

impl fmt::Debug for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryKind::Stochastic(law) => f.debug_tuple("Stochastic").field(law).finish(),
            AdversaryKind::ThresholdTight { n, t_star, block } => f
                .debug_struct("ThresholdTight")
                .field("n", n)
                .field("t_star", t_star)
                .field("block", block)
                .finish(),
            AdversaryKind::LowerBound {
                variant,
                gamma,
                context,
            } => f
                .debug_struct("LowerBound")
                .field("variant", variant)
                .field("gamma", gamma)
                .field("context", context)
                .finish(),
            AdversaryKind::NoisySynthetic {
                noise_rate,
                num_labels,
                ..
            } => f
                .debug_struct("NoisySynthetic")
                .field("noise_rate", noise_rate)
                .field("num_labels", num_labels)
                .finish_non_exhaustive(),
            AdversaryKind::Scripted(_) => f.write_str("Scripted(..)"),
        }
    }
}

/// A seeded data-generating process.
#[derive(Clone, Debug)]
pub struct Adversary {
    kind: AdversaryKind,
    rng: ChaCha8Rng,
    /// Length of the history prefix already checked for missing actions.
    checked: usize,
}

impl Adversary {
    pub fn new(kind: AdversaryKind, seed: u64) -> Self {
        Self {
            kind,
            rng: stream(seed),
            checked: 0,
        }
    }

    pub fn stochastic(law: StochasticLaw, seed: u64) -> Self {
        Self::new(AdversaryKind::Stochastic(law), seed)
    }

    pub fn scripted(rule: ScriptedRule, seed: u64) -> Self {
        Self::new(AdversaryKind::Scripted(rule), seed)
    }

    pub fn kind(&self) -> &AdversaryKind {
        &self.kind
    }

    /// Whether the emission law may depend on the learner's past actions.
    pub fn is_adaptive(&self) -> bool {
        matches!(
            self.kind,
            AdversaryKind::Scripted(_) | AdversaryKind::ThresholdTight { .. }
        )
    }

    /// Emits the pair for round `history.len() + 1`.
    pub fn next_pair(&mut self, history: &[HistoryEntry]) -> Result<(Context, Label)> {
        if self.is_adaptive() {
            // Histories grow by one entry per round; only new entries need a look.
            let from = if history.len() >= self.checked { self.checked } else { 0 };
            if let Some(i) = history[from..].iter().position(|h| h.action.is_none()) {
                return Err(protocol(format!(
                    "adaptive adversary given history without the action of round {}",
                    from + i + 1
                )));
            }
            self.checked = history.len();
        }
        let t = history.len() as u32 + 1;
        let pair = match &self.kind {
            AdversaryKind::Stochastic(law) => law.sample(&mut self.rng),
            AdversaryKind::ThresholdTight { n, t_star, block } => {
                let x = ((t - 1) / block + 1).min(*n);
                let y = if x <= *t_star { OFF_LABEL } else { Label(1) };
                (Context(x), y)
            }
            AdversaryKind::LowerBound {
                variant,
                gamma,
                context,
            } => {
                // Both variants consume one draw per round so that a P1/P2 pair
                // built from one seed stays coupled.
                let u: f64 = self.rng.random();
                let y = match variant {
                    LowerBoundVariant::P2 if u < *gamma => OFF_LABEL,
                    _ => Label(1),
                };
                (*context, y)
            }
            AdversaryKind::NoisySynthetic {
                target,
                num_labels,
                noise_rate,
                context_cdf,
            } => {
                let u: f64 = self.rng.random();
                let xi = context_cdf
                    .partition_point(|&c| c <= u)
                    .min(context_cdf.len() - 1);
                let y = match target[xi] {
                    Prediction::Label(l) => {
                        let flip: f64 = self.rng.random();
                        if *num_labels > 1 && flip < *noise_rate {
                            // Uniform over the other K - 1 labels.
                            let mut o = self.rng.random_range(1..*num_labels);
                            if o >= l.0 {
                                o += 1;
                            }
                            Label(o)
                        } else {
                            l
                        }
                    }
                    Prediction::Abstain => Label(self.rng.random_range(1..=*num_labels)),
                };
                (Context(xi as u32 + 1), y)
            }
            AdversaryKind::Scripted(rule) => rule(history, &mut self.rng),
        };
        Ok(pair)
    }
}

/// Builds the coupled pair `(P_1^γ, P_2^γ)` on one shared context.
///
/// Both adversaries are seeded identically, so their label streams agree until
/// the first round in which `P_2` emits label 2.
pub fn make_lower_bound_pair(gamma: f64, shared_context: Context, seed: u64) -> Result<(Adversary, Adversary)> {
    if !(0.0..=0.5).contains(&gamma) {
        return Err(param(format!("gamma {gamma} outside [0, 1/2]")));
    }
    if shared_context.0 == 0 {
        return Err(param("context ids are 1-based"));
    }
    let make = |variant| {
        Adversary::new(
            AdversaryKind::LowerBound {
                variant,
                gamma,
                context: shared_context,
            },
            seed,
        )
    };
    Ok((make(LowerBoundVariant::P1), make(LowerBoundVariant::P2)))
}

/// Two-function class on one context, `{x ↦ 1, x ↦ ⊥}`, that the lower-bound
/// pair is played against.
pub fn lower_bound_class() -> FunctionClass {
    make_threshold_class(1).expect("n = 1 is valid")
}

/// The deterministic schedule showing VUE's analysis is tight.
///
/// Contexts `1..=n` are shown in consecutive blocks of `ceil(horizon / n)`
/// rounds (the final block is truncated). Contexts `≤ t_star` carry
/// [`OFF_LABEL`], the rest carry label 1.
pub fn make_threshold_tight_adversary(n: u32, t_star: u32, horizon: u32) -> Result<Adversary> {
    if n == 0 {
        return Err(param("n must be at least 1"));
    }
    if t_star == 0 || t_star > n {
        return Err(param(format!("t_star {t_star} outside [1, {n}]")));
    }
    if horizon == 0 {
        return Err(param("horizon must be at least 1"));
    }
    let block = horizon.div_ceil(n);
    Ok(Adversary::new(AdversaryKind::ThresholdTight { n, t_star, block }, 0))
}

/// I.i.d. adversary whose labels follow `target` up to label noise.
///
/// Contexts are drawn from `context_law`. Where the target predicts `y`, the
/// label is `y` except with probability `noise_rate`, when it is a uniform
/// other label. Where the target abstains the label is uniform.
pub fn make_noisy_synthetic(
    class: &FunctionClass,
    target: usize,
    noise_rate: f64,
    context_law: &ContextLaw,
    seed: u64,
) -> Result<Adversary> {
    let f = class
        .get(target)
        .ok_or_else(|| param(format!("target {target} is not in the class")))?;
    if !(0.0..1.0).contains(&noise_rate) {
        return Err(param(format!("noise_rate {noise_rate} outside [0, 1)")));
    }
    let d = class.domain_size() as usize;
    let weights: Vec<f64> = match context_law {
        ContextLaw::Uniform => vec![1.0; d],
        ContextLaw::Point(x) => {
            if !class.contains_context(*x) {
                return Err(param(format!("point context {x} outside the domain")));
            }
            let mut w = vec![0.0; d];
            w[x.index()] = 1.0;
            w
        }
        ContextLaw::Weights(w) => {
            if w.len() != d {
                return Err(param(format!("context law has {} weights for {d} contexts", w.len())));
            }
            if w.iter().any(|v| v.is_nan() || *v < 0.0) {
                return Err(param("context weights must be non-negative"));
            }
            w.clone()
        }
    };
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(param("context law has zero mass"));
    }
    let mut acc = 0.0;
    let context_cdf = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect();
    Ok(Adversary::new(
        AdversaryKind::NoisySynthetic {
            target: f.table().to_vec(),
            num_labels: class.num_labels(),
            noise_rate,
            context_cdf,
        },
        seed,
    ))
}

/// Declarative adversary description, resolved against a class at run time.
#[derive(Clone, Debug, PartialEq)]
pub enum AdversarySpec {
    Stochastic {
        support: Vec<(Context, Label, f64)>,
    },
    /// Pairs with the threshold class; `n` is the class's domain size.
    ThresholdTight {
        t_star: u32,
    },
    LowerBound {
        variant: LowerBoundVariant,
        gamma: f64,
        context: Context,
    },
    NoisySynthetic {
        target: usize,
        noise_rate: f64,
        context_law: ContextLaw,
    },
}

impl AdversarySpec {
    pub fn name(&self) -> &'static str {
        match self {
            AdversarySpec::Stochastic { .. } => "stochastic",
            AdversarySpec::ThresholdTight { .. } => "threshold_tight",
            AdversarySpec::LowerBound {
                variant: LowerBoundVariant::P1,
                ..
            } => "lower_bound_p1",
            AdversarySpec::LowerBound {
                variant: LowerBoundVariant::P2,
                ..
            } => "lower_bound_p2",
            AdversarySpec::NoisySynthetic { .. } => "noisy_synthetic",
        }
    }

    pub fn build(&self, class: &FunctionClass, horizon: u32, seed: u64) -> Result<Adversary> {
        match self {
            AdversarySpec::Stochastic { support } => {
                Ok(Adversary::stochastic(StochasticLaw::new(support.clone())?, seed))
            }
            AdversarySpec::ThresholdTight { t_star } => {
                make_threshold_tight_adversary(class.domain_size(), *t_star, horizon)
            }
            AdversarySpec::LowerBound {
                variant,
                gamma,
                context,
            } => {
                let (p1, p2) = make_lower_bound_pair(*gamma, *context, seed)?;
                Ok(match variant {
                    LowerBoundVariant::P1 => p1,
                    LowerBoundVariant::P2 => p2,
                })
            }
            AdversarySpec::NoisySynthetic {
                target,
                noise_rate,
                context_law,
            } => make_noisy_synthetic(class, *target, *noise_rate, context_law, seed),
        }
    }
}
