//! The game loop.
//!
//! Per round the adversary emits `(X_t, Y_t)` from the visible history, the
//! learner acts on `X_t` alone, and the label reaches the learner only through
//! the feedback of an abstention. The learner API takes a context and a
//! feedback value, so it has no channel through which `Y_t` could leak.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::adversary::{Adversary, AdversarySpec, HistoryEntry, LowerBoundVariant};
use crate::error::{param, protocol, Result};
use crate::learner::{build_learner, Learner, LearnerConfig};
use crate::model::{FunctionClass, Prediction, RoundRecord, Transcript};
use crate::rng::{derive_seed, RandomSource, SeededSource, ADVERSARY_STREAM, LEARNER_STREAM};

#[derive(Clone, Debug, PartialEq)]
pub struct GameConfig {
    pub horizon: u32,
    pub learner: LearnerConfig,
    pub adversary: AdversarySpec,
    pub seed: u64,
    /// Seed of the partner run in a coupled lower-bound experiment.
    pub coupled_partner_seed: Option<u64>,
}

impl GameConfig {
    pub fn new(learner: LearnerConfig, adversary: AdversarySpec, seed: u64) -> Self {
        Self {
            horizon: learner.horizon,
            learner,
            adversary,
            seed,
            coupled_partner_seed: None,
        }
    }

    /// Stable 64-bit digest of the configuration (SHA-256 prefix).
    pub fn digest(&self) -> u64 {
        let text = format!("{self:?}");
        let hash = Sha256::digest(text.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&hash[..8]);
        u64::from_be_bytes(bytes)
    }

    pub fn learner_seed(&self) -> u64 {
        derive_seed(self.seed, LEARNER_STREAM)
    }

    pub fn adversary_seed(&self) -> u64 {
        derive_seed(self.seed, ADVERSARY_STREAM)
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(param("horizon must be at least 1"));
        }
        if self.learner.horizon != self.horizon {
            return Err(param(format!(
                "learner horizon {} differs from game horizon {}",
                self.learner.horizon, self.horizon
            )));
        }
        self.learner.validate()
    }
}

/// Called after every round with the record and the learner's post-round state.
pub type Inspector<'a> = dyn FnMut(&RoundRecord, &dyn Learner) + 'a;

/// Plays `horizon` rounds and returns the records.
pub fn play(
    learner: &mut dyn Learner,
    adversary: &mut Adversary,
    class: &FunctionClass,
    horizon: u32,
    rng: &mut dyn RandomSource,
    mut inspector: Option<&mut Inspector<'_>>,
) -> Result<Vec<RoundRecord>> {
    let mut history: Vec<HistoryEntry> = Vec::with_capacity(horizon as usize);
    let mut rounds = Vec::with_capacity(horizon as usize);
    for t in 1..=horizon {
        let (x, y) = adversary.next_pair(&history)?;
        if !class.contains_context(x) {
            return Err(protocol(format!(
                "round {t}: adversary emitted context {x} outside [1, {}]",
                class.domain_size()
            )));
        }
        if !class.contains_label(y) {
            return Err(protocol(format!(
                "round {t}: adversary emitted label {y} outside [1, {}]",
                class.num_labels()
            )));
        }
        let (action, coin) = learner.act(x, rng)?;
        if let Prediction::Label(l) = action {
            if !class.contains_label(l) {
                return Err(protocol(format!("round {t}: learner played unknown label {l}")));
            }
        }
        let record = RoundRecord::new(t, x, y, action, coin);
        learner.observe(x, action, record.feedback, coin, rng)?;
        history.push(HistoryEntry {
            context: x,
            label: y,
            action: Some(action),
        });
        if let Some(inspect) = inspector.as_deref_mut() {
            inspect(&record, &*learner);
        }
        rounds.push(record);
    }
    Ok(rounds)
}

/// Runs one seeded game.
pub fn run(config: &GameConfig, class: Arc<FunctionClass>) -> Result<Transcript> {
    run_inspected(config, class, None)
}

pub fn run_inspected(
    config: &GameConfig,
    class: Arc<FunctionClass>,
    inspector: Option<&mut Inspector<'_>>,
) -> Result<Transcript> {
    config.validate()?;
    let mut learner = build_learner(&config.learner, class.clone())?;
    let mut adversary = config.adversary.build(&class, config.horizon, config.adversary_seed())?;
    let mut rng = SeededSource::new(config.learner_seed());
    let rounds = play(
        learner.as_mut(),
        &mut adversary,
        &class,
        config.horizon,
        &mut rng,
        inspector,
    )?;
    Ok(Transcript {
        rounds,
        config_digest: config.digest(),
        seed: config.seed,
    })
}

/// Runs the coupled `(P_1, P_2)` lower-bound experiment.
///
/// Both runs share the learner seed and the adversary seed, so the learners
/// see identical randomness and the two label streams agree until `P_2` flips.
pub fn run_coupled_pair(
    config_p1: &GameConfig,
    config_p2: &GameConfig,
    class: Arc<FunctionClass>,
) -> Result<(Transcript, Transcript)> {
    if config_p1.seed != config_p2.seed {
        return Err(param(format!(
            "coupled runs need one seed, got {} and {}",
            config_p1.seed, config_p2.seed
        )));
    }
    for (cfg, partner) in [(config_p1, config_p2), (config_p2, config_p1)] {
        if let Some(s) = cfg.coupled_partner_seed {
            if s != partner.seed {
                return Err(param(format!("coupled partner seed {s} does not match {}", partner.seed)));
            }
        }
    }
    if config_p1.learner != config_p2.learner || config_p1.horizon != config_p2.horizon {
        return Err(param("coupled runs need identical learner configurations"));
    }
    match (&config_p1.adversary, &config_p2.adversary) {
        (
            AdversarySpec::LowerBound {
                variant: LowerBoundVariant::P1,
                gamma: g1,
                context: c1,
            },
            AdversarySpec::LowerBound {
                variant: LowerBoundVariant::P2,
                gamma: g2,
                context: c2,
            },
        ) if g1 == g2 && c1 == c2 => {}
        _ => return Err(param("coupled runs need the (P1, P2) lower-bound pair with shared gamma and context")),
    }
    let a = run(config_p1, class.clone())?;
    let b = run(config_p2, class)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{make_threshold_tight_adversary, ContextLaw, StochasticLaw};
    use crate::analysis::summarize;
    use crate::learner::{Algorithm, TieBreak, Vue};
    use crate::model::{make_threshold_class, Coin, Context, Label};
    use crate::rng::ScriptedSource;

    fn abstain_cfg(adv: AdversarySpec, horizon: u32, seed: u64) -> GameConfig {
        GameConfig::new(LearnerConfig::new(Algorithm::AlwaysAbstain, horizon), adv, seed)
    }

    #[test]
    fn always_abstain_sees_every_label() {
        let class = Arc::new(make_threshold_class(3).unwrap());
        let cfg = abstain_cfg(AdversarySpec::ThresholdTight { t_star: 2 }, 5, 1);
        let tr = run(&cfg, class.clone()).unwrap();
        assert_eq!(tr.horizon(), 5);
        tr.validate().unwrap();
        assert!(tr.rounds.iter().all(|r| r.feedback == Some(r.label)));
        let s = summarize(&tr, &class);
        assert_eq!((s.abstentions, s.mistakes), (5, 0));
    }

    /// Plays label 1 every round.
    struct AlwaysOne;

    impl Learner for AlwaysOne {
        fn algorithm(&self) -> Algorithm {
            Algorithm::AlwaysAbstain
        }

        fn act(&mut self, _x: Context, _rng: &mut dyn RandomSource) -> Result<(Prediction, Coin)> {
            Ok((Prediction::Label(Label(1)), Coin::NotTossed))
        }

        fn observe(
            &mut self,
            _x: Context,
            _a: Prediction,
            feedback: Option<Label>,
            _c: Coin,
            _rng: &mut dyn RandomSource,
        ) -> Result<()> {
            assert!(feedback.is_none());
            Ok(())
        }
    }

    #[test]
    fn never_abstaining_learner_gets_no_feedback() {
        let class = make_threshold_class(1).unwrap();
        let law = StochasticLaw::new(vec![(Context(1), Label(1), 1.0)]).unwrap();
        let mut adv = Adversary::stochastic(law, 3);
        let mut rng = ScriptedSource::default();
        let rounds = play(&mut AlwaysOne, &mut adv, &class, 10, &mut rng, None).unwrap();
        assert!(rounds.iter().all(|r| r.feedback.is_none() && !r.is_mistake()));
    }

    /// Plays a label outside the alphabet.
    struct Rogue;

    impl Learner for Rogue {
        fn algorithm(&self) -> Algorithm {
            Algorithm::AlwaysAbstain
        }

        fn act(&mut self, _x: Context, _rng: &mut dyn RandomSource) -> Result<(Prediction, Coin)> {
            Ok((Prediction::Label(Label(9)), Coin::NotTossed))
        }

        fn observe(
            &mut self,
            _x: Context,
            _a: Prediction,
            _f: Option<Label>,
            _c: Coin,
            _rng: &mut dyn RandomSource,
        ) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn protocol_violations_are_reported() {
        let class = make_threshold_class(2).unwrap();
        let mut adv = make_threshold_tight_adversary(2, 1, 4).unwrap();
        let mut rng = ScriptedSource::default();
        let err = play(&mut Rogue, &mut adv, &class, 4, &mut rng, None).unwrap_err();
        assert!(matches!(err, crate::Error::Protocol(_)));

        let law = StochasticLaw::new(vec![(Context(5), Label(1), 1.0)]).unwrap();
        let mut adv = Adversary::stochastic(law, 3);
        let err = play(&mut AlwaysOne, &mut adv, &class, 1, &mut rng, None).unwrap_err();
        assert!(matches!(err, crate::Error::Protocol(_)));
    }

    /// Straight-line replay of the versioned uniform explorer on the threshold
    /// class, written without the library's learner code.
    fn vue_oracle(n: u32, t_star: u32, horizon: u32, coins: &[bool]) -> Vec<(u32, u16, Option<u16>, char)> {
        let block = horizon.div_ceil(n);
        // f_t abstains on x <= t and predicts 1 above.
        let mut alive = vec![true; n as usize + 1];
        let mut coins = coins.iter().copied();
        let mut out = Vec::new();
        for t in 1..=horizon {
            let x = ((t - 1) / block + 1).min(n);
            let y: u16 = if x <= t_star { 2 } else { 1 };
            let preds: Vec<Option<u16>> = (0..=n)
                .filter(|&k| alive[k as usize])
                .map(|k| if x <= k { None } else { Some(1) })
                .collect();
            let all_same = preds.iter().all(|p| *p == preds[0]);
            let (action, coin) = if all_same {
                (preds[0], '_')
            } else if coins.next().unwrap_or(false) {
                (None, '1')
            } else {
                (Some(1), '0')
            };
            if action.is_none() {
                for k in 0..=n {
                    let pred = if x <= k { None } else { Some(1) };
                    if pred.is_some_and(|l| l != y) {
                        alive[k as usize] = false;
                    }
                }
            }
            out.push((x, y, action, coin));
        }
        out
    }

    #[test]
    fn vue_matches_replay_oracle() {
        let class = Arc::new(make_threshold_class(3).unwrap());
        let script = [true, false, false];
        let expected = vue_oracle(3, 2, 12, &script);
        let mut learner = Vue::new(class.clone(), 0.5, TieBreak::LexMin);
        let mut adv = make_threshold_tight_adversary(3, 2, 12).unwrap();
        let mut rng = ScriptedSource::new(script);
        let rounds = play(&mut learner, &mut adv, &class, 12, &mut rng, None).unwrap();
        let got: Vec<_> = rounds
            .iter()
            .map(|r| {
                let coin = match r.coin {
                    Coin::NotTossed => '_',
                    Coin::Tails => '0',
                    Coin::Heads => '1',
                };
                (r.context.0, r.label.0, r.action.label().map(|l| l.0), coin)
            })
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn runs_are_reproducible() {
        let class = Arc::new(make_threshold_class(4).unwrap());
        let learner = LearnerConfig::new(Algorithm::VueProd, 300).with_p(0.2).with_eta(0.2);
        let cfg = GameConfig::new(learner, AdversarySpec::ThresholdTight { t_star: 2 }, 17);
        let a = run(&cfg, class.clone()).unwrap();
        let b = run(&cfg, class).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.config_digest, cfg.digest());
    }

    #[test]
    fn feedback_wall() {
        // Re-running against a stream whose labels differ only on rounds where
        // the learner predicted must not change any action.
        let class = Arc::new(crate::model::make_random_class(4, 3, 6, 0.4, 2).unwrap());
        let spec = AdversarySpec::NoisySynthetic {
            target: 1,
            noise_rate: 0.2,
            context_law: ContextLaw::Uniform,
        };
        let learner_cfg = LearnerConfig::new(Algorithm::Vue, 200).with_p(0.3);
        let cfg = GameConfig::new(learner_cfg.clone(), spec, 5);
        let base = run(&cfg, class.clone()).unwrap();

        let pairs: Vec<(Context, Label)> = base
            .rounds
            .iter()
            .map(|r| {
                let y = if r.is_abstention() {
                    r.label
                } else {
                    Label(r.label.0 % 3 + 1)
                };
                (r.context, y)
            })
            .collect();
        let pairs = Arc::new(pairs);
        let rule: crate::adversary::ScriptedRule = {
            let pairs = pairs.clone();
            Arc::new(move |h: &[HistoryEntry], _rng: &mut rand_chacha::ChaCha8Rng| pairs[h.len()])
        };
        let mut adv = Adversary::scripted(rule, 0);
        let mut learner = build_learner(&learner_cfg, class.clone()).unwrap();
        let mut rng = SeededSource::new(cfg.learner_seed());
        let altered = play(learner.as_mut(), &mut adv, &class, 200, &mut rng, None).unwrap();
        let a: Vec<_> = base.rounds.iter().map(|r| (r.action, r.coin)).collect();
        let b: Vec<_> = altered.iter().map(|r| (r.action, r.coin)).collect();
        assert_eq!(a, b);
    }

    fn lb(variant: LowerBoundVariant, gamma: f64) -> AdversarySpec {
        AdversarySpec::LowerBound {
            variant,
            gamma,
            context: Context(1),
        }
    }

    #[test]
    fn coupled_pair_with_zero_gamma_is_identical() {
        let class = Arc::new(crate::adversary::lower_bound_class());
        let learner = LearnerConfig::new(Algorithm::Vue, 100).with_p(0.2);
        let c1 = GameConfig::new(learner.clone(), lb(LowerBoundVariant::P1, 0.0), 4);
        let c2 = GameConfig::new(learner, lb(LowerBoundVariant::P2, 0.0), 4);
        let (a, b) = run_coupled_pair(&c1, &c2, class).unwrap();
        assert_eq!(a.rounds, b.rounds);
    }

    #[test]
    fn coupled_pair_diverges_at_first_flip() {
        let class = Arc::new(crate::adversary::lower_bound_class());
        let learner = LearnerConfig::new(Algorithm::AlwaysAbstain, 20);
        let c1 = GameConfig::new(learner.clone(), lb(LowerBoundVariant::P1, 0.5), 8);
        let c2 = GameConfig::new(learner, lb(LowerBoundVariant::P2, 0.5), 8);
        let (a, b) = run_coupled_pair(&c1, &c2, class).unwrap();
        let first_flip = b.rounds.iter().position(|r| r.label == Label(2));
        let first_diff = a
            .rounds
            .iter()
            .zip(&b.rounds)
            .position(|(r1, r2)| r1.feedback != r2.feedback);
        assert!(first_flip.is_some());
        assert_eq!(first_diff, first_flip);
    }

    #[test]
    fn coupled_pair_rejects_mismatch() {
        let class = Arc::new(crate::adversary::lower_bound_class());
        let learner = LearnerConfig::new(Algorithm::Vue, 10);
        let c1 = GameConfig::new(learner.clone(), lb(LowerBoundVariant::P1, 0.25), 1);
        let c2 = GameConfig::new(learner.clone(), lb(LowerBoundVariant::P2, 0.25), 2);
        assert!(run_coupled_pair(&c1, &c2, class.clone()).is_err());
        let c3 = GameConfig::new(learner, lb(LowerBoundVariant::P1, 0.25), 1);
        assert!(run_coupled_pair(&c1, &c3, class).is_err());
    }

    #[test]
    fn never_abstaining_pair_agrees_everywhere() {
        let class = crate::adversary::lower_bound_class();
        let (mut p1, mut p2) = crate::adversary::make_lower_bound_pair(0.5, Context(1), 3).unwrap();
        let mut r1 = ScriptedSource::default();
        let mut r2 = ScriptedSource::default();
        let a = play(&mut AlwaysOne, &mut p1, &class, 50, &mut r1, None).unwrap();
        let b = play(&mut AlwaysOne, &mut p2, &class, 50, &mut r2, None).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.action == y.action));
    }
}
