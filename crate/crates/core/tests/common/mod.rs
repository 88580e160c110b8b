//! Brute-force oracles shared by the oracle tests and the acceptance suite.
#![allow(dead_code, clippy::needless_range_loop)]

use osc_core::adversary::{Adversary, StochasticLaw};
use osc_core::model::{Coin, Context, FunctionClass, Label, Prediction, RoundRecord, Transcript};
use osc_core::rng::stream;
use rand::Rng;

/// Random stochastic law over the full (context, label) grid.
pub fn random_law(domain: u32, labels: u16, seed: u64) -> StochasticLaw {
    let mut rng = stream(seed);
    let mut raw: Vec<(Context, Label, f64)> = Vec::new();
    for x in 1..=domain {
        for y in 1..=labels {
            raw.push((Context(x), Label(y), rng.random::<f64>() + 0.01));
        }
    }
    let total: f64 = raw.iter().map(|r| r.2).sum();
    let mut support: Vec<_> = raw.into_iter().map(|(x, y, w)| (x, y, w / total)).collect();
    // Put rounding residue on the last entry so the sum is exact enough.
    let sum: f64 = support.iter().map(|r| r.2).sum();
    support.last_mut().unwrap().2 += 1.0 - sum;
    StochasticLaw::new(support).unwrap()
}

pub fn random_transcript(class: &FunctionClass, horizon: usize, seed: u64) -> Transcript {
    let mut rng = stream(seed ^ 0xABCD);
    let rounds = (0..horizon)
        .map(|i| {
            let x = Context(rng.random_range(1..=class.domain_size()));
            let y = Label(rng.random_range(1..=class.num_labels()));
            let action = if rng.random::<f64>() < 0.4 {
                Prediction::Abstain
            } else {
                Prediction::Label(Label(rng.random_range(1..=class.num_labels())))
            };
            let coin = match rng.random_range(0..3) {
                0 => Coin::NotTossed,
                1 => Coin::Tails,
                _ => Coin::Heads,
            };
            RoundRecord::new(i as u32 + 1, x, y, action, coin)
        })
        .collect();
    Transcript {
        rounds,
        ..Default::default()
    }
}

pub struct Recount {
    pub f_star: usize,
    pub a_star: u64,
    pub m_star: u64,
    pub a_star_of_m: Vec<Option<u64>>,
    pub b_star: Vec<u64>,
    pub learner_mistakes: u64,
    pub learner_abstentions: u64,
    pub heads: u64,
}

pub fn recount(class: &FunctionClass, tr: &Transcript) -> Recount {
    let n = class.len();
    let t_max = tr.rounds.len();
    let mut mist = vec![0u64; n];
    let mut abst = vec![0u64; n];
    for f in 0..n {
        for r in &tr.rounds {
            match class.functions()[f].table()[(r.context.0 - 1) as usize] {
                Prediction::Abstain => abst[f] += 1,
                Prediction::Label(l) if l != r.label => mist[f] += 1,
                _ => {}
            }
        }
    }
    let mut f_star = usize::MAX;
    for f in 0..n {
        if mist[f] == 0 && (f_star == usize::MAX || abst[f] < abst[f_star]) {
            f_star = f;
        }
    }
    let m_star = *mist.iter().min().unwrap();
    let a_star_of_m = (0..=t_max as u64)
        .map(|m| (0..n).filter(|&f| mist[f] <= m).map(|f| abst[f]).min())
        .collect();
    let mut b_star = Vec::new();
    for t in 1..=t_max {
        let mut best = u64::MAX;
        for f in 0..n {
            let mut sampled = 0;
            let mut a = 0;
            for r in &tr.rounds[..t] {
                match class.functions()[f].table()[(r.context.0 - 1) as usize] {
                    Prediction::Abstain => a += 1,
                    Prediction::Label(l) if l != r.label && r.coin == Coin::Heads => sampled += 1,
                    _ => {}
                }
            }
            if sampled == 0 {
                best = best.min(a);
            }
        }
        b_star.push(best);
    }
    let mut learner_mistakes = 0;
    let mut learner_abstentions = 0;
    let mut heads = 0;
    for r in &tr.rounds {
        match r.action {
            Prediction::Abstain => learner_abstentions += 1,
            Prediction::Label(l) if l != r.label => learner_mistakes += 1,
            _ => {}
        }
        if r.coin == Coin::Heads {
            heads += 1;
        }
    }
    Recount {
        f_star,
        a_star: abst[f_star],
        m_star,
        a_star_of_m,
        b_star,
        learner_mistakes,
        learner_abstentions,
        heads,
    }
}

/// Straight-line versioned uniform explorer with lexicographic tie-break.
pub fn vue_replay(class: &FunctionClass, pairs: &[(Context, Label)], coins: &[bool]) -> Vec<(Prediction, Coin)> {
    let mut alive = vec![true; class.len()];
    let mut next_coin = 0;
    let mut out = Vec::new();
    for &(x, y) in pairs {
        let xi = (x.0 - 1) as usize;
        let mut outs = Vec::new();
        for f in 0..class.len() {
            if alive[f] {
                outs.push(class.functions()[f].table()[xi]);
            }
        }
        let first = outs[0];
        let step = if outs.iter().all(|o| *o == first) {
            (first, Coin::NotTossed)
        } else {
            let heads = coins.get(next_coin).copied().unwrap_or(false);
            next_coin += 1;
            if heads {
                (Prediction::Abstain, Coin::Heads)
            } else {
                let mut best: Option<Label> = None;
                for o in &outs {
                    if let Prediction::Label(l) = o {
                        if best.is_none_or(|b| *l < b) {
                            best = Some(*l);
                        }
                    }
                }
                (Prediction::Label(best.unwrap()), Coin::Tails)
            }
        };
        if step.0 == Prediction::Abstain {
            for f in 0..class.len() {
                if let Prediction::Label(l) = class.functions()[f].table()[xi] {
                    if l != y {
                        alive[f] = false;
                    }
                }
            }
        }
        out.push(step);
    }
    out
}

/// Straight-line VUE-PROD in linear weights.
pub fn vue_prod_replay(
    class: &FunctionClass,
    pairs: &[(Context, Label)],
    coins: &[bool],
    units: &[f64],
    eta: f64,
) -> Vec<(Prediction, Coin)> {
    let n = class.len();
    let mut alive = vec![true; n];
    let mut w = vec![1.0f64; n];
    let mut out = Vec::new();
    for (t, &(x, y)) in pairs.iter().enumerate() {
        let xi = (x.0 - 1) as usize;
        let total: f64 = (0..n).filter(|&f| alive[f]).map(|f| w[f]).sum();
        let target = units[t] * total;
        let mut acc = 0.0;
        let mut pick = None;
        for f in 0..n {
            if alive[f] {
                acc += w[f];
                pick = Some(f);
                if target < acc {
                    break;
                }
            }
        }
        let f_t = pick.unwrap();
        let heads = coins[t];
        let action = if heads {
            Prediction::Abstain
        } else {
            class.functions()[f_t].table()[xi]
        };
        if heads {
            for f in 0..n {
                if let Prediction::Label(l) = class.functions()[f].table()[xi] {
                    if l != y {
                        alive[f] = false;
                    }
                }
            }
        }
        for f in 0..n {
            if alive[f] && class.functions()[f].table()[xi] == Prediction::Abstain {
                w[f] *= 1.0 - eta;
            }
        }
        out.push((action, Coin::from_heads(heads)));
    }
    out
}

pub fn emitted_pairs(class: &FunctionClass, horizon: usize, seed: u64) -> Vec<(Context, Label)> {
    let mut adv = Adversary::stochastic(random_law(class.domain_size(), class.num_labels(), seed), seed);
    (0..horizon).map(|_| adv.next_pair(&[]).unwrap()).collect()
}

/// Draws one tiny instance from `seed` and compares the library against the
/// oracles above: the competitor metrics on a random transcript, and VUE and
/// VUE-PROD against their replays under scripted coins.
pub fn tiny_instance_agrees(seed: u64) -> Result<(), String> {
    use osc_core::analysis::{competitor, summarize};
    use osc_core::engine::play;
    use osc_core::learner::{TieBreak, Vue, VueProd};
    use osc_core::model::make_random_class;
    use osc_core::rng::ScriptedSource;
    use std::sync::Arc;

    let mut rng = stream(seed);
    let d = rng.random_range(1..=4u32);
    let k = rng.random_range(1..=3u16);
    let n = rng.random_range(1..=7usize);
    let a: f64 = rng.random();
    let horizon = rng.random_range(1..=50usize);
    let class = Arc::new(make_random_class(d, k, n, a, seed).map_err(|e| e.to_string())?);
    if class.len() > 8 {
        return Err(format!("instance {seed} has {} functions", class.len()));
    }

    let tr = random_transcript(&class, horizon, seed);
    let rep = competitor(&tr, &class, true);
    let oracle = recount(&class, &tr);
    let s = summarize(&tr, &class);
    let matched = oracle.a_star_of_m[oracle.learner_mistakes as usize].unwrap();
    let same = rep.f_star == oracle.f_star
        && rep.a_star == oracle.a_star
        && rep.m_star == oracle.m_star
        && (0..oracle.a_star_of_m.len()).all(|m| rep.a_star_of_m(m as u64) == oracle.a_star_of_m[m])
        && rep.b_star_series.as_deref() == Some(&oracle.b_star[..])
        && s.mistakes == oracle.learner_mistakes
        && s.abstentions == oracle.learner_abstentions
        && s.coin_heads == oracle.heads
        && s.mmea == oracle.learner_abstentions as i64 - matched as i64;
    if !same {
        return Err(format!("instance {seed}: competitor metrics differ from recount"));
    }

    let coins: Vec<bool> = (0..horizon).map(|_| rng.random::<f64>() < 0.3).collect();
    let units: Vec<f64> = (0..horizon).map(|_| rng.random::<f64>()).collect();
    let eta = rng.random_range(0.05..=0.5);
    let pairs = emitted_pairs(&class, horizon, seed);

    let mut adv = Adversary::stochastic(random_law(class.domain_size(), class.num_labels(), seed), seed);
    let mut learner = Vue::new(class.clone(), 0.3, TieBreak::LexMin);
    let mut src = ScriptedSource::new(coins.clone());
    let got: Vec<_> = play(&mut learner, &mut adv, &class, horizon as u32, &mut src, None)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|r| (r.action, r.coin))
        .collect();
    if got != vue_replay(&class, &pairs, &coins) {
        return Err(format!("instance {seed}: VUE differs from replay"));
    }

    let mut adv = Adversary::stochastic(random_law(class.domain_size(), class.num_labels(), seed), seed);
    let mut learner = VueProd::new(class.clone(), 0.3, eta);
    let mut src = ScriptedSource::new(coins.clone()).with_units(units.clone());
    let got: Vec<_> = play(&mut learner, &mut adv, &class, horizon as u32, &mut src, None)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|r| (r.action, r.coin))
        .collect();
    if got != vue_prod_replay(&class, &pairs, &coins, &units, eta) {
        return Err(format!("instance {seed}: VUE-PROD differs from replay"));
    }
    Ok(())
}
