use std::fmt::Write as _;

use super::{Context, Label, Prediction};
use crate::error::{protocol, Result};

/// Outcome of the exploration coin for one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coin {
    NotTossed,
    Tails,
    Heads,
}

impl Coin {
    pub fn from_heads(heads: bool) -> Self {
        if heads {
            Coin::Heads
        } else {
            Coin::Tails
        }
    }

    #[inline]
    pub fn is_heads(self) -> bool {
        matches!(self, Coin::Heads)
    }

    fn symbol(self) -> &'static str {
        match self {
            Coin::NotTossed => "_",
            Coin::Tails => "0",
            Coin::Heads => "1",
        }
    }
}

/// One round of the game: `(X_t, Y_t, Ŷ_t, Z_t, C_t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RoundRecord {
    pub t: u32,
    pub context: Context,
    pub label: Label,
    pub action: Prediction,
    /// `Some(label)` exactly when the action was an abstention.
    pub feedback: Option<Label>,
    pub coin: Coin,
}

impl RoundRecord {
    /// Builds a record, deriving the feedback from the action.
    pub fn new(t: u32, context: Context, label: Label, action: Prediction, coin: Coin) -> Self {
        Self {
            t,
            context,
            label,
            action,
            feedback: feedback_for(action, label),
            coin,
        }
    }

    #[inline]
    pub fn is_mistake(&self) -> bool {
        self.action.is_mistake(self.label)
    }

    #[inline]
    pub fn is_abstention(&self) -> bool {
        self.action.is_abstain()
    }

    pub fn feedback_consistent(&self) -> bool {
        self.feedback == feedback_for(self.action, self.label)
    }
}

/// The feedback rule: the label is revealed exactly on abstention.
#[inline]
pub fn feedback_for(action: Prediction, label: Label) -> Option<Label> {
    match action {
        Prediction::Abstain => Some(label),
        Prediction::Label(_) => None,
    }
}

/// Full history of one run.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Transcript {
    pub rounds: Vec<RoundRecord>,
    pub config_digest: u64,
    pub seed: u64,
}

impl Transcript {
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    /// Checks contiguous 1-based round indices and the feedback rule.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.rounds.iter().enumerate() {
            if r.t as usize != i + 1 {
                return Err(protocol(format!(
                    "round {} recorded at position {}",
                    r.t,
                    i + 1
                )));
            }
            if !r.feedback_consistent() {
                return Err(protocol(format!("round {}: feedback breaks the feedback rule", r.t)));
            }
        }
        Ok(())
    }

    /// Prefix of the first `t` rounds.
    pub fn prefix(&self, t: usize) -> &[RoundRecord] {
        &self.rounds[..t.min(self.rounds.len())]
    }

    /// CSV with header `t,x,y,action,feedback,coin`; `_` marks abstain,
    /// no feedback and an untossed coin.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * self.rounds.len() + 32);
        out.push_str("t,x,y,action,feedback,coin\n");
        for r in &self.rounds {
            let fb = match r.feedback {
                Some(l) => l.to_string(),
                None => "_".to_string(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t,
                r.context,
                r.label,
                r.action,
                fb,
                r.coin.symbol()
            );
        }
        out
    }
}
