//! Online selective classification with abstention-only feedback.
//!
//! A learner faces a stream of contexts and may either predict a label or
//! abstain; the true label is revealed only on abstention. The crate provides
//! finite classes of selective classifiers ([`model`]), data-generating
//! processes ([`adversary`]), the learners ([`learner`]), the game loop
//! ([`engine`]), exact post-hoc regret metrics ([`analysis`]) and Monte Carlo
//! checks of the concentration bounds behind them ([`concentration`]).

pub mod adversary;
pub mod analysis;
pub mod concentration;
pub mod engine;
pub mod error;
pub mod learner;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
