//! Class-balanced metrics and the discrete-distribution oracles for the
//! classifier/generator game.

pub mod divergence;
pub mod metrics;

pub use divergence::{
    js_divergence, kl_divergence, optimal_classifier, theorem1_sum, DiscreteDistributionSet, JsTerm, Theorem1Sum,
};
pub use metrics::{acsa, gm, ConfusionMatrix, EvalReport};
