//! Generative adversarial minority oversampling.
//!
//! A convex generator synthesizes minority-class points as convex combinations
//! of real minority points and plays a three-player game against a
//! multi-output classifier and a class-conditional discriminator.

pub mod baselines;
pub mod checks;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod evalor;
pub mod gamo;
pub mod trainer;

pub use diffcore::{Activation, Graph, Mlp, Optimizer, OptimizerConfig, Tensor, Var};
pub use error::{Error, Result};
