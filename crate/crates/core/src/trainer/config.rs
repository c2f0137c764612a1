use serde::{Deserialize, Serialize};

use crate::diffcore::OptimizerConfig;
use crate::error::{Error, Result};
use crate::gamo::{Architecture, GeneratorKind, LossVariant};

/// Which players take part in the game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Players {
    pub generator: GeneratorKind,
    pub discriminator: bool,
    /// The classifier trains on generated batches and the generator plays
    /// against it.
    pub classifier_adversarial: bool,
}

impl Players {
    pub const CLASSIFIER_ONLY: Players = Players {
        generator: GeneratorKind::None,
        discriminator: false,
        classifier_adversarial: false,
    };
    pub const GAMO: Players = Players {
        generator: GeneratorKind::Convex,
        discriminator: true,
        classifier_adversarial: true,
    };

    pub fn validate(&self) -> Result<()> {
        let has_gen = self.generator != GeneratorKind::None;
        if has_gen && !self.discriminator && !self.classifier_adversarial {
            return Err(Error::Config("a generator needs an adversary".into()));
        }
        if !has_gen && (self.discriminator || self.classifier_adversarial) {
            return Err(Error::Config("adversarial players need a generator".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct OptimizerSet {
    pub feature: OptimizerConfig,
    pub classifier: OptimizerConfig,
    pub discriminator: OptimizerConfig,
    pub generator: OptimizerConfig,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossVariant,
    pub arch: Architecture,
    pub batch_size: usize,
    /// Feature-extractor steps per epoch; `⌈n/b⌉` when unset.
    pub u_steps: Option<usize>,
    /// Adversarial iterations per epoch; `⌈n/b⌉` when unset.
    pub v_steps: Option<usize>,
    pub epochs: usize,
    pub optimizers: OptimizerSet,
    pub seed: u64,
    pub train_feature: bool,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossVariant::CrossEntropy,
            arch: Architecture::default(),
            batch_size: 64,
            u_steps: None,
            v_steps: None,
            epochs: 50,
            optimizers: OptimizerSet::default(),
            seed: 0,
            train_feature: false,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.u_steps == Some(0) || self.v_steps == Some(0) {
            return Err(Error::Config("u_steps and v_steps must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must lie in [0, 1)".into()));
        }
        if self.train_feature && self.arch.feature.is_none() {
            return Err(Error::Config("train_feature needs a dense feature extractor in arch.feature".into()));
        }
        self.arch.validate()?;
        for opt in [
            &self.optimizers.feature,
            &self.optimizers.classifier,
            &self.optimizers.discriminator,
            &self.optimizers.generator,
        ] {
            opt.validate()?;
        }
        Ok(())
    }

    /// `(u, v)` for a training set of `n` points.
    pub fn step_counts(&self, n: usize) -> (usize, usize) {
        let default = n.div_ceil(self.batch_size).max(1);
        (self.u_steps.unwrap_or(default), self.v_steps.unwrap_or(default))
    }
}
