//! The players of the game and their losses.

pub mod generator;
pub mod losses;
pub mod model;
pub mod networks;

pub use generator::{ConvexGenerator, GeneratorNet, UnconstrainedGenerator};
pub use losses::{
    classifier_loss, discriminator_loss, generator_classifier_loss, generator_discriminator_loss, generator_loss,
    LossVariant, Role,
};
pub use model::{convex_param_count, fingerprint, Architecture, FeatureArch, GamoModel, GeneratorKind};
pub use networks::{argmax_rows, one_hot, Classifier, Discriminator, FeatureExtractor};
