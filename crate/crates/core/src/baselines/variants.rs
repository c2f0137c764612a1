use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::smote::{balancing_counts, smote_oversample, SmoteConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gamo::{GamoModel, GeneratorKind};
use crate::trainer::{fit_split, generate, split_for_training, FitOutcome, Players, TrainConfig};

/// The comparison ladder, from the plain classifier up to the full game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationVariant {
    #[serde(rename = "CN")]
    Cn,
    #[serde(rename = "SMOTE_CN")]
    SmoteCn,
    #[serde(rename = "CGAN_CN")]
    CganCn,
    #[serde(rename = "CG_CN")]
    CgCn,
    #[serde(rename = "CG_D_CN")]
    CgDCn,
    #[serde(rename = "GAMO_NO_D")]
    GamoNoD,
    #[serde(rename = "GAMO")]
    Gamo,
}

/// Component switches behind each variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Toggles {
    pub players: Players,
    /// Training data is SMOTE-balanced before the classifier sees it.
    pub smote: bool,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 7] = [
        Self::Cn,
        Self::SmoteCn,
        Self::CganCn,
        Self::CgCn,
        Self::CgDCn,
        Self::GamoNoD,
        Self::Gamo,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Cn => "CN",
            Self::SmoteCn => "SMOTE_CN",
            Self::CganCn => "CGAN_CN",
            Self::CgCn => "CG_CN",
            Self::CgDCn => "CG_D_CN",
            Self::GamoNoD => "GAMO_NO_D",
            Self::Gamo => "GAMO",
        }
    }

    pub fn toggles(self) -> Toggles {
        let p = |generator, discriminator, classifier_adversarial| Players {
            generator,
            discriminator,
            classifier_adversarial,
        };
        let (players, smote) = match self {
            Self::Cn => (Players::CLASSIFIER_ONLY, false),
            Self::SmoteCn => (Players::CLASSIFIER_ONLY, true),
            Self::CganCn => (p(GeneratorKind::Unconstrained, true, false), false),
            Self::CgCn => (p(GeneratorKind::Unconstrained, false, true), false),
            Self::CgDCn => (p(GeneratorKind::Unconstrained, true, true), false),
            Self::GamoNoD => (p(GeneratorKind::Convex, false, true), false),
            Self::Gamo => (Players::GAMO, false),
        };
        Toggles { players, smote }
    }

    pub fn from_toggles(t: Toggles) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.toggles() == t)
    }

    /// Whether the generator is trained against the classifier that is evaluated.
    pub fn is_adversarial(self) -> bool {
        self.toggles().players.classifier_adversarial
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', '+', '\\'], "_");
        let norm = match norm.as_str() {
            "GAMO_D" => "GAMO_NO_D".to_string(),
            _ => norm,
        };
        Self::ALL
            .into_iter()
            .find(|v| v.tag() == norm)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|v| v.tag()).collect();
                Error::Config(format!("unknown variant {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

pub struct VariantOutcome {
    pub variant: AblationVariant,
    /// Classifier-bearing model selected on validation ACSA.
    pub model: GamoModel,
    pub fit: FitOutcome,
    /// Conditional GAN trained before the classifier (CGAN_CN only).
    pub pretrained: Option<FitOutcome>,
    /// Rows added to the training data before the classifier was fit
    /// (SMOTE_CN and CGAN_CN), as `(features, class indices)`.
    pub synthetic: Option<(crate::diffcore::Tensor, Vec<usize>)>,
}

fn split_synthetic(augmented: &Dataset, originals: usize) -> Result<(crate::diffcore::Tensor, Vec<usize>)> {
    let rows: Vec<usize> = (originals..augmented.len()).collect();
    Ok((
        augmented.features().select_rows(&rows)?,
        augmented.labels()[originals..].to_vec(),
    ))
}

/// Trains one rung of the ladder on `data`. A stratified validation split is
/// held out first; oversampling only ever touches the training part.
pub fn train_variant(variant: AblationVariant, data: &Dataset, cfg: &TrainConfig, smote: &SmoteConfig) -> Result<VariantOutcome> {
    cfg.validate()?;
    let (train, val) = split_for_training(data, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xBA5E_11E5);
    let toggles = variant.toggles();
    match variant {
        AblationVariant::SmoteCn => {
            let augmented = smote_oversample(&train, smote, &mut rng)?;
            let synthetic = split_synthetic(&augmented, train.len())?;
            let fit = fit_split(augmented, val, cfg, &toggles.players)?;
            Ok(VariantOutcome {
                variant,
                model: fit.best.clone(),
                fit,
                pretrained: None,
                synthetic: Some(synthetic),
            })
        }
        AblationVariant::CganCn => {
            let gan = fit_split(train.clone(), val.clone(), cfg, &toggles.players)?;
            let mut labels = Vec::new();
            for (class, need) in balancing_counts(&train).into_iter().enumerate() {
                labels.extend(std::iter::repeat_n(class, need));
            }
            let samples = generate(&gan.last, &labels, &mut rng)?;
            let augmented = train.append(&samples, &labels)?;
            let fit = fit_split(augmented, val, cfg, &Players::CLASSIFIER_ONLY)?;
            Ok(VariantOutcome {
                variant,
                model: fit.best.clone(),
                fit,
                pretrained: Some(gan),
                synthetic: Some((samples, labels)),
            })
        }
        _ => {
            let fit = fit_split(train, val, cfg, &toggles.players)?;
            Ok(VariantOutcome {
                variant,
                model: fit.best.clone(),
                fit,
                pretrained: None,
                synthetic: None,
            })
        }
    }
}
