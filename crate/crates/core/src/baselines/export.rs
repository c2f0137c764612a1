use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::smote::balancing_counts;
use crate::data::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::gamo::GamoModel;
use crate::trainer::generate;

/// Rows `start..end` of an exported dataset are synthetic points of one class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticRange {
    pub class: usize,
    pub label: i64,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub original_rows: usize,
    pub total_rows: usize,
    pub synthetic: Vec<SyntheticRange>,
}

pub struct BalancedExport {
    pub data: Dataset,
    pub manifest: ExportManifest,
}

/// Originals (in the model's feature space) followed by generated points:
/// `n_{c−1} − n_i` for each minority class `i`, so every class ends up with
/// the majority count.
pub fn export_balanced_dataset(model: &GamoModel, data: &Dataset, rng: &mut ChaCha8Rng) -> Result<BalancedExport> {
    if model.generator.is_none() {
        return Err(Error::Config("model has no generator to oversample with".into()));
    }
    if model.epochs_trained == 0 {
        return Err(Error::Config("model has not been trained".into()));
    }
    if model.classes != data.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, data {}",
            model.classes,
            data.num_classes()
        )));
    }
    let featured = data.with_features(model.features(data.features())?)?;
    let needs = balancing_counts(data);
    let mut labels = Vec::new();
    let mut synthetic = Vec::new();
    for (class, &need) in needs.iter().enumerate() {
        if need == 0 {
            continue;
        }
        let start = featured.len() + labels.len();
        labels.extend(std::iter::repeat_n(class, need));
        synthetic.push(SyntheticRange {
            class,
            label: data.class_labels()[class],
            start,
            end: start + need,
        });
    }
    let samples = if labels.is_empty() {
        Tensor::zeros(&[0, featured.dim()])
    } else {
        generate(model, &labels, rng)?
    };
    let merged = featured.append(&samples, &labels)?;
    Ok(BalancedExport {
        manifest: ExportManifest {
            original_rows: featured.len(),
            total_rows: merged.len(),
            synthetic,
        },
        data: merged,
    })
}
