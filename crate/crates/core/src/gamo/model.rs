use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::Dataset;
use crate::diffcore::{Checkpoint, Mlp, Tensor};
use crate::error::{Error, Result};
use crate::gamo::generator::{ConvexGenerator, GeneratorNet, UnconstrainedGenerator};
use crate::gamo::losses::LossVariant;
use crate::gamo::networks::{Classifier, Discriminator, FeatureExtractor};

/// Network sizes shared by every player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub latent_dim: usize,
    pub intermediate_dim: usize,
    pub hidden: usize,
    pub classifier_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    /// Dense feature extractor `[input, hidden, output]`; identity when absent.
    pub feature: Option<FeatureArch>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureArch {
    pub hidden: usize,
    pub output: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            intermediate_dim: 64,
            hidden: 128,
            classifier_hidden: vec![128],
            discriminator_hidden: vec![128],
            feature: None,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let widths = [self.latent_dim, self.intermediate_dim, self.hidden];
        let feature = self.feature.as_ref().is_none_or(|f| f.hidden > 0 && f.output > 0);
        let hidden_ok = self
            .classifier_hidden
            .iter()
            .chain(&self.discriminator_hidden)
            .all(|&h| h > 0);
        if widths.contains(&0) || !feature || !hidden_ok {
            return Err(Error::Config("network widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    None,
    Unconstrained,
    Convex,
}

/// Feature extractor, classifier, and the optional discriminator and generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GamoModel {
    pub feature: FeatureExtractor,
    pub classifier: Classifier,
    pub discriminator: Option<Discriminator>,
    pub generator: Option<GeneratorNet>,
    pub loss: LossVariant,
    pub latent_dim: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub class_labels: Vec<i64>,
    pub seed: u64,
    pub epochs_trained: usize,
}

/// Parameter count of a convex generator built for `data` with `arch`.
pub fn convex_param_count(arch: &Architecture, classes: usize, counts: &[usize]) -> usize {
    let l = arch.latent_dim + classes;
    let ctmu = l * arch.hidden + arch.hidden + arch.hidden * arch.intermediate_dim + arch.intermediate_dim;
    let igus: usize = counts[..classes - 1]
        .iter()
        .map(|&n| n * arch.intermediate_dim + n)
        .sum();
    ctmu + igus
}

impl GamoModel {
    /// Fresh networks for `data` (raw inputs; the convex generator snapshots
    /// the initial feature space).
    pub fn init(
        arch: &Architecture,
        generator: GeneratorKind,
        discriminator: bool,
        loss: LossVariant,
        data: &Dataset,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        let classes = data.num_classes();
        if classes < 2 {
            return Err(Error::Config("at least two classes are required".into()));
        }
        let seeds: Vec<u64> = (0..4).map(|k| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)).collect();
        let feature = match &arch.feature {
            Some(f) => FeatureExtractor::dense(data.dim(), f.hidden, f.output, seeds[0])?,
            None => FeatureExtractor::Identity,
        };
        let feat_dim = feature.output_dim(data.dim());
        let classifier = Classifier::init(feat_dim, &arch.classifier_hidden, classes, seeds[1])?;
        let disc = if discriminator {
            Some(Discriminator::init(feat_dim, &arch.discriminator_hidden, classes, seeds[2])?)
        } else {
            None
        };
        let generator = match generator {
            GeneratorKind::None => None,
            GeneratorKind::Convex => {
                let featured = data.with_features(feature.apply(data.features())?)?;
                Some(GeneratorNet::Convex(ConvexGenerator::init(
                    arch.latent_dim,
                    arch.intermediate_dim,
                    arch.hidden,
                    &featured,
                    seeds[3],
                )?))
            }
            GeneratorKind::Unconstrained => {
                let target = convex_param_count(arch, classes, &data.counts());
                let h = UnconstrainedGenerator::matched_width(arch.latent_dim, classes, feat_dim, target);
                Some(GeneratorNet::Unconstrained(UnconstrainedGenerator::init(
                    arch.latent_dim,
                    classes,
                    h,
                    feat_dim,
                    seeds[3],
                )?))
            }
        };
        Ok(Self {
            feature,
            classifier,
            discriminator: disc,
            generator,
            loss,
            latent_dim: arch.latent_dim,
            classes,
            input_dim: data.dim(),
            class_labels: data.class_labels().to_vec(),
            seed,
            epochs_trained: 0,
        })
    }

    pub fn generator_kind(&self) -> GeneratorKind {
        match &self.generator {
            None => GeneratorKind::None,
            Some(GeneratorNet::Convex(_)) => GeneratorKind::Convex,
            Some(GeneratorNet::Unconstrained(_)) => GeneratorKind::Unconstrained,
        }
    }

    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.feature.apply(x)
    }

    /// Class predictions for raw inputs.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        self.classifier.predict(&self.features(x)?)
    }

    /// Every named network in a fixed order.
    pub fn networks(&self) -> Vec<(String, &Mlp)> {
        let mut out = Vec::new();
        if let FeatureExtractor::Dense(net) = &self.feature {
            out.push(("feature".to_string(), net));
        }
        out.push(("classifier".to_string(), &self.classifier.net));
        if let Some(d) = &self.discriminator {
            out.push(("discriminator".to_string(), &d.net));
        }
        if let Some(gen) = &self.generator {
            out.extend(gen.net_names().into_iter().zip(gen.nets()));
        }
        out
    }

    /// FNV-1a over the parameter bits of each network.
    pub fn fingerprints(&self) -> Vec<(String, u64)> {
        self.networks()
            .into_iter()
            .map(|(name, net)| (name, fingerprint(net)))
            .collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.seed);
        for (name, net) in self.networks() {
            ck.add_mlp(&name, net);
        }
        let mut class_sizes = Vec::new();
        if let Some(GeneratorNet::Convex(c)) = &self.generator {
            for i in 0..self.classes - 1 {
                ck.insert(format!("class_data.{i}"), c.class_data(i).clone());
                class_sizes.push(c.class_data(i).rows());
            }
        }
        ck.manifest.model = json!({
            "classes": self.classes,
            "latent_dim": self.latent_dim,
            "intermediate_dim": match &self.generator {
                Some(GeneratorNet::Convex(c)) => Some(c.ctmu.out_dim()),
                _ => None,
            },
            "minority_counts": class_sizes,
            "loss": self.loss,
            "generator": self.generator_kind(),
            "input_dim": self.input_dim,
            "class_labels": self.class_labels,
            "epochs_trained": self.epochs_trained,
        });
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_value(ck.manifest.model.clone())
            .map_err(|e| Error::Checkpoint(format!("model manifest: {e}")))?;
        let has = |name: &str| ck.manifest.networks.contains_key(name);
        let feature = if has("feature") {
            FeatureExtractor::Dense(ck.mlp("feature")?)
        } else {
            FeatureExtractor::Identity
        };
        let classifier = Classifier {
            net: ck.mlp("classifier")?,
        };
        let discriminator = if has("discriminator") {
            Some(Discriminator {
                net: ck.mlp("discriminator")?,
                classes: meta.classes,
            })
        } else {
            None
        };
        let generator = match meta.generator {
            GeneratorKind::None => None,
            GeneratorKind::Unconstrained => Some(GeneratorNet::Unconstrained(UnconstrainedGenerator {
                net: ck.mlp("cg")?,
                latent_dim: meta.latent_dim,
                classes: meta.classes,
            })),
            GeneratorKind::Convex => {
                let igus = (0..meta.classes - 1)
                    .map(|i| ck.mlp(&format!("igu{i}")))
                    .collect::<Result<Vec<_>>>()?;
                let data = (0..meta.classes - 1)
                    .map(|i| {
                        ck.get(&format!("class_data.{i}"))
                            .cloned()
                            .ok_or_else(|| Error::Checkpoint(format!("missing class_data.{i}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(GeneratorNet::Convex(ConvexGenerator::from_snapshots(
                    ck.mlp("ctmu")?,
                    igus,
                    data,
                    meta.latent_dim,
                )?))
            }
        };
        if classifier.classes() != meta.classes {
            return Err(Error::Checkpoint("classifier width disagrees with the manifest".into()));
        }
        Ok(Self {
            feature,
            classifier,
            discriminator,
            generator,
            loss: meta.loss,
            latent_dim: meta.latent_dim,
            classes: meta.classes,
            input_dim: meta.input_dim,
            class_labels: meta.class_labels,
            seed: ck.manifest.seed,
            epochs_trained: meta.epochs_trained,
        })
    }
}

#[derive(Deserialize)]
struct CheckpointMeta {
    classes: usize,
    latent_dim: usize,
    loss: LossVariant,
    generator: GeneratorKind,
    input_dim: usize,
    class_labels: Vec<i64>,
    #[serde(default)]
    epochs_trained: usize,
}

pub fn fingerprint(net: &Mlp) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in net.params() {
        for v in t.data() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        let rows: Vec<[f64; 3]> = (0..14).map(|i| [i as f64, (i % 3) as f64, 0.5 * i as f64]).collect();
        let labels: Vec<i64> = (0..14).map(|i| if i < 3 { 7 } else if i < 7 { 2 } else { 4 }).collect();
        Dataset::from_original(Tensor::from_rows(&rows).unwrap(), &labels).unwrap()
    }

    fn small() -> Architecture {
        Architecture {
            latent_dim: 4,
            intermediate_dim: 5,
            hidden: 6,
            classifier_hidden: vec![7],
            discriminator_hidden: vec![5],
            feature: Some(FeatureArch { hidden: 4, output: 3 }),
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_everything() {
        let d = data();
        for kind in [GeneratorKind::None, GeneratorKind::Unconstrained, GeneratorKind::Convex] {
            let m = GamoModel::init(&small(), kind, true, LossVariant::LeastSquares, &d, 9).unwrap();
            let mut bytes = Vec::new();
            m.to_checkpoint().write_to(&mut bytes).unwrap();
            let back = GamoModel::from_checkpoint(&Checkpoint::read_from(bytes.as_slice()).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn manifest_lists_generator_shape() {
        let m = GamoModel::init(&small(), GeneratorKind::Convex, true, LossVariant::CrossEntropy, &data(), 1).unwrap();
        let meta = m.to_checkpoint().manifest.model;
        assert_eq!(meta["classes"], 3);
        assert_eq!(meta["latent_dim"], 4);
        assert_eq!(meta["intermediate_dim"], 5);
        assert_eq!(meta["minority_counts"], json!([3, 4]));
        assert_eq!(meta["loss"], "CE");
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let d = data();
        let a = GamoModel::init(&small(), GeneratorKind::Convex, true, LossVariant::CrossEntropy, &d, 3).unwrap();
        let b = GamoModel::init(&small(), GeneratorKind::Convex, true, LossVariant::CrossEntropy, &d, 3).unwrap();
        let c = GamoModel::init(&small(), GeneratorKind::Convex, true, LossVariant::CrossEntropy, &d, 4).unwrap();
        assert_eq!(a.fingerprints(), b.fingerprints());
        assert_ne!(a.fingerprints(), c.fingerprints());
    }

    #[test]
    fn unconstrained_generator_matches_convex_capacity() {
        let d = data();
        let arch = Architecture {
            feature: None,
            ..Architecture::default()
        };
        let m = GamoModel::init(&arch, GeneratorKind::Unconstrained, false, LossVariant::CrossEntropy, &d, 0).unwrap();
        let target = convex_param_count(&arch, 3, &d.counts()) as f64;
        let got = m.generator.unwrap().param_count() as f64;
        assert!((got - target).abs() / target < 0.10, "{got} vs {target}");
    }
}
