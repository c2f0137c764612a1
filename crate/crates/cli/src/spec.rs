//! Run specifications: a TOML file describing the data, the variant(s) and
//! the training settings.

use std::fs;
use std::path::{Path, PathBuf};

use gamo_core::baselines::{AblationVariant, SmoteConfig};
use gamo_core::data::{
    load_csv, load_idx, ClassGeometry, make_gaussian_toy_split, subsample_imbalanced, Dataset, ImbalanceSpec, Standardizer,
    ToyGeometry,
};
use gamo_core::gamo::LossVariant;
use gamo_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub dataset: DatasetSpec,
    /// Variant run by `train` and `export`.
    #[serde(default = "default_variant")]
    pub variant: AblationVariant,
    /// Variants compared by `ablate`.
    #[serde(default)]
    pub variants: Vec<AblationVariant>,
    /// Loss variants compared by `ablate`.
    #[serde(default = "default_losses")]
    pub losses: Vec<LossVariant>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Repetition `r` uses seed `seed + r` for data sampling and training.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub smote: SmoteConfig,
}

fn default_variant() -> AblationVariant {
    AblationVariant::Gamo
}

fn default_losses() -> Vec<LossVariant> {
    LossVariant::ALL.to_vec()
}

fn default_repetitions() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Synthetic Gaussian classes.
    Toy {
        geometry: GeometrySpec,
        counts: Vec<usize>,
        test_per_class: usize,
        #[serde(default)]
        standardize: bool,
    },
    /// `label,x0,..` files. Without `test`, the test split is drawn from
    /// `train` (`test_per_class` per class).
    Csv {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default)]
        counts: Option<Vec<usize>>,
        #[serde(default)]
        test_per_class: usize,
        #[serde(default)]
        standardize: bool,
    },
    /// IDX image/label pairs (MNIST layout).
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default)]
        counts: Option<Vec<usize>>,
        #[serde(default)]
        test_per_class: usize,
        #[serde(default)]
        standardize: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    TwoGaussians {
        separation: f64,
    },
    MixtureClusters {
        classes: usize,
        per_class: usize,
        dim: usize,
        radius: f64,
        std: f64,
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        classes: Vec<ClassGeometry>,
    },
}

impl GeometrySpec {
    pub fn build(&self) -> ToyGeometry {
        match self {
            Self::TwoGaussians { separation } => ToyGeometry::two_gaussians(*separation),
            Self::MixtureClusters {
                classes,
                per_class,
                dim,
                radius,
                std,
                seed,
            } => ToyGeometry::mixture_clusters(*classes, *per_class, *dim, *radius, *std, *seed),
            Self::Explicit { classes } => ToyGeometry {
                classes: classes.clone(),
            },
        }
    }
}

impl RunSpec {
    /// Parses and validates a spec; relative paths resolve against the
    /// spec file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
        let mut spec = Self::parse(&text).map_err(|e| match e {
            CliError::Spec(msg) => CliError::Spec(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve_paths(base);
        spec.check_files()?;
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: RunSpec = toml::from_str(text).map_err(|e| CliError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |name: &str, msg: &str| Err(CliError::Spec(format!("field `{name}`: {msg}")));
        if self.repetitions == 0 {
            return field("repetitions", "must be at least 1");
        }
        if self.losses.is_empty() {
            return field("losses", "must list at least one of CE, LS");
        }
        match &self.dataset {
            DatasetSpec::Toy {
                counts, test_per_class, ..
            } => {
                if counts.is_empty() || counts.contains(&0) {
                    return field("dataset.counts", "every class needs at least one training point");
                }
                if *test_per_class == 0 {
                    return field("dataset.test_per_class", "must be at least 1");
                }
            }
            DatasetSpec::Csv { test, test_per_class, .. } => {
                if test.is_none() && *test_per_class == 0 {
                    return field("dataset.test_per_class", "needed when no `test` file is given");
                }
            }
            DatasetSpec::Idx {
                test_images,
                test_labels,
                test_per_class,
                ..
            } => {
                if test_images.is_some() != test_labels.is_some() {
                    return field("dataset.test_images", "give both test_images and test_labels, or neither");
                }
                if test_images.is_none() && *test_per_class == 0 {
                    return field("dataset.test_per_class", "needed when no test files are given");
                }
            }
        }
        self.train
            .validate()
            .map_err(|e| CliError::Spec(format!("table `train`: {e}")))?;
        if self.smote.neighbors == 0 {
            return field("smote.neighbors", "must be at least 1");
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetSpec::Toy { .. } => {}
            DatasetSpec::Csv { train, test, .. } => {
                fix(train);
                if let Some(t) = test {
                    fix(t);
                }
            }
            DatasetSpec::Idx {
                images,
                labels,
                test_images,
                test_labels,
                ..
            } => {
                fix(images);
                fix(labels);
                for p in [test_images, test_labels].into_iter().flatten() {
                    fix(p);
                }
            }
        }
        if let Some(out) = &mut self.out {
            fix(out);
        }
    }

    fn check_files(&self) -> Result<(), CliError> {
        let files: Vec<(&str, &PathBuf)> = match &self.dataset {
            DatasetSpec::Toy { .. } => vec![],
            DatasetSpec::Csv { train, test, .. } => {
                let mut v = vec![("dataset.train", train)];
                v.extend(test.iter().map(|t| ("dataset.test", t)));
                v
            }
            DatasetSpec::Idx {
                images,
                labels,
                test_images,
                test_labels,
                ..
            } => {
                let mut v = vec![("dataset.images", images), ("dataset.labels", labels)];
                v.extend(test_images.iter().map(|t| ("dataset.test_images", t)));
                v.extend(test_labels.iter().map(|t| ("dataset.test_labels", t)));
                v
            }
        };
        for (field, path) in files {
            if !path.is_file() {
                return Err(CliError::Spec(format!("field `{field}`: {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn seed_for(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }

    /// Reads any files once; [`DataSource::realize`] then draws per-seed splits.
    pub fn data_source(&self) -> Result<DataSource, CliError> {
        let standardize = match &self.dataset {
            DatasetSpec::Toy { standardize, .. }
            | DatasetSpec::Csv { standardize, .. }
            | DatasetSpec::Idx { standardize, .. } => *standardize,
        };
        let kind = match &self.dataset {
            DatasetSpec::Toy {
                geometry,
                counts,
                test_per_class,
                ..
            } => {
                let geometry = geometry.build();
                if geometry.classes.len() != counts.len() {
                    return Err(CliError::Spec(format!(
                        "field `dataset.counts`: {} counts for {} toy classes",
                        counts.len(),
                        geometry.classes.len()
                    )));
                }
                SourceKind::Toy {
                    geometry,
                    counts: counts.clone(),
                    test_per_class: *test_per_class,
                }
            }
            DatasetSpec::Csv {
                train,
                test,
                counts,
                test_per_class,
                ..
            } => SourceKind::Files {
                pool: load_csv(train)?,
                test: test.as_ref().map(load_csv).transpose()?,
                counts: counts.clone(),
                test_per_class: *test_per_class,
            },
            DatasetSpec::Idx {
                images,
                labels,
                test_images,
                test_labels,
                counts,
                test_per_class,
                ..
            } => SourceKind::Files {
                pool: load_idx(images, labels)?,
                test: match (test_images, test_labels) {
                    (Some(i), Some(l)) => Some(load_idx(i, l)?),
                    _ => None,
                },
                counts: counts.clone(),
                test_per_class: *test_per_class,
            },
        };
        Ok(DataSource { kind, standardize })
    }
}

pub struct DataSource {
    kind: SourceKind,
    standardize: bool,
}

enum SourceKind {
    Toy {
        geometry: ToyGeometry,
        counts: Vec<usize>,
        test_per_class: usize,
    },
    Files {
        pool: Dataset,
        test: Option<Dataset>,
        counts: Option<Vec<usize>>,
        test_per_class: usize,
    },
}

/// Counts ordered by ascending original label.
fn counts_by_label(data: &Dataset) -> Vec<usize> {
    let mut pairs: Vec<(i64, usize)> = data.class_labels().iter().copied().zip(data.counts()).collect();
    pairs.sort();
    pairs.into_iter().map(|(_, n)| n).collect()
}

impl DataSource {
    /// `(train, test)` for one seed, with the test set in the training
    /// class order.
    pub fn realize(&self, seed: u64) -> Result<(Dataset, Dataset), CliError> {
        let (train, test) = match &self.kind {
            SourceKind::Toy {
                geometry,
                counts,
                test_per_class,
            } => make_gaussian_toy_split(
                &ImbalanceSpec {
                    counts: counts.clone(),
                    test_per_class: *test_per_class,
                    seed,
                },
                geometry,
            )?,
            SourceKind::Files {
                pool,
                test: None,
                counts,
                test_per_class,
            } => {
                let counts = counts.clone().unwrap_or_else(|| {
                    counts_by_label(pool)
                        .into_iter()
                        .map(|n| n.saturating_sub(*test_per_class))
                        .collect()
                });
                subsample_imbalanced(
                    pool,
                    &ImbalanceSpec {
                        counts,
                        test_per_class: *test_per_class,
                        seed,
                    },
                )?
            }
            SourceKind::Files {
                pool,
                test: Some(test_file),
                counts,
                test_per_class,
            } => {
                let train = match counts {
                    Some(c) => {
                        subsample_imbalanced(
                            pool,
                            &ImbalanceSpec {
                                counts: c.clone(),
                                test_per_class: 0,
                                seed,
                            },
                        )?
                        .0
                    }
                    None => pool.clone(),
                };
                let test = if *test_per_class > 0 {
                    let (picked, _) = subsample_imbalanced(
                        test_file,
                        &ImbalanceSpec {
                            counts: vec![*test_per_class; test_file.num_classes()],
                            test_per_class: 0,
                            seed: seed ^ 0x7E57,
                        },
                    )?;
                    picked
                } else {
                    test_file.clone()
                };
                let test = Dataset::with_class_order(test.features().clone(), &test.original_labels(), train.class_labels())?;
                (train, test)
            }
        };
        if self.standardize {
            let s = Standardizer::fit(&train);
            Ok((s.apply(&train)?, s.apply(&test)?))
        } else {
            Ok((train, test))
        }
    }
}
