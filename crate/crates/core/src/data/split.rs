use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Per-class training counts and a fixed per-class test size.
///
/// `counts[r]` applies to the `r`-th smallest original label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceSpec {
    pub counts: Vec<usize>,
    pub test_per_class: usize,
    pub seed: u64,
}

impl ImbalanceSpec {
    /// The imbalanced MNIST protocol: `{4000, .., 40}` train, 100 test per class.
    pub fn mnist(seed: u64) -> Self {
        Self {
            counts: vec![4000, 2000, 1000, 750, 500, 350, 200, 100, 60, 40],
            test_per_class: 100,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() || self.counts.contains(&0) {
            return Err(Error::Config(format!("class counts must be positive, got {:?}", self.counts)));
        }
        Ok(())
    }

    /// Counts with room for the test split (`counts[r] + test_per_class`).
    pub fn pool_counts(&self) -> Vec<usize> {
        self.counts.iter().map(|c| c + self.test_per_class).collect()
    }

    pub fn imbalance_ratio(&self) -> f64 {
        let max = *self.counts.iter().max().unwrap_or(&0) as f64;
        let min = *self.counts.iter().min().unwrap_or(&0) as f64;
        max / min
    }
}

/// Draws the test split first (`test_per_class` per class), then the
/// training counts from what remains. The training set is re-indexed by
/// size; the test set shares its class mapping.
pub fn subsample_imbalanced(full: &Dataset, spec: &ImbalanceSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let c = full.num_classes();
    if spec.counts.len() != c {
        return Err(Error::Config(format!("{} counts for {c} classes", spec.counts.len())));
    }
    let mut by_label: Vec<(i64, usize)> = full.class_labels().iter().copied().zip(0..c).collect();
    by_label.sort();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (r, &(label, class)) in by_label.iter().enumerate() {
        let need = spec.counts[r] + spec.test_per_class;
        let mut rows = full.class_index(class).to_vec();
        if rows.len() < need {
            return Err(Error::Data(format!(
                "class with label {label} has {} points, needs {need}",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        test_rows.extend_from_slice(&rows[..spec.test_per_class]);
        train_rows.extend_from_slice(&rows[spec.test_per_class..need]);
    }
    let original = full.original_labels();
    let pick = |rows: &[usize]| -> Result<(Tensor, Vec<i64>)> {
        Ok((full.features().select_rows(rows)?, rows.iter().map(|&r| original[r]).collect()))
    };
    let (tf, tl) = pick(&train_rows)?;
    let train = Dataset::from_original(tf, &tl)?;
    let (ef, el) = pick(&test_rows)?;
    let test = Dataset::with_class_order(ef, &el, train.class_labels())?;
    Ok((train, test))
}

/// Per-feature standardization fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let (n, d) = (data.len(), data.dim());
        let mut mean = vec![0.0; d];
        for r in 0..n {
            mean.iter_mut().zip(data.features().row(r)).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for r in 0..n {
            for ((v, x), m) in var.iter_mut().zip(data.features().row(r)).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n.max(1) as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.mean.len();
        if x.cols() != d {
            return Err(Error::Data(format!("standardizer fitted on {d} features, got {}", x.cols())));
        }
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Tensor::matrix(x.rows(), d, data)
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        data.with_features(self.transform(data.features())?)
    }
}

/// Stratified split: `max(1, round(fraction · n_i))` points of each class go
/// to the held-out part. Every class needs at least two points.
pub fn stratified_holdout(data: &Dataset, fraction: f64, rng: &mut ChaCha8Rng) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("holdout fraction {fraction} outside [0, 1)")));
    }
    let mut keep = Vec::new();
    let mut held = Vec::new();
    for class in 0..data.num_classes() {
        let mut rows = data.class_index(class).to_vec();
        if rows.len() < 2 {
            return Err(Error::Data(format!(
                "class {class} has {} point(s); a stratified holdout needs 2",
                rows.len()
            )));
        }
        rows.shuffle(rng);
        let h = ((fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        held.extend_from_slice(&rows[..h]);
        keep.extend_from_slice(&rows[h..]);
    }
    keep.sort_unstable();
    held.sort_unstable();
    Ok((data.subset(&keep)?, data.subset(&held)?))
}
