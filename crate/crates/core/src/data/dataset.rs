use std::collections::BTreeMap;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Labelled feature matrix with per-class index sets and empirical priors.
///
/// Class indices run `0..c`. Datasets built with [`Dataset::from_original`]
/// order classes by ascending size, so index `c - 1` is the majority class.
/// `class_labels[k]` remembers the original label of class `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    class_index: Vec<Vec<usize>>,
    priors: Vec<f64>,
    class_labels: Vec<i64>,
}

impl Dataset {
    /// Builds a dataset from original labels, re-indexing classes so that
    /// sizes are non-decreasing (ties keep original label order).
    pub fn from_original(features: Tensor, original: &[i64]) -> Result<Self> {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &l in original {
            *counts.entry(l).or_default() += 1;
        }
        let mut order: Vec<(i64, usize)> = counts.into_iter().collect();
        order.sort_by_key(|&(label, n)| (n, label));
        let class_labels: Vec<i64> = order.into_iter().map(|(l, _)| l).collect();
        Self::with_class_order(features, original, &class_labels)
    }

    /// Builds a dataset with a fixed original-label → class-index mapping,
    /// used for splits and augmented copies that must stay aligned with a
    /// reference training set.
    pub fn with_class_order(features: Tensor, original: &[i64], class_labels: &[i64]) -> Result<Self> {
        let lookup: BTreeMap<i64, usize> = class_labels.iter().enumerate().map(|(k, &l)| (l, k)).collect();
        if lookup.len() != class_labels.len() {
            return Err(Error::Data("duplicate class label in class order".into()));
        }
        let labels = original
            .iter()
            .map(|l| {
                lookup
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("label {l} is not one of {class_labels:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_indices(features, labels, class_labels.to_vec())
    }

    /// Builds a dataset from class indices that already follow `class_labels`.
    pub fn from_indices(features: Tensor, labels: Vec<usize>, class_labels: Vec<i64>) -> Result<Self> {
        let n = labels.len();
        if features.rank() != 2 || features.rows() != n {
            return Err(Error::Data(format!(
                "{n} labels for a feature matrix of shape {:?}",
                features.shape()
            )));
        }
        let c = class_labels.len();
        if c == 0 {
            return Err(Error::Data("a dataset needs at least one class".into()));
        }
        let mut class_index = vec![Vec::new(); c];
        for (row, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(Error::LabelOutOfRange { label: y, classes: c });
            }
            class_index[y].push(row);
        }
        let priors = class_index
            .iter()
            .map(|rows| if n == 0 { 0.0 } else { rows.len() as f64 / n as f64 })
            .collect();
        Ok(Self {
            features,
            labels,
            class_index,
            priors,
            class_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimensionality.
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_index(&self, class: usize) -> &[usize] {
        &self.class_index[class]
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn counts(&self) -> Vec<usize> {
        self.class_index.iter().map(Vec::len).collect()
    }

    pub fn class_labels(&self) -> &[i64] {
        &self.class_labels
    }

    /// Original labels of every row.
    pub fn original_labels(&self) -> Vec<i64> {
        self.labels.iter().map(|&y| self.class_labels[y]).collect()
    }

    /// Largest class count over smallest class count.
    pub fn imbalance_ratio(&self) -> f64 {
        let counts = self.counts();
        let max = counts.iter().copied().max().unwrap_or(0) as f64;
        let min = counts.iter().copied().min().unwrap_or(0) as f64;
        max / min
    }

    /// The rows of class `class` as an `n_i × D` matrix.
    pub fn class_matrix(&self, class: usize) -> Tensor {
        self.features
            .select_rows(&self.class_index[class])
            .expect("class rows are in range")
    }

    /// Rows `rows` (in order) with the same class mapping.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(rows)?;
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Self::from_indices(features, labels, self.class_labels.clone())
    }

    /// Same rows and classes with replaced features.
    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        Self::from_indices(features, self.labels.clone(), self.class_labels.clone())
    }

    /// Appends rows given as class indices under this dataset's mapping.
    pub fn append(&self, extra: &Tensor, labels: &[usize]) -> Result<Self> {
        if extra.rows() != labels.len() || (extra.rows() > 0 && extra.cols() != self.dim()) {
            return Err(Error::Data(format!(
                "cannot append {:?} with {} labels to a {}-dim dataset",
                extra.shape(),
                labels.len(),
                self.dim()
            )));
        }
        let mut data = self.features.data().to_vec();
        data.extend_from_slice(extra.data());
        let features = Tensor::matrix(self.len() + labels.len(), self.dim(), data)?;
        let mut all = self.labels.clone();
        all.extend_from_slice(labels);
        Self::from_indices(features, all, self.class_labels.clone())
    }

    /// Checks the partition / prior / ordering invariants.
    pub fn validate(&self, require_ordering: bool) -> Result<()> {
        let mut seen = vec![false; self.len()];
        for rows in &self.class_index {
            for &r in rows {
                if std::mem::replace(&mut seen[r], true) {
                    return Err(Error::Data(format!("row {r} in two classes")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data("class index does not cover every row".into()));
        }
        let total: f64 = self.priors.iter().sum();
        if !self.is_empty() && (total - 1.0).abs() > 1e-12 {
            return Err(Error::Data(format!("priors sum to {total}")));
        }
        if require_ordering && self.counts().windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Data(format!("class counts {:?} are not ascending", self.counts())));
        }
        Ok(())
    }
}
