use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteConfig {
    pub neighbors: usize,
    /// Synthetic points per class; `n_{c-1} − n_i` for every class when unset.
    pub counts: Option<Vec<usize>>,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            neighbors: 5,
            counts: None,
        }
    }
}

/// Number of points each class is short of the largest class.
pub fn balancing_counts(data: &Dataset) -> Vec<usize> {
    let counts = data.counts();
    let max = counts.iter().copied().max().unwrap_or(0);
    counts.into_iter().map(|n| max - n).collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `points`) of the `k` nearest other rows of row `i`; ties go to
/// the lower index.
pub fn nearest_neighbors(points: &Tensor, i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = (0..points.rows())
        .filter(|&j| j != i)
        .map(|j| (squared_distance(points.row(i), points.row(j)), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// `x + λ (x′ − x)`.
pub fn interpolate(x: &[f64], neighbor: &[f64], lambda: f64) -> Vec<f64> {
    x.iter().zip(neighbor).map(|(a, b)| a + lambda * (b - a)).collect()
}

/// Appends SMOTE points to `data`: each is an interpolation between a random
/// point of its class and one of that point's `k` nearest same-class
/// neighbours. Synthetic rows follow the originals, grouped by class.
pub fn smote_oversample(data: &Dataset, cfg: &SmoteConfig, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let k = cfg.neighbors;
    if k == 0 {
        return Err(Error::Config("SMOTE needs at least one neighbour".into()));
    }
    let counts = cfg.counts.clone().unwrap_or_else(|| balancing_counts(data));
    if counts.len() != data.num_classes() {
        return Err(Error::Config(format!(
            "{} SMOTE counts for {} classes",
            counts.len(),
            data.num_classes()
        )));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (class, &want) in counts.iter().enumerate() {
        if want == 0 {
            continue;
        }
        let x = data.class_matrix(class);
        if x.rows() <= k {
            return Err(Error::Config(format!(
                "SMOTE with k={k} needs more than {k} points in class {class}, found {}",
                x.rows()
            )));
        }
        let neighbors: Vec<Vec<usize>> = (0..x.rows()).map(|i| nearest_neighbors(&x, i, k)).collect();
        for _ in 0..want {
            let i = rng.random_range(0..x.rows());
            let j = neighbors[i][rng.random_range(0..k)];
            let lambda: f64 = rng.random_range(0.0..=1.0);
            rows.extend(interpolate(x.row(i), x.row(j), lambda));
            labels.push(class);
        }
    }
    let extra = Tensor::matrix(labels.len(), data.dim(), rows)?;
    data.append(&extra, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn segment_endpoints() {
        let x = [1.0, 2.0];
        let y = [3.0, -2.0];
        assert_eq!(interpolate(&x, &y, 0.0), x.to_vec());
        assert_eq!(interpolate(&x, &y, 1.0), y.to_vec());
    }

    #[test]
    fn neighbours_by_brute_force() {
        let p = Tensor::from_rows(&[[0.0], [1.0], [3.0], [-0.5]]).unwrap();
        assert_eq!(nearest_neighbors(&p, 0, 2), vec![3, 1]);
    }

    #[test]
    fn balances_counts_and_rejects_small_classes() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64, (i % 4) as f64]).collect();
        let labels: Vec<i64> = (0..20).map(|i| i64::from(i >= 7)).collect();
        let d = Dataset::from_original(Tensor::from_rows(&rows).unwrap(), &labels).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = smote_oversample(&d, &SmoteConfig::default(), &mut rng).unwrap();
        assert_eq!(out.counts(), vec![13, 13]);
        let cfg = SmoteConfig {
            neighbors: 7,
            counts: None,
        };
        assert!(smote_oversample(&d, &cfg, &mut rng).is_err());
    }
}
