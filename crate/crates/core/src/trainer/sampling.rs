use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Labels for generated batches: class `i < c−1` with probability
/// proportional to `P_c − P_i`; the majority class is never drawn.
pub fn assign_fake_labels(priors: &[f64], count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let c = priors.len();
    if c < 2 {
        return Err(Error::Config("at least two classes are required".into()));
    }
    let majority = priors[c - 1];
    let weights: Vec<f64> = priors[..c - 1].iter().map(|&p| (majority - p).max(0.0)).collect();
    if weights.iter().all(|&w| w <= 0.0) {
        return Err(Error::NothingToOversample);
    }
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Distribution(e.to_string()))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Labels drawn uniformly over the `c − 1` minority classes.
pub fn assign_uniform_labels(classes: usize, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if classes < 2 {
        return Err(Error::Config("at least two classes are required".into()));
    }
    Ok((0..count).map(|_| rng.random_range(0..classes - 1)).collect())
}

/// `rows × dim` standard-normal latent batch.
pub fn latent_batch(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, dim, data).expect("sized")
}

/// `count` row indices drawn uniformly with replacement from `0..n`.
pub fn batch_indices(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

/// Empirical frequency of each label in `0..classes`.
pub fn frequencies(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &y in labels {
        counts[y] += 1;
    }
    counts
        .into_iter()
        .map(|k| k as f64 / labels.len().max(1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn fake_labels_follow_prior_gaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels = assign_fake_labels(&[0.2, 0.3, 0.5], 100_000, &mut rng).unwrap();
        let f = frequencies(&labels, 3);
        assert!((f[0] - 0.6).abs() < 0.02 && (f[1] - 0.4).abs() < 0.02);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn two_classes_only_draw_the_minority() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(assign_fake_labels(&[0.1, 0.9], 50, &mut rng).unwrap().iter().all(|&y| y == 0));
        assert!(assign_uniform_labels(2, 50, &mut rng).unwrap().iter().all(|&y| y == 0));
    }

    #[test]
    fn balanced_priors_have_nothing_to_oversample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            assign_fake_labels(&[0.5, 0.5], 10, &mut rng),
            Err(Error::NothingToOversample)
        ));
    }

    #[test]
    fn uniform_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = frequencies(&assign_uniform_labels(3, 100_000, &mut rng).unwrap(), 3);
        assert!((f[0] - 0.5).abs() < 0.02 && (f[1] - 0.5).abs() < 0.02);
        assert!(assign_uniform_labels(3, 0, &mut rng).unwrap().is_empty());
    }
}
