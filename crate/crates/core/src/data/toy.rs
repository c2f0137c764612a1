//! Gaussian-mixture toy datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{subsample_imbalanced, Dataset, ImbalanceSpec};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Spread of one mixture component: a scalar or per-axis standard deviation,
/// or a full covariance matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Spread {
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Covariance(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    pub spread: Spread,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassGeometry {
    pub components: Vec<Component>,
}

/// Per-class mixture geometry; class `k` here is original label `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyGeometry {
    pub classes: Vec<ClassGeometry>,
}

impl ToyGeometry {
    /// Two isotropic unit Gaussians whose means are `separation` apart on the
    /// first axis. Class 0 sits at the origin.
    pub fn two_gaussians(separation: f64) -> Self {
        let class = |x: f64| ClassGeometry {
            components: vec![Component {
                mean: vec![x, 0.0],
                spread: Spread::Isotropic(1.0),
                weight: 1.0,
            }],
        };
        Self {
            classes: vec![class(0.0), class(separation)],
        }
    }

    /// `classes` classes, each a mixture of `per_class` isotropic clusters
    /// with centres drawn uniformly in `[-radius, radius]^dim`.
    pub fn mixture_clusters(classes: usize, per_class: usize, dim: usize, radius: f64, std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = (0..classes)
            .map(|_| ClassGeometry {
                components: (0..per_class)
                    .map(|_| Component {
                        mean: (0..dim).map(|_| rng.random_range(-radius..radius)).collect(),
                        spread: Spread::Isotropic(std),
                        weight: 1.0,
                    })
                    .collect(),
            })
            .collect();
        Self { classes }
    }

    pub fn dim(&self) -> usize {
        self.classes
            .first()
            .and_then(|c| c.components.first())
            .map_or(0, |c| c.mean.len())
    }
}

/// Lower-triangular factor of a component's covariance.
fn cholesky_factor(spread: &Spread, dim: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; dim * dim];
    match spread {
        Spread::Isotropic(s) => {
            if !(*s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("degenerate covariance: std {s}")));
            }
            (0..dim).for_each(|i| l[i * dim + i] = *s);
        }
        Spread::Diagonal(s) => {
            if s.len() != dim || s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::Config(format!("degenerate covariance: std {s:?}")));
            }
            (0..dim).for_each(|i| l[i * dim + i] = s[i]);
        }
        Spread::Covariance(c) => {
            if c.len() != dim || c.iter().any(|r| r.len() != dim) {
                return Err(Error::Config(format!("covariance must be {dim}x{dim}")));
            }
            for i in 0..dim {
                for j in 0..=i {
                    if (c[i][j] - c[j][i]).abs() > 1e-12 {
                        return Err(Error::Config("covariance is not symmetric".into()));
                    }
                    let dot: f64 = (0..j).map(|k| l[i * dim + k] * l[j * dim + k]).sum();
                    if i == j {
                        let d = c[i][i] - dot;
                        if d <= 1e-12 {
                            return Err(Error::Config("degenerate covariance: not positive definite".into()));
                        }
                        l[i * dim + i] = d.sqrt();
                    } else {
                        l[i * dim + j] = (c[i][j] - dot) / l[j * dim + j];
                    }
                }
            }
        }
    }
    Ok(l)
}

/// Samples `spec.counts[k]` points of class `k` from `geometry`.
pub fn make_gaussian_toy(spec: &ImbalanceSpec, geometry: &ToyGeometry) -> Result<Dataset> {
    sample_counts(&spec.counts, geometry, spec.seed)
}

/// Training and test sets from `geometry`: `spec.counts` training points and
/// `spec.test_per_class` test points per class, with a shared class order.
pub fn make_gaussian_toy_split(spec: &ImbalanceSpec, geometry: &ToyGeometry) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let pool = sample_counts(&spec.pool_counts(), geometry, spec.seed)?;
    subsample_imbalanced(&pool, spec)
}

pub(crate) fn sample_counts(counts: &[usize], geometry: &ToyGeometry, seed: u64) -> Result<Dataset> {
    if counts.len() != geometry.classes.len() {
        return Err(Error::Config(format!(
            "{} class counts for {} toy classes",
            counts.len(),
            geometry.classes.len()
        )));
    }
    let dim = geometry.dim();
    if dim == 0 {
        return Err(Error::Config("toy geometry has no dimensions".into()));
    }
    let mut factors = Vec::new();
    for (k, class) in geometry.classes.iter().enumerate() {
        if class.components.is_empty() {
            return Err(Error::Config(format!("toy class {k} has no components")));
        }
        let mut per_class = Vec::new();
        for c in &class.components {
            if c.mean.len() != dim {
                return Err(Error::Config(format!("toy class {k}: mean has wrong dimension")));
            }
            if !(c.weight > 0.0) {
                return Err(Error::Config(format!("toy class {k}: component weight must be positive")));
            }
            per_class.push(cholesky_factor(&c.spread, dim)?);
        }
        factors.push(per_class);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = counts.iter().sum();
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    let mut z = vec![0.0; dim];
    for (k, (&count, class)) in counts.iter().zip(&geometry.classes).enumerate() {
        let weight_sum: f64 = class.components.iter().map(|c| c.weight).sum();
        for _ in 0..count {
            let mut u = rng.random_range(0.0..weight_sum);
            let mut pick = class.components.len() - 1;
            for (i, c) in class.components.iter().enumerate() {
                if u < c.weight {
                    pick = i;
                    break;
                }
                u -= c.weight;
            }
            let comp = &class.components[pick];
            let l = &factors[k][pick];
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for i in 0..dim {
                let offset: f64 = (0..=i).map(|j| l[i * dim + j] * z[j]).sum();
                data.push(comp.mean[i] + offset);
            }
            labels.push(k as i64);
        }
    }
    Dataset::from_original(Tensor::matrix(total, dim, data)?, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(counts: Vec<usize>, seed: u64) -> ImbalanceSpec {
        ImbalanceSpec {
            counts,
            test_per_class: 0,
            seed,
        }
    }

    #[test]
    fn counts_and_imbalance_ratio() {
        let d = make_gaussian_toy(&spec(vec![1000, 30], 1), &ToyGeometry::two_gaussians(3.0)).unwrap();
        assert_eq!(d.counts(), vec![30, 1000]);
        assert_eq!(d.class_labels(), &[1, 0]);
        assert!((d.imbalance_ratio() - 33.333_333_333_333_336).abs() < 1e-12);
        d.validate(true).unwrap();
    }

    #[test]
    fn same_seed_same_features() {
        let g = ToyGeometry::mixture_clusters(3, 2, 4, 5.0, 1.0, 9);
        let a = make_gaussian_toy(&spec(vec![50, 20, 10], 4), &g).unwrap();
        let b = make_gaussian_toy(&spec(vec![50, 20, 10], 4), &g).unwrap();
        assert_eq!(a, b);
        let c = make_gaussian_toy(&spec(vec![50, 20, 10], 5), &g).unwrap();
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn single_component_mean_within_three_sigma() {
        let geom = ToyGeometry {
            classes: vec![ClassGeometry {
                components: vec![Component {
                    mean: vec![2.5, -1.0],
                    spread: Spread::Diagonal(vec![0.5, 2.0]),
                    weight: 1.0,
                }],
            }],
        };
        let n = 4000;
        let d = make_gaussian_toy(&spec(vec![n], 3), &geom).unwrap();
        for (axis, (&mu, &sigma)) in [2.5, -1.0].iter().zip(&[0.5, 2.0]).enumerate() {
            let mean: f64 = (0..n).map(|r| d.features().get(r, axis)).sum::<f64>() / n as f64;
            assert!((mean - mu).abs() < 3.0 * sigma / (n as f64).sqrt(), "axis {axis}: {mean}");
        }
    }

    #[test]
    fn full_covariance_sampled_with_correct_correlation() {
        let geom = ToyGeometry {
            classes: vec![ClassGeometry {
                components: vec![Component {
                    mean: vec![0.0, 0.0],
                    spread: Spread::Covariance(vec![vec![1.0, 0.8], vec![0.8, 1.0]]),
                    weight: 1.0,
                }],
            }],
        };
        let n = 20000;
        let d = make_gaussian_toy(&spec(vec![n], 8), &geom).unwrap();
        let cov: f64 = (0..n).map(|r| d.features().get(r, 0) * d.features().get(r, 1)).sum::<f64>() / n as f64;
        assert!((cov - 0.8).abs() < 0.05, "{cov}");
    }

    #[test]
    fn degenerate_covariance_rejected() {
        let mut geom = ToyGeometry::two_gaussians(1.0);
        geom.classes[0].components[0].spread = Spread::Covariance(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(make_gaussian_toy(&spec(vec![5, 5], 0), &geom).is_err());
        geom.classes[0].components[0].spread = Spread::Isotropic(0.0);
        assert!(make_gaussian_toy(&spec(vec![5, 5], 0), &geom).is_err());
    }

    #[test]
    fn geometry_parses_from_toml_like_json() {
        let g: ToyGeometry = serde_json::from_str(
            r#"{"classes":[{"components":[{"mean":[0,0],"spread":1.0}]},
                          {"components":[{"mean":[1,1],"spread":[0.5,0.5],"weight":2}]}]}"#,
        )
        .unwrap();
        assert_eq!(g.classes[1].components[0].spread, Spread::Diagonal(vec![0.5, 0.5]));
    }
}
