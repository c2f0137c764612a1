//! Conditional generators: the convex generator (cTMU + per-class IGUs) and
//! an unconstrained dense generator used by the baselines.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffcore::{Activation, Bound, Graph, Mlp, Tensor, Var};
use crate::error::{Error, Result};
use crate::gamo::networks::one_hot;

/// Generator whose samples are convex combinations of real minority points.
///
/// The cTMU maps `z ⊕ onehot(i)` to an intermediate vector; `IGU_i` maps that
/// vector to softmax weights over the `n_i` rows of `X_i`; the sample is
/// `weightsᵀ · X_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexGenerator {
    pub ctmu: Mlp,
    pub igus: Vec<Mlp>,
    class_data: Vec<Arc<Tensor>>,
    latent_dim: usize,
    classes: usize,
}

impl ConvexGenerator {
    /// One IGU per minority class of `data` (every class but the last).
    pub fn init(latent_dim: usize, intermediate: usize, hidden: usize, data: &Dataset, seed: u64) -> Result<Self> {
        let classes = data.num_classes();
        if classes < 2 {
            return Err(Error::Config("a convex generator needs at least two classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctmu = Mlp::init(
            &[latent_dim + classes, hidden, intermediate],
            &[Activation::Relu, Activation::Relu],
            rng.random(),
        )?;
        let igus = (0..classes - 1)
            .map(|i| Mlp::init(&[intermediate, data.counts()[i]], &[Activation::Softmax], rng.random()))
            .collect::<Result<Vec<_>>>()?;
        let mut generator = Self {
            ctmu,
            igus,
            class_data: Vec::new(),
            latent_dim,
            classes,
        };
        generator.set_class_data(data)?;
        Ok(generator)
    }

    /// Reassembles a generator from stored networks and class snapshots.
    pub fn from_snapshots(ctmu: Mlp, igus: Vec<Mlp>, class_data: Vec<Tensor>, latent_dim: usize) -> Result<Self> {
        let classes = igus.len() + 1;
        if ctmu.in_dim() != latent_dim + classes || class_data.len() != igus.len() {
            return Err(Error::Config("generator networks do not match their class snapshots".into()));
        }
        for (i, (igu, x)) in igus.iter().zip(&class_data).enumerate() {
            if igu.in_dim() != ctmu.out_dim() || igu.out_dim() != x.rows() {
                return Err(Error::Config(format!("IGU {i} does not fit class snapshot {:?}", x.shape())));
            }
        }
        Ok(Self {
            ctmu,
            igus,
            class_data: class_data.into_iter().map(Arc::new).collect(),
            latent_dim,
            classes,
        })
    }

    /// Replaces the frozen per-class matrices `X_i`, e.g. after the feature
    /// extractor moved. Class sizes must be unchanged.
    pub fn set_class_data(&mut self, data: &Dataset) -> Result<()> {
        if data.num_classes() != self.classes {
            return Err(Error::Config(format!(
                "generator has {} classes, dataset {}",
                self.classes,
                data.num_classes()
            )));
        }
        for (i, igu) in self.igus.iter().enumerate() {
            if igu.out_dim() != data.counts()[i] {
                return Err(Error::Config(format!(
                    "IGU {i} emits {} weights but class {i} has {} points",
                    igu.out_dim(),
                    data.counts()[i]
                )));
            }
        }
        self.class_data = (0..self.classes - 1).map(|i| Arc::new(data.class_matrix(i))).collect();
        Ok(())
    }

    pub fn class_data(&self, class: usize) -> &Tensor {
        &self.class_data[class]
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.class_data.first().map_or(0, |x| x.cols())
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        for &y in labels {
            if y >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: self.classes,
                });
            }
            if y == self.classes - 1 {
                return Err(Error::MajorityClass { class: y });
            }
        }
        Ok(())
    }

    /// Traced generation; returns `(samples, per-class weight vars)`. Rows of
    /// `samples` follow the order of `labels`.
    pub fn forward_graph_with_weights(
        &self,
        g: &mut Graph,
        bound: &[Bound],
        z: Var,
        labels: &[usize],
    ) -> Result<(Var, Vec<(usize, Vec<usize>, Var)>)> {
        self.check_labels(labels)?;
        if g.value(z).cols() != self.latent_dim || g.value(z).rows() != labels.len() {
            return Err(Error::Shape {
                op: "generate",
                detail: format!(
                    "latent batch {:?} for {} labels of dimension {}",
                    g.value(z).shape(),
                    labels.len(),
                    self.latent_dim
                ),
            });
        }
        let cond = g.constant(one_hot(labels, self.classes)?);
        let input = g.concat_cols(z, cond)?;
        let hidden = self.ctmu.forward_graph(g, &bound[0], input)?;

        let mut parts = Vec::new();
        let mut groups = Vec::new();
        let mut position = vec![0; labels.len()];
        let mut offset = 0;
        for class in 0..self.classes - 1 {
            let rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == class).collect();
            if rows.is_empty() {
                continue;
            }
            for (k, &r) in rows.iter().enumerate() {
                position[r] = offset + k;
            }
            offset += rows.len();
            let h = g.select_rows(hidden, &rows)?;
            let w = self.igus[class].forward_graph(g, &bound[class + 1], h)?;
            parts.push(g.mix_rows(w, &self.class_data[class])?);
            groups.push((class, rows, w));
        }
        let stacked = g.concat_rows(&parts)?;
        let out = g.select_rows(stacked, &position)?;
        Ok((out, groups))
    }

    /// Convex weights and the generated point for one latent vector.
    pub fn generate_with_weights(&self, z: &[f64], class: usize) -> Result<(Tensor, Tensor)> {
        if z.len() != self.latent_dim {
            return Err(Error::Shape {
                op: "generate",
                detail: format!("latent vector has {} entries, expected {}", z.len(), self.latent_dim),
            });
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let zv = g.constant(Tensor::matrix(1, z.len(), z.to_vec())?);
        let (out, groups) = self.forward_graph_with_weights(&mut g, &bound, zv, &[class])?;
        let w = g.value(groups[0].2).clone().reshape(vec![self.class_data[class].rows()])?;
        Ok((g.value(out).clone(), w))
    }

    /// `Σ_j w_j x_j` with `w = softmax(IGU_i(cTMU(z ⊕ onehot(i))))`.
    pub fn generate(&self, z: &[f64], class: usize) -> Result<Tensor> {
        Ok(self.generate_with_weights(z, class)?.0)
    }

    fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Bound> {
        std::iter::once(&self.ctmu)
            .chain(&self.igus)
            .map(|net| net.bind(g, trainable))
            .collect()
    }
}

/// Dense conditional generator `z ⊕ onehot(i) → feature space`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnconstrainedGenerator {
    pub net: Mlp,
    pub latent_dim: usize,
    pub classes: usize,
}

impl UnconstrainedGenerator {
    pub fn init(latent_dim: usize, classes: usize, hidden: usize, output: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            net: Mlp::init(
                &[latent_dim + classes, hidden, hidden, output],
                &[Activation::Relu, Activation::Relu, Activation::Identity],
                seed,
            )?,
            latent_dim,
            classes,
        })
    }

    /// Hidden width whose parameter count is closest to `target`.
    pub fn matched_width(latent_dim: usize, classes: usize, output: usize, target: usize) -> usize {
        // params(h) = h² + h (l + c + D + 2) + D
        let b = (latent_dim + classes + output + 2) as f64;
        let rest = target as f64 - output as f64;
        let h = ((b * b + 4.0 * rest.max(0.0)).sqrt() - b) / 2.0;
        let count = |h: usize| h * h + h * (latent_dim + classes + output + 2) + output;
        let lo = (h.floor() as usize).max(1);
        if count(lo + 1).abs_diff(target) < count(lo).abs_diff(target) {
            lo + 1
        } else {
            lo
        }
    }

    pub fn forward_graph(&self, g: &mut Graph, bound: &Bound, z: Var, labels: &[usize]) -> Result<Var> {
        if let Some(&y) = labels.iter().find(|&&y| y + 1 >= self.classes) {
            return Err(if y + 1 == self.classes {
                Error::MajorityClass { class: y }
            } else {
                Error::LabelOutOfRange {
                    label: y,
                    classes: self.classes,
                }
            });
        }
        let cond = g.constant(one_hot(labels, self.classes)?);
        let input = g.concat_cols(z, cond)?;
        self.net.forward_graph(g, bound, input)
    }
}

/// Either generator, behind one interface for the trainer.
#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorNet {
    Convex(ConvexGenerator),
    Unconstrained(UnconstrainedGenerator),
}

impl GeneratorNet {
    pub fn latent_dim(&self) -> usize {
        match self {
            Self::Convex(c) => c.latent_dim,
            Self::Unconstrained(u) => u.latent_dim,
        }
    }

    pub fn nets(&self) -> Vec<&Mlp> {
        match self {
            Self::Convex(c) => std::iter::once(&c.ctmu).chain(&c.igus).collect(),
            Self::Unconstrained(u) => vec![&u.net],
        }
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        match self {
            Self::Convex(c) => std::iter::once(&mut c.ctmu).chain(c.igus.iter_mut()).collect(),
            Self::Unconstrained(u) => vec![&mut u.net],
        }
    }

    /// Names matching [`GeneratorNet::nets`].
    pub fn net_names(&self) -> Vec<String> {
        match self {
            Self::Convex(c) => std::iter::once("ctmu".to_string())
                .chain((0..c.igus.len()).map(|i| format!("igu{i}")))
                .collect(),
            Self::Unconstrained(_) => vec!["cg".to_string()],
        }
    }

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Bound> {
        self.nets().into_iter().map(|n| n.bind(g, trainable)).collect()
    }

    pub fn forward_graph(&self, g: &mut Graph, bound: &[Bound], z: Var, labels: &[usize]) -> Result<Var> {
        match self {
            Self::Convex(c) => Ok(c.forward_graph_with_weights(g, bound, z, labels)?.0),
            Self::Unconstrained(u) => u.forward_graph(g, &bound[0], z, labels),
        }
    }

    /// Untraced generation for a latent batch.
    pub fn sample(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let zv = g.constant(z.clone());
        let out = self.forward_graph(&mut g, &bound, zv, labels)?;
        Ok(g.value(out).clone())
    }

    pub fn refresh_class_data(&mut self, data: &Dataset) -> Result<()> {
        match self {
            Self::Convex(c) => c.set_class_data(data),
            Self::Unconstrained(_) => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::DenseLayer;
    use rand_distr::StandardNormal;

    fn toy() -> Dataset {
        let rows: Vec<[f64; 2]> = (0..9).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        let labels = [0, 0, 0, 1, 1, 1, 1, 2, 2];
        // sizes: label 0 → 3, label 2 → 2, label 1 → 4
        Dataset::from_original(Tensor::from_rows(&rows).unwrap(), &labels).unwrap()
    }

    fn forced_igu(weights_logits: Vec<f64>, intermediate: usize) -> Mlp {
        let n = weights_logits.len();
        Mlp::from_layers(vec![DenseLayer::new(
            Tensor::zeros(&[n, intermediate]),
            Tensor::vector(weights_logits),
            Activation::Softmax,
        )
        .unwrap()])
        .unwrap()
    }

    #[test]
    fn igu_sizes_follow_minority_counts() {
        let d = toy();
        let g = ConvexGenerator::init(4, 5, 8, &d, 0).unwrap();
        assert_eq!(g.igus.len(), 2);
        assert_eq!(g.igus[0].out_dim(), 2);
        assert_eq!(g.igus[1].out_dim(), 3);
    }

    #[test]
    fn vertex_weight_reproduces_a_point() {
        let d = toy();
        let mut g = ConvexGenerator::init(4, 5, 8, &d, 0).unwrap();
        g.igus[1] = forced_igu(vec![-1e3, 0.0, -1e3], 5);
        let out = g.generate(&[0.3, -0.2, 1.0, 0.0], 1).unwrap();
        assert_eq!(out.data(), d.class_matrix(1).row(1));
    }

    #[test]
    fn uniform_weights_give_centroid() {
        let d = toy();
        let mut g = ConvexGenerator::init(4, 5, 8, &d, 0).unwrap();
        g.igus[1] = forced_igu(vec![0.0; 3], 5);
        let out = g.generate(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        let x = d.class_matrix(1);
        for col in 0..2 {
            let centroid = (0..3).map(|r| x.get(r, col)).sum::<f64>() / 3.0;
            assert!((out.data()[col] - centroid).abs() < 1e-12);
        }
    }

    #[test]
    fn random_samples_reconstruct_from_simplex_weights() {
        let d = toy();
        let g = ConvexGenerator::init(4, 5, 8, &d, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let z: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let class = rng.random_range(0..2);
            let (out, w) = g.generate_with_weights(&z, class).unwrap();
            assert!(w.data().iter().all(|&v| v >= 0.0));
            assert!((w.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let x = d.class_matrix(class);
            for col in 0..2 {
                let rec: f64 = (0..x.rows()).map(|r| w.data()[r] * x.get(r, col)).sum();
                assert!((rec - out.data()[col]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn majority_class_and_bad_latent_rejected() {
        let d = toy();
        let g = ConvexGenerator::init(4, 5, 8, &d, 0).unwrap();
        assert!(matches!(g.generate(&[0.0; 4], 2), Err(Error::MajorityClass { class: 2 })));
        assert!(g.generate(&[0.0; 3], 0).is_err());
    }

    #[test]
    fn batch_rows_follow_label_order() {
        let d = toy();
        let g = ConvexGenerator::init(4, 5, 8, &d, 0).unwrap();
        let net = GeneratorNet::Convex(g.clone());
        let z = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        let batch = net.sample(&z, &[1, 0, 1]).unwrap();
        for (r, &class) in [1usize, 0, 1].iter().enumerate() {
            let single = g.generate(z.row(r), class).unwrap();
            assert!(single.max_abs_diff(&Tensor::vector(batch.row(r).to_vec()).reshape(vec![1, 2]).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn matched_width_hits_target_closely() {
        for target in [5_000usize, 20_000, 150_000] {
            let h = UnconstrainedGenerator::matched_width(32, 10, 20, target);
            let g = UnconstrainedGenerator::init(32, 10, h, 20, 0).unwrap();
            let rel = (g.net.param_count() as f64 - target as f64).abs() / target as f64;
            assert!(rel < 0.10, "target {target}: width {h} gives {}", g.net.param_count());
        }
    }
}
