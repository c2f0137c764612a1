use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, Bound, Graph, Mlp, Tensor, Var};
use crate::error::{Error, Result};

/// `rows × classes` one-hot matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::LabelOutOfRange { label: y, classes });
        }
        data[r * classes + y] = 1.0;
    }
    Tensor::matrix(labels.len(), classes, data)
}

/// Row-wise argmax; ties resolve to the smaller index.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Multi-output classifier `M`: one independent sigmoid line per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub net: Mlp,
}

impl Classifier {
    /// `[input, hidden.., classes]` with relu hidden layers and sigmoid outputs.
    pub fn init(input: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Sigmoid);
        Ok(Self {
            net: Mlp::init(&dims, &acts, seed)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.net.out_dim()
    }

    pub fn outputs(&self, features: &Tensor) -> Result<Tensor> {
        self.net.forward(features)
    }

    pub fn predict(&self, features: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.outputs(features)?))
    }
}

/// Class-conditional real/fake discriminator `D(x | i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub net: Mlp,
    pub classes: usize,
}

impl Discriminator {
    /// `[input + classes, hidden.., 1]` with relu hidden layers and a sigmoid output.
    pub fn init(input: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![input + classes];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut acts = vec![Activation::Relu; hidden.len()];
        acts.push(Activation::Sigmoid);
        Ok(Self {
            net: Mlp::init(&dims, &acts, seed)?,
            classes,
        })
    }

    pub fn forward_graph(&self, g: &mut Graph, bound: &Bound, x: Var, labels: &[usize]) -> Result<Var> {
        let cond = g.constant(one_hot(labels, self.classes)?);
        let input = g.concat_cols(x, cond)?;
        self.net.forward_graph(g, bound, input)
    }

    pub fn forward(&self, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.net.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = self.forward_graph(&mut g, &bound, xv, labels)?;
        Ok(g.value(out).clone())
    }
}

/// Feature extractor `F`: identity for flattened inputs, or a dense network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureExtractor {
    Identity,
    Dense(Mlp),
}

impl FeatureExtractor {
    /// `[input, hidden, output]` with a relu hidden layer and linear output.
    pub fn dense(input: usize, hidden: usize, output: usize, seed: u64) -> Result<Self> {
        Ok(Self::Dense(Mlp::init(
            &[input, hidden, output],
            &[Activation::Relu, Activation::Identity],
            seed,
        )?))
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self, Self::Dense(_))
    }

    pub fn output_dim(&self, input: usize) -> usize {
        match self {
            Self::Identity => input,
            Self::Dense(net) => net.out_dim(),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Self::Identity => Ok(x.clone()),
            Self::Dense(net) => net.forward(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::DenseLayer;

    #[test]
    fn prediction_is_argmax_with_low_index_ties() {
        let t = Tensor::from_rows(&[[0.9, 0.1], [0.5, 0.5], [0.2, 0.7], [0.3, 0.3]]).unwrap();
        assert_eq!(argmax_rows(&t), vec![0, 0, 1, 0]);
    }

    #[test]
    fn classifier_outputs_lie_in_unit_interval() {
        let m = Classifier::init(3, &[8], 4, 1).unwrap();
        let x = Tensor::matrix(5, 3, (0..15).map(|i| i as f64 - 7.0).collect()).unwrap();
        let out = m.outputs(&x).unwrap();
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(m.predict(&x).unwrap().iter().all(|&p| p < 4));
    }

    #[test]
    fn fixed_outputs_predict_expected_class() {
        // zero weights, bias (logit 0.9, logit 0.1): every point → class 0
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let layer = DenseLayer::new(
            Tensor::zeros(&[2, 2]),
            Tensor::vector(vec![logit(0.9), logit(0.1)]),
            Activation::Sigmoid,
        )
        .unwrap();
        let m = Classifier {
            net: Mlp::from_layers(vec![layer]).unwrap(),
        };
        assert_eq!(m.predict(&Tensor::zeros(&[3, 2])).unwrap(), vec![0, 0, 0]);
        let tie = DenseLayer::new(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2]), Activation::Sigmoid).unwrap();
        let m = Classifier {
            net: Mlp::from_layers(vec![tie]).unwrap(),
        };
        assert_eq!(m.predict(&Tensor::zeros(&[1, 2])).unwrap(), vec![0]);
    }

    #[test]
    fn discriminator_output_in_unit_interval() {
        let d = Discriminator::init(2, &[6], 3, 2).unwrap();
        let x = Tensor::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        let out = d.forward(&x, &[0, 2]).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(d.forward(&x, &[0, 3]).is_err());
    }

    #[test]
    fn identity_extractor_passes_through() {
        let x = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(FeatureExtractor::Identity.apply(&x).unwrap(), x);
        assert!(!FeatureExtractor::Identity.is_trainable());
    }
}
