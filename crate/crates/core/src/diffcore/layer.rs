use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::graph::{sigmoid, softmax_in_place, Graph, Var};
use crate::diffcore::tensor::{gemm, Tensor};
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Softmax,
}

/// Fully connected layer `act(x · Wᵀ + b)` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.rank() != 2 || bias.rank() != 1 || bias.len() != weight.rows() {
            return shape_err(
                "dense_layer",
                format!("weight {:?} with bias {:?}", weight.shape(), bias.shape()),
            );
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (m, k) = (input.rows(), input.cols());
        if k != self.in_dim() {
            return shape_err("forward", format!("input has {k} columns, layer expects {}", self.in_dim()));
        }
        let n = self.out_dim();
        let mut out = vec![0.0; m * n];
        gemm(input.data(), (m, k), false, self.weight.data(), (n, k), true, &mut out, false);
        for row in out.chunks_mut(n) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
            match self.activation {
                Activation::Identity => {}
                Activation::Relu => row.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Sigmoid => row.iter_mut().for_each(|v| *v = sigmoid(*v)),
                Activation::Softmax => softmax_in_place(row),
            }
        }
        Tensor::matrix(m, n, out)
    }
}

/// Parameter handles of one network bound onto a [`Graph`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    trainable: bool,
}

impl Bound {
    /// Wraps externally created parameter vars, in [`Mlp::params`] order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self {
            vars,
            trainable: true,
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }
}

/// A stack of dense layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return shape_err(
                    "mlp",
                    format!(
                        "layer {i} outputs {} but layer {} expects {}",
                        pair[0].out_dim(),
                        i + 1,
                        pair[1].in_dim()
                    ),
                );
            }
        }
        Ok(Self { layers })
    }

    /// He-normal weights for relu layers, Xavier-normal otherwise; zero biases.
    ///
    /// `dims` lists layer widths from input to output and `activations` has
    /// one entry per layer (`dims.len() - 1`).
    pub fn init(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("an MLP needs at least an input and an output width".into()));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive, got {dims:?}")));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "{} layers but {} activations",
                dims.len() - 1,
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = match act {
                    Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                    _ => (2.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let normal = Normal::new(0.0, std).expect("positive std");
                let data = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
                DenseLayer::new(
                    Tensor::matrix(fan_out, fan_in, data)?,
                    Tensor::zeros(&[fan_out]),
                    act,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    /// Every trainable array exactly once, in `w0, b0, w1, b1, ..` order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Parameter names matching [`Mlp::params`] order.
    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias")])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Untraced forward pass.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut x = self.layers[0].forward(input)?;
        for layer in &self.layers[1..] {
            x = layer.forward(&x)?;
        }
        x.ensure_finite("mlp forward")?;
        Ok(x)
    }

    /// Places the parameters on `g`. Frozen networks are bound as constants,
    /// so no gradient can reach them.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        let vars = self
            .params()
            .into_iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect();
        Bound { vars, trainable }
    }

    /// Traced forward pass using parameters previously bound with [`Mlp::bind`].
    pub fn forward_graph(&self, g: &mut Graph, bound: &Bound, input: Var) -> Result<Var> {
        let in_cols = g.value(input).cols();
        if in_cols != self.in_dim() {
            return shape_err(
                "forward",
                format!("input has {in_cols} columns, network expects {}", self.in_dim()),
            );
        }
        let mut x = input;
        for (layer, pv) in self.layers.iter().zip(bound.vars.chunks(2)) {
            let lin = g.matmul_t(x, pv[0])?;
            let pre = g.add_row(lin, pv[1])?;
            x = match layer.activation {
                Activation::Identity => pre,
                Activation::Relu => g.relu(pre)?,
                Activation::Sigmoid => g.sigmoid(pre)?,
                Activation::Softmax => g.softmax(pre)?,
            };
        }
        Ok(x)
    }
}
