//! Autodiff gradients versus central finite differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::checks::CheckOutcome;
use crate::diffcore::{Activation, Graph, Mlp, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;
/// Denominator floor so that near-zero gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

type Builder = dyn Fn(&mut Graph, &[Var]) -> Result<Var>;

/// Largest relative error between the tape gradient and central differences
/// over every entry of every input.
pub fn max_relative_error(inputs: &[Tensor], build: &Builder, fault: Option<f64>) -> Result<f64> {
    let new_graph = || match fault {
        Some(f) => Graph::with_sigmoid_grad_fault(f),
        None => Graph::new(),
    };
    let mut g = new_graph();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get_or_zeros(v, t))
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        g.value(loss).item()
    };

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let x0 = input.data()[j];
            probe[i].data_mut()[j] = x0 + FD_STEP;
            let up = eval(&probe)?;
            probe[i].data_mut()[j] = x0 - FD_STEP;
            let down = eval(&probe)?;
            probe[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[i].data()[j];
            let denom = a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

/// Values bounded away from `0` so relu stays differentiable at FD scale.
fn away_from_kink(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

fn positive_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(0.1..3.0)).collect();
    Tensor::matrix(rows, cols, data).expect("sized")
}

/// Contracts an arbitrary output against fixed random weights so every
/// output entry contributes to the scalar loss.
fn contract(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights.clone().reshape(g.value(out).shape().to_vec())?);
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

struct Instance {
    inputs: Vec<Tensor>,
    build: Box<Builder>,
}

fn instance(op: &str, rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.random_range(1..5);
    let k = rng.random_range(1..5);
    let n = rng.random_range(1..5);
    let w_mn = random_matrix(rng, m, n);
    let w_mk = random_matrix(rng, m, k);
    let unary = |f: fn(&mut Graph, Var) -> Result<Var>, w: Tensor| -> Box<Builder> {
        Box::new(move |g: &mut Graph, v: &[Var]| {
            let y = f(g, v[0])?;
            contract(g, y, &w)
        })
    };
    match op {
        "matmul" => Instance {
            inputs: vec![random_matrix(rng, m, k), random_matrix(rng, k, n)],
            build: Box::new(move |g, v| {
                let y = g.matmul(v[0], v[1])?;
                contract(g, y, &w_mn)
            }),
        },
        "matmul_t" => Instance {
            inputs: vec![random_matrix(rng, m, k), random_matrix(rng, n, k)],
            build: Box::new(move |g, v| {
                let y = g.matmul_t(v[0], v[1])?;
                contract(g, y, &w_mn)
            }),
        },
        "add" | "sub" | "mul" => {
            let op = op.to_string();
            Instance {
                inputs: vec![random_matrix(rng, m, k), random_matrix(rng, m, k)],
                build: Box::new(move |g, v| {
                    let y = match op.as_str() {
                        "add" => g.add(v[0], v[1])?,
                        "sub" => g.sub(v[0], v[1])?,
                        _ => g.mul(v[0], v[1])?,
                    };
                    contract(g, y, &w_mk)
                }),
            }
        }
        "add_row" => Instance {
            inputs: vec![random_matrix(rng, m, k), Tensor::vector(random_matrix(rng, 1, k).into_data())],
            build: Box::new(move |g, v| {
                let y = g.add_row(v[0], v[1])?;
                contract(g, y, &w_mk)
            }),
        },
        "affine" => {
            let s: f64 = rng.random_range(-2.0..2.0);
            Instance {
                inputs: vec![random_matrix(rng, m, k)],
                build: Box::new(move |g, v| {
                    let y = g.affine(v[0], s, 0.3)?;
                    contract(g, y, &w_mk)
                }),
            }
        }
        "mix_rows" => {
            let rows = std::sync::Arc::new(random_matrix(rng, k, n));
            Instance {
                inputs: vec![random_matrix(rng, m, k)],
                build: Box::new(move |g, v| {
                    let w = g.softmax(v[0])?;
                    let y = g.mix_rows(w, &rows)?;
                    contract(g, y, &w_mn)
                }),
            }
        }
        "relu" => Instance {
            inputs: vec![away_from_kink(rng, m, k)],
            build: unary(Graph::relu, w_mk),
        },
        "sigmoid" => Instance {
            inputs: vec![random_matrix(rng, m, k)],
            build: unary(Graph::sigmoid, w_mk),
        },
        "softmax" => Instance {
            inputs: vec![random_matrix(rng, m, k)],
            build: unary(Graph::softmax, w_mk),
        },
        "log" => Instance {
            inputs: vec![positive_matrix(rng, m, k)],
            build: unary(Graph::log, w_mk),
        },
        "square" => Instance {
            inputs: vec![random_matrix(rng, m, k)],
            build: unary(Graph::square, w_mk),
        },
        "sum" => Instance {
            inputs: vec![random_matrix(rng, m, k)],
            build: Box::new(|g, v| {
                let sq = g.square(v[0])?;
                g.sum(sq)
            }),
        },
        "mean" => Instance {
            inputs: vec![random_matrix(rng, m, k)],
            build: Box::new(|g, v| {
                let sq = g.square(v[0])?;
                g.mean(sq)
            }),
        },
        "row_sum" => {
            let w = random_matrix(rng, m, 1);
            Instance {
                inputs: vec![random_matrix(rng, m, k)],
                build: unary(Graph::row_sum, w),
            }
        }
        "concat_cols" => {
            let w = random_matrix(rng, m, k + n);
            Instance {
                inputs: vec![random_matrix(rng, m, k), random_matrix(rng, m, n)],
                build: Box::new(move |g, v| {
                    let y = g.concat_cols(v[0], v[1])?;
                    contract(g, y, &w)
                }),
            }
        }
        "concat_rows" => {
            let w = random_matrix(rng, m + n, k);
            Instance {
                inputs: vec![random_matrix(rng, m, k), random_matrix(rng, n, k)],
                build: Box::new(move |g, v| {
                    let y = g.concat_rows(&[v[0], v[1]])?;
                    contract(g, y, &w)
                }),
            }
        }
        "select_rows" => {
            let picks: Vec<usize> = (0..n + 2).map(|_| rng.random_range(0..m)).collect();
            let w = random_matrix(rng, picks.len(), k);
            Instance {
                inputs: vec![random_matrix(rng, m, k)],
                build: Box::new(move |g, v| {
                    let y = g.select_rows(v[0], &picks)?;
                    contract(g, y, &w)
                }),
            }
        }
        "mlp3" => {
            let dims = [k + 1, 4, 3, 2];
            let acts = [Activation::Sigmoid, Activation::Softmax, Activation::Sigmoid];
            let mlp = Mlp::init(&dims, &acts, rng.random()).expect("valid dims");
            let mut inputs: Vec<Tensor> = mlp.params().into_iter().cloned().collect();
            inputs.push(random_matrix(rng, m, k + 1));
            let targets = Tensor::matrix(m, 2, (0..2 * m).map(|_| rng.random_range(0.0..1.0)).collect())
                .expect("sized");
            Instance {
                inputs,
                build: Box::new(move |g, v| {
                    let (params, x) = v.split_at(v.len() - 1);
                    let bound = crate::diffcore::layer::Bound::from_vars(params.to_vec());
                    let y = mlp.forward_graph(g, &bound, x[0])?;
                    let t = g.constant(targets.clone());
                    let logy = g.log(y)?;
                    let ce = g.mul(logy, t)?;
                    let d = g.sub(y, t)?;
                    let sq = g.square(d)?;
                    let a = g.mean(ce)?;
                    let b = g.mean(sq)?;
                    g.sub(b, a)
                }),
            }
        }
        other => panic!("no gradient instance for op `{other}`"),
    }
}

/// Every op the losses use, plus a full three-layer network.
pub const OPS: &[&str] = &[
    "matmul", "matmul_t", "add", "sub", "mul", "add_row", "affine", "relu", "sigmoid", "softmax",
    "log", "square", "sum", "mean", "row_sum", "concat_cols", "concat_rows", "select_rows", "mix_rows",
    "mlp3",
];

pub fn run(instances: usize, seed: u64, fault: Option<f64>) -> Vec<CheckOutcome> {
    OPS.iter()
        .enumerate()
        .map(|(i, op)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut worst: f64 = 0.0;
            let mut failure = None;
            for _ in 0..instances {
                let inst = instance(op, &mut rng);
                match max_relative_error(&inst.inputs, inst.build.as_ref(), fault) {
                    Ok(e) => worst = worst.max(e),
                    Err(e) => {
                        failure = Some(e.to_string());
                        break;
                    }
                }
            }
            let name = format!("gradient/{op}");
            match failure {
                Some(msg) => CheckOutcome::error(name, msg),
                None => CheckOutcome::at_most(name, worst, REL_TOLERANCE),
            }
        })
        .collect()
}
