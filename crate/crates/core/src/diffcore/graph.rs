//! Define-by-run gradient tape.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles. Leaves
//! are either parameters (traced, they receive gradients) or constants (never
//! receive gradients). [`Graph::backward`] consumes the tape and returns the
//! gradient of a scalar loss with respect to every traced node.

use std::sync::Arc;

use crate::diffcore::tensor::{gemm, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { a: Var, row: Var },
    Affine { a: Var, scale: f64 },
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Log { a: Var, floor: f64 },
    Square(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    SelectRows { a: Var, rows: Vec<usize> },
    MixRows { weights: Var, rows: Arc<Tensor> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    traced: bool,
}

/// Floor applied inside [`Graph::log`] so that `log(0)` stays finite.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    sigmoid_grad_fault: Option<f64>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, or zeros shaped like `like` if nothing flowed there.
    pub fn get_or_zeros(&self, var: Var, like: &Tensor) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Test hook: multiplies every sigmoid backward contribution by `factor`,
    /// producing deliberately wrong gradients for negative-control checks.
    #[doc(hidden)]
    pub fn with_sigmoid_grad_fault(factor: f64) -> Self {
        Self {
            nodes: Vec::new(),
            sigmoid_grad_fault: Some(factor),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A traced leaf: receives a gradient on backward.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An untraced leaf: never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn is_traced(&self, var: Var) -> bool {
        self.nodes[var.0].traced
    }

    fn push(&mut self, value: Tensor, op: Op, traced: bool) -> Var {
        self.nodes.push(Node { value, op, traced });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        value.ensure_finite(name)?;
        let traced = inputs.iter().any(|v| self.nodes[v.0].traced);
        Ok(self.push(value, op, traced))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    /// `a · b`, or `a · bᵀ` when `trans_b` is set.
    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (br, bc) = self.dims(b);
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return shape_err("matmul", format!("{m}x{k} times {kb}x{n} (trans_b={trans_b})"));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            self.value(a).data(),
            (m, k),
            false,
            self.value(b).data(),
            (br, bc),
            trans_b,
            &mut out,
            false,
        );
        let value = Tensor::matrix(m, n, out)?;
        self.record("matmul", value, Op::MatMul { a, b, trans_b }, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`; used by dense layers whose weights are stored `out × in`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return shape_err(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            );
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        self.record("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        self.record("sub", v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        self.record("mul", v, Op::Mul(a, b), &[a, b])
    }

    /// Adds a length-`cols` vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let r = self.value(row);
        if r.len() != n {
            return shape_err("add_row", format!("{m}x{n} plus row of {}", r.len()));
        }
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(n.max(1)) {
            for (x, b) in chunk.iter_mut().zip(r.data()) {
                *x += b;
            }
        }
        let v = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.record("add_row", v, Op::AddRow { a, row }, &[a, row])
    }

    /// `scale · a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let v = self.value(a).map(|x| scale * x + shift);
        self.record("affine", v, Op::Affine { a, scale }, &[a])
    }

    /// `1 − a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.affine(a, -1.0, 1.0)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.record("relu", v, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        self.record("sigmoid", v, Op::Sigmoid(a), &[a])
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let cols = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            softmax_in_place(row);
        }
        let v = Tensor::new(t.shape().to_vec(), data)?;
        self.record("softmax", v, Op::Softmax(a), &[a])
    }

    /// `ln(max(a, LOG_FLOOR))`, elementwise.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let floor = LOG_FLOOR;
        let v = self.value(a).map(|x| x.max(floor).ln());
        self.record("log", v, Op::Log { a, floor }, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x * x);
        self.record("square", v, Op::Square(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.record("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return shape_err("mean", "empty tensor");
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.record("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Sums each row of a matrix into an `rows × 1` column.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        let data = (0..m).map(|r| t.data()[r * n..(r + 1) * n].iter().sum()).collect();
        let v = Tensor::matrix(m, 1, data)?;
        self.record("row_sum", v, Op::RowSum(a), &[a])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, na) = self.dims(a);
        let (mb, nb) = self.dims(b);
        if ma != mb {
            return shape_err("concat_cols", format!("{ma} rows vs {mb} rows"));
        }
        let mut data = Vec::with_capacity(ma * (na + nb));
        for r in 0..ma {
            data.extend_from_slice(self.value(a).row(r));
            data.extend_from_slice(self.value(b).row(r));
        }
        let v = Tensor::matrix(ma, na + nb, data)?;
        self.record("concat_cols", v, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_rows", "no inputs");
        };
        let n = self.dims(first).1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (m, c) = self.dims(p);
            if c != n {
                return shape_err("concat_rows", format!("{c} cols vs {n} cols"));
            }
            rows += m;
            data.extend_from_slice(self.value(p).data());
        }
        let v = Tensor::matrix(rows, n, data)?;
        self.record("concat_rows", v, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Gathers rows of `a` (repeats allowed).
    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let v = self.value(a).select_rows(rows)?;
        self.record(
            "select_rows",
            v,
            Op::SelectRows {
                a,
                rows: rows.to_vec(),
            },
            &[a],
        )
    }

    /// `weights · rows` against a shared constant matrix (no copy onto the tape).
    /// Row `r` of the result is the `weights[r]`-combination of the rows of `rows`.
    pub fn mix_rows(&mut self, weights: Var, rows: &Arc<Tensor>) -> Result<Var> {
        let (m, k) = self.dims(weights);
        let (kr, n) = (rows.rows(), rows.cols());
        if k != kr {
            return shape_err("mix_rows", format!("{m}x{k} weights over {kr} rows"));
        }
        let mut out = vec![0.0; m * n];
        gemm(self.value(weights).data(), (m, k), false, rows.data(), (kr, n), false, &mut out, false);
        let v = Tensor::matrix(m, n, out)?;
        self.record(
            "mix_rows",
            v,
            Op::MixRows {
                weights,
                rows: Arc::clone(rows),
            },
            &[weights],
        )
    }

    /// Reverse sweep from a scalar, traced `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Backward("unknown node".into()))?;
        if node.value.len() != 1 {
            return Err(Error::Backward(format!(
                "loss has shape {:?}, expected a scalar",
                node.value.shape()
            )));
        }
        if !node.traced {
            return Err(Error::Backward("loss does not depend on any parameter".into()));
        }

        let fault = self.sigmoid_grad_fault.unwrap_or(1.0);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = node.value.data();
            let send = |v: Var, g: Vec<f64>, grads: &mut Vec<Option<Vec<f64>>>| {
                if !self.nodes[v.0].traced {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul { a, b, trans_b } => {
                    let (m, k) = self.dims(*a);
                    let (br, bc) = self.dims(*b);
                    let n = if *trans_b { br } else { bc };
                    if self.nodes[a.0].traced {
                        // da = dy · bᵀ  (or dy · b when b was transposed)
                        let mut da = vec![0.0; m * k];
                        gemm(&dy, (m, n), false, self.value(*b).data(), (br, bc), !*trans_b, &mut da, false);
                        send(*a, da, &mut grads);
                    }
                    if self.nodes[b.0].traced {
                        let mut db = vec![0.0; br * bc];
                        if *trans_b {
                            // y = a·bᵀ ⇒ db = dyᵀ · a
                            gemm(&dy, (m, n), true, self.value(*a).data(), (m, k), false, &mut db, false);
                        } else {
                            gemm(self.value(*a).data(), (m, k), true, &dy, (m, n), false, &mut db, false);
                        }
                        send(*b, db, &mut grads);
                    }
                }
                Op::Add(a, b) => {
                    send(*a, dy.clone(), &mut grads);
                    send(*b, dy.clone(), &mut grads);
                }
                Op::Sub(a, b) => {
                    send(*b, dy.iter().map(|g| -g).collect(), &mut grads);
                    send(*a, dy.clone(), &mut grads);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    send(*a, dy.iter().zip(vb).map(|(g, x)| g * x).collect(), &mut grads);
                    send(*b, dy.iter().zip(va).map(|(g, x)| g * x).collect(), &mut grads);
                }
                Op::AddRow { a, row } => {
                    let n = self.value(*row).len();
                    let mut dr = vec![0.0; n];
                    for chunk in dy.chunks(n.max(1)) {
                        dr.iter_mut().zip(chunk).for_each(|(d, g)| *d += g);
                    }
                    send(*row, dr, &mut grads);
                    send(*a, dy.clone(), &mut grads);
                }
                Op::Affine { a, scale } => {
                    send(*a, dy.iter().map(|g| g * scale).collect(), &mut grads);
                }
                Op::Relu(a) => {
                    let x = self.value(*a).data();
                    let g = dy.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect();
                    send(*a, g, &mut grads);
                }
                Op::Sigmoid(a) => {
                    let g = dy
                        .iter()
                        .zip(y)
                        .map(|(g, s)| g * s * (1.0 - s) * fault)
                        .collect();
                    send(*a, g, &mut grads);
                }
                Op::Softmax(a) => {
                    let cols = node.value.cols().max(1);
                    let mut g = vec![0.0; y.len()];
                    for ((gr, yr), dr) in g.chunks_mut(cols).zip(y.chunks(cols)).zip(dy.chunks(cols)) {
                        let dot: f64 = yr.iter().zip(dr).map(|(s, d)| s * d).sum();
                        for ((o, s), d) in gr.iter_mut().zip(yr).zip(dr) {
                            *o = s * (d - dot);
                        }
                    }
                    send(*a, g, &mut grads);
                }
                Op::Log { a, floor } => {
                    let x = self.value(*a).data();
                    let g = dy
                        .iter()
                        .zip(x)
                        .map(|(g, &x)| if x > *floor { g / x } else { 0.0 })
                        .collect();
                    send(*a, g, &mut grads);
                }
                Op::Square(a) => {
                    let x = self.value(*a).data();
                    send(*a, dy.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect(), &mut grads);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    send(*a, vec![dy[0]; n], &mut grads);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    send(*a, vec![dy[0] / n as f64; n], &mut grads);
                }
                Op::RowSum(a) => {
                    let n = self.value(*a).cols();
                    let g = dy.iter().flat_map(|&d| std::iter::repeat_n(d, n)).collect();
                    send(*a, g, &mut grads);
                }
                Op::ConcatCols(a, b) => {
                    let (m, na) = self.dims(*a);
                    let nb = self.dims(*b).1;
                    let mut ga = Vec::with_capacity(m * na);
                    let mut gb = Vec::with_capacity(m * nb);
                    for row in dy.chunks((na + nb).max(1)) {
                        ga.extend_from_slice(&row[..na]);
                        gb.extend_from_slice(&row[na..]);
                    }
                    send(*a, ga, &mut grads);
                    send(*b, gb, &mut grads);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        send(p, dy[offset..offset + n].to_vec(), &mut grads);
                        offset += n;
                    }
                }
                Op::MixRows { weights, rows } => {
                    let (m, k) = self.dims(*weights);
                    let n = rows.cols();
                    let mut dw = vec![0.0; m * k];
                    gemm(&dy, (m, n), false, rows.data(), (k, n), true, &mut dw, false);
                    send(*weights, dw, &mut grads);
                }
                Op::SelectRows { a, rows } => {
                    let src = self.value(*a);
                    let cols = src.cols();
                    let mut g = vec![0.0; src.len()];
                    for (r, &from) in rows.iter().enumerate() {
                        let dst = &mut g[from * cols..(from + 1) * cols];
                        dst.iter_mut()
                            .zip(&dy[r * cols..(r + 1) * cols])
                            .for_each(|(d, s)| *d += s);
                    }
                    send(*a, g, &mut grads);
                }
            }
            grads[idx] = Some(dy);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.map(|data| Tensor::new(node.value.shape().to_vec(), data).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
