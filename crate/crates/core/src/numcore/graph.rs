//! Tape-based reverse-mode differentiation over [`Array`] values.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and [`Graph::backward`] is a single reverse sweep.
//! Only nodes that (transitively) depend on a parameter leaf take part in
//! the sweep.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Array, Scalar};
use crate::{Error, Result};

/// Layer-norm epsilon, added to the variance inside the square root.
pub const LAYER_NORM_EPS: f64 = 1e-6;

static NEXT_GRAPH_ID: AtomicUsize = AtomicUsize::new(0);

/// Differentiable primitives. Everything the classifier computes is a
/// composition of these.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `a * b`
    MatMul,
    /// `a * b^T`
    MatMulT,
    /// Elementwise sum of equal shapes.
    Add,
    /// `a + 1 * bias` for a `1 x n` bias row.
    AddRow,
    /// Elementwise product of equal shapes.
    Mul,
    Scale(f64),
    ConcatRows,
    ConcatCols,
    SliceRows { start: usize, end: usize },
    SliceCols { start: usize, end: usize },
    SoftmaxRows,
    /// Inputs `[x, gamma, beta]`; per-row normalisation then scale/shift.
    LayerNormRows,
    /// Exact GELU, `x * Phi(x)`.
    Gelu,
    /// Mean over rows, giving `1 x n`.
    MeanRows,
    /// Sum of all entries, giving `1 x 1`.
    Sum,
}

impl Primitive {
    fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::MatMulT => "matmul_t",
            Primitive::Add => "add",
            Primitive::AddRow => "add_row",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::ConcatRows => "concat_rows",
            Primitive::ConcatCols => "concat_cols",
            Primitive::SliceRows { .. } => "select_rows",
            Primitive::SliceCols { .. } => "select_cols",
            Primitive::SoftmaxRows => "softmax_rows",
            Primitive::LayerNormRows => "layer_norm_rows",
            Primitive::Gelu => "gelu",
            Primitive::MeanRows => "mean_rows",
            Primitive::Sum => "sum",
        }
    }
}

fn arity_err(op: &Primitive, want: &str, got: usize) -> Error {
    Error::shape(op.name(), format!("expected {want} inputs, got {got}"))
}

fn same_shape<T: Scalar>(op: &Primitive, a: &Array<T>, b: &Array<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op.name(),
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn unary<'a, T>(op: &Primitive, inputs: &[&'a Array<T>]) -> Result<&'a Array<T>> {
    match inputs {
        [a] => Ok(a),
        _ => Err(arity_err(op, "1", inputs.len())),
    }
}

fn binary<'a, T>(op: &Primitive, inputs: &[&'a Array<T>]) -> Result<(&'a Array<T>, &'a Array<T>)> {
    match inputs {
        [a, b] => Ok((a, b)),
        _ => Err(arity_err(op, "2", inputs.len())),
    }
}

/// Standard normal CDF.
#[inline(always)]
fn normal_cdf<T: Scalar>(x: T) -> T {
    T::of(0.5) * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf_kernel())
}

/// d/dx of `x * Phi(x)`.
#[inline(always)]
fn gelu_slope<T: Scalar>(x: T) -> T {
    let pdf = (-(x * x) * T::of(0.5)).exp_kernel() * T::of(0.398_942_280_401_432_7);
    normal_cdf(x) + x * pdf
}

fn softmax_rows<T: Scalar>(a: &Array<T>) -> Array<T> {
    let mut out = a.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp_kernel();
            total += *x;
        }
        for x in row.iter_mut() {
            *x = *x / total;
        }
    }
    out
}

/// Per-row `(x - mean) / sqrt(var + eps)` and the matching `1 / sqrt(var + eps)`.
fn normalize_rows<T: Scalar>(x: &Array<T>) -> (Array<T>, Vec<T>) {
    let n = T::of(x.cols() as f64);
    let eps = T::of(LAYER_NORM_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = xhat.row_mut(r);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
        inv_std.push(inv);
    }
    (xhat, inv_std)
}

/// Evaluates one primitive on concrete inputs.
pub fn primitive_forward<T: Scalar>(op: &Primitive, inputs: &[&Array<T>]) -> Result<Array<T>> {
    match op {
        Primitive::MatMul => {
            let (a, b) = binary(op, inputs)?;
            a.matmul(b)
        }
        Primitive::MatMulT => {
            let (a, b) = binary(op, inputs)?;
            a.matmul_t(b)
        }
        Primitive::Add => {
            let (a, b) = binary(op, inputs)?;
            same_shape(op, a, b)?;
            Ok(a.zip_map(b, |x, y| x + y))
        }
        Primitive::Mul => {
            let (a, b) = binary(op, inputs)?;
            same_shape(op, a, b)?;
            Ok(a.zip_map(b, |x, y| x * y))
        }
        Primitive::AddRow => {
            let (a, bias) = binary(op, inputs)?;
            if bias.rows() != 1 || bias.cols() != a.cols() {
                return Err(Error::shape(
                    op.name(),
                    format!("{:?} + bias {:?}", a.shape(), bias.shape()),
                ));
            }
            let mut out = a.clone();
            for r in 0..out.rows() {
                for (o, &b) in out.row_mut(r).iter_mut().zip(bias.data()) {
                    *o += b;
                }
            }
            Ok(out)
        }
        Primitive::Scale(s) => {
            let a = unary(op, inputs)?;
            let s = T::of(*s);
            Ok(a.map(|x| x * s))
        }
        Primitive::ConcatRows => {
            let first = inputs.first().ok_or_else(|| arity_err(op, ">= 1", 0))?;
            if let Some(bad) = inputs.iter().find(|a| a.cols() != first.cols()) {
                return Err(Error::shape(
                    op.name(),
                    format!("column counts {} vs {}", first.cols(), bad.cols()),
                ));
            }
            let rows = inputs.iter().map(|a| a.rows()).sum();
            let mut data = Vec::with_capacity(rows * first.cols());
            for a in inputs {
                data.extend_from_slice(a.data());
            }
            Array::from_vec(rows, first.cols(), data)
        }
        Primitive::ConcatCols => {
            let first = inputs.first().ok_or_else(|| arity_err(op, ">= 1", 0))?;
            if let Some(bad) = inputs.iter().find(|a| a.rows() != first.rows()) {
                return Err(Error::shape(
                    op.name(),
                    format!("row counts {} vs {}", first.rows(), bad.rows()),
                ));
            }
            let cols = inputs.iter().map(|a| a.cols()).sum();
            let mut data = Vec::with_capacity(first.rows() * cols);
            for r in 0..first.rows() {
                for a in inputs {
                    data.extend_from_slice(a.row(r));
                }
            }
            Array::from_vec(first.rows(), cols, data)
        }
        Primitive::SliceRows { start, end } => {
            let a = unary(op, inputs)?;
            if start >= end || *end > a.rows() {
                return Err(Error::shape(
                    op.name(),
                    format!("rows {start}..{end} of {:?}", a.shape()),
                ));
            }
            Ok(a.slice_rows(*start, *end))
        }
        Primitive::SliceCols { start, end } => {
            let a = unary(op, inputs)?;
            if start >= end || *end > a.cols() {
                return Err(Error::shape(
                    op.name(),
                    format!("cols {start}..{end} of {:?}", a.shape()),
                ));
            }
            Ok(a.slice_cols(*start, *end))
        }
        Primitive::SoftmaxRows => Ok(softmax_rows(unary(op, inputs)?)),
        Primitive::LayerNormRows => {
            let [x, gamma, beta] = inputs else {
                return Err(arity_err(op, "3", inputs.len()));
            };
            for p in [gamma, beta] {
                if p.rows() != 1 || p.cols() != x.cols() {
                    return Err(Error::shape(
                        op.name(),
                        format!("input {:?} with scale/shift {:?}", x.shape(), p.shape()),
                    ));
                }
            }
            let (mut out, _) = normalize_rows(x);
            for r in 0..out.rows() {
                for ((o, &g), &b) in out.row_mut(r).iter_mut().zip(gamma.data()).zip(beta.data()) {
                    *o = *o * g + b;
                }
            }
            Ok(out)
        }
        Primitive::Gelu => Ok(unary(op, inputs)?.map(|x| x * normal_cdf(x))),
        Primitive::MeanRows => {
            let a = unary(op, inputs)?;
            let mut out = a.sum_rows();
            out.scale_in_place(T::one() / T::of(a.rows() as f64));
            Ok(out)
        }
        Primitive::Sum => Ok(Array::scalar(unary(op, inputs)?.sum())),
    }
}

/// Handle to a node of a specific [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: usize,
    index: usize,
}

struct Node<T> {
    op: Option<Primitive>,
    inputs: Vec<usize>,
    value: Array<T>,
    tracks_grad: bool,
}

/// Computation tape.
pub struct Graph<T> {
    id: usize,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Option<Primitive>, inputs: Vec<usize>, value: Array<T>, tracks: bool) -> Var {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            tracks_grad: tracks,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(Error::Gradient(format!("{v:?} is not a node of this graph")));
        }
        Ok(v.index)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Array<T>) -> Var {
        self.push(None, Vec::new(), value, true)
    }

    /// Leaf without gradient tracking.
    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.push(None, Vec::new(), value, false)
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[self.index(v).expect("var belongs to graph")].value
    }

    pub fn apply(&mut self, op: Primitive, inputs: &[Var]) -> Result<Var> {
        let idx = inputs
            .iter()
            .map(|&v| self.index(v))
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<&Array<T>> = idx.iter().map(|&i| &self.nodes[i].value).collect();
        let out = primitive_forward(&op, &values)?;
        let tracks = idx.iter().any(|&i| self.nodes[i].tracks_grad);
        Ok(self.push(Some(op), idx, out, tracks))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::MatMulT, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.apply(Primitive::AddRow, &[a, bias])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(Primitive::Scale(s), &[a])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Primitive::ConcatRows, parts)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Primitive::ConcatCols, parts)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.apply(Primitive::SliceRows { start, end }, &[a])
    }

    pub fn select_row(&mut self, a: Var, row: usize) -> Result<Var> {
        self.slice_rows(a, row, row + 1)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.apply(Primitive::SliceCols { start, end }, &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::SoftmaxRows, &[a])
    }

    pub fn layer_norm_rows(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        self.apply(Primitive::LayerNormRows, &[x, gamma, beta])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Gelu, &[a])
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::MeanRows, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(Primitive::Sum, &[a])
    }

    /// Reverse sweep from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = self.index(output)?;
        let shape = self.nodes[out].value.shape();
        if shape != [1, 1] {
            return Err(Error::Gradient(format!(
                "backward needs a scalar output, got shape {shape:?}"
            )));
        }
        self.backward_seeded(output, Array::scalar(T::one()))
    }

    /// Reverse sweep with an explicit output adjoint (vector-Jacobian product).
    pub fn backward_seeded(&self, output: Var, seed: Array<T>) -> Result<Gradients<T>> {
        let out = self.index(output)?;
        if seed.shape() != self.nodes[out].value.shape() {
            return Err(Error::Gradient(format!(
                "seed shape {:?} does not match output {:?}",
                seed.shape(),
                self.nodes[out].value.shape()
            )));
        }
        let mut grads: Vec<Option<Array<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[out].tracks_grad {
            grads[out] = Some(seed);
        }
        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if let Some(op) = &node.op {
                self.propagate(op, node, &g, &mut grads)?;
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            graph: self.id,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            grads,
        })
    }

    fn propagate(
        &self,
        op: &Primitive,
        node: &Node<T>,
        g: &Array<T>,
        grads: &mut [Option<Array<T>>],
    ) -> Result<()> {
        let inp = &node.inputs;
        let val = |k: usize| &self.nodes[inp[k]].value;
        let wants = |k: usize| self.nodes[inp[k]].tracks_grad;
        let mut acc = |k: usize, d: Array<T>| accumulate(grads, inp[k], d);
        match op {
            Primitive::MatMul => {
                if wants(0) {
                    acc(0, g.matmul_t(val(1))?);
                }
                if wants(1) {
                    acc(1, val(0).t_matmul(g)?);
                }
            }
            Primitive::MatMulT => {
                if wants(0) {
                    acc(0, g.matmul(val(1))?);
                }
                if wants(1) {
                    acc(1, g.t_matmul(val(0))?);
                }
            }
            Primitive::Add => {
                for k in 0..2 {
                    if wants(k) {
                        acc(k, g.clone());
                    }
                }
            }
            Primitive::AddRow => {
                if wants(0) {
                    acc(0, g.clone());
                }
                if wants(1) {
                    acc(1, g.sum_rows());
                }
            }
            Primitive::Mul => {
                if wants(0) {
                    acc(0, g.zip_map(val(1), |a, b| a * b));
                }
                if wants(1) {
                    acc(1, g.zip_map(val(0), |a, b| a * b));
                }
            }
            Primitive::Scale(s) => {
                let s = T::of(*s);
                acc(0, g.map(|x| x * s));
            }
            Primitive::ConcatRows => {
                let mut start = 0;
                for k in 0..inp.len() {
                    let rows = val(k).rows();
                    if wants(k) {
                        acc(k, g.slice_rows(start, start + rows));
                    }
                    start += rows;
                }
            }
            Primitive::ConcatCols => {
                let mut start = 0;
                for k in 0..inp.len() {
                    let cols = val(k).cols();
                    if wants(k) {
                        acc(k, g.slice_cols(start, start + cols));
                    }
                    start += cols;
                }
            }
            Primitive::SliceRows { start, .. } => {
                let src = val(0);
                let mut d = Array::zeros(src.rows(), src.cols());
                let w = src.cols();
                d.data_mut()[start * w..start * w + g.len()].copy_from_slice(g.data());
                acc(0, d);
            }
            Primitive::SliceCols { start, end } => {
                let src = val(0);
                let mut d = Array::zeros(src.rows(), src.cols());
                for r in 0..src.rows() {
                    d.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
                }
                acc(0, d);
            }
            Primitive::SoftmaxRows => {
                let y = &node.value;
                let mut d = g.clone();
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dot: T = g.row(r).iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for (dx, &yv) in d.row_mut(r).iter_mut().zip(yr) {
                        *dx = yv * (*dx - dot);
                    }
                }
                acc(0, d);
            }
            Primitive::LayerNormRows => {
                let (xhat, inv_std) = normalize_rows(val(0));
                let gamma = val(1);
                if wants(1) {
                    acc(1, g.zip_map(&xhat, |a, b| a * b).sum_rows());
                }
                if wants(2) {
                    acc(2, g.sum_rows());
                }
                if wants(0) {
                    let n = T::of(xhat.cols() as f64);
                    let mut d = Array::zeros(xhat.rows(), xhat.cols());
                    for r in 0..xhat.rows() {
                        let dxhat: Vec<T> = g
                            .row(r)
                            .iter()
                            .zip(gamma.data())
                            .map(|(&a, &b)| a * b)
                            .collect();
                        let mean_d = dxhat.iter().copied().sum::<T>() / n;
                        let mean_dx: T =
                            dxhat.iter().zip(xhat.row(r)).map(|(&a, &b)| a * b).sum::<T>() / n;
                        for ((o, &dh), &xh) in d.row_mut(r).iter_mut().zip(&dxhat).zip(xhat.row(r)) {
                            *o = inv_std[r] * (dh - mean_d - xh * mean_dx);
                        }
                    }
                    acc(0, d);
                }
            }
            Primitive::Gelu => {
                let d = g.zip_map(val(0), |gv, x| gv * gelu_slope(x));
                acc(0, d);
            }
            Primitive::MeanRows => {
                let src = val(0);
                let inv = T::one() / T::of(src.rows() as f64);
                let d = Array::from_fn(src.rows(), src.cols(), |_, c| g.data()[c] * inv);
                acc(0, d);
            }
            Primitive::Sum => {
                let src = val(0);
                acc(0, Array::filled(src.rows(), src.cols(), g.data()[0]));
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Array<T>>], i: usize, d: Array<T>) {
    match &mut grads[i] {
        Some(existing) => existing.add_assign(&d),
        slot => *slot = Some(d),
    }
}

/// Result of a reverse sweep.
pub struct Gradients<T> {
    graph: usize,
    shapes: Vec<[usize; 2]>,
    grads: Vec<Option<Array<T>>>,
}

impl<T: Scalar> Gradients<T> {
    fn index(&self, v: Var) -> Result<usize> {
        if v.graph != self.graph || v.index >= self.grads.len() {
            return Err(Error::Gradient(format!("{v:?} is not a node of this graph")));
        }
        Ok(v.index)
    }

    /// Gradient w.r.t. `v`; zeros when the output does not depend on it.
    pub fn get(&self, v: Var) -> Result<Array<T>> {
        let i = self.index(v)?;
        Ok(self.grads[i].clone().unwrap_or_else(|| {
            let [r, c] = self.shapes[i];
            Array::zeros(r, c)
        }))
    }

    /// Like [`get`](Self::get) but moves the stored gradient out.
    pub fn take(&mut self, v: Var) -> Result<Array<T>> {
        let i = self.index(v)?;
        Ok(self.grads[i].take().unwrap_or_else(|| {
            let [r, c] = self.shapes[i];
            Array::zeros(r, c)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(rows: &[&[f64]]) -> Array<f64> {
        Array::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let out = primitive_forward(&Primitive::SoftmaxRows, &[&arr(&[&[0.0, 0.0]])]).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_matches_scalar_formula() {
        let out = primitive_forward(&Primitive::SoftmaxRows, &[&arr(&[&[1.0, 2.0, 3.0]])]).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        let expected = [1.0f64.exp() / z, 2.0f64.exp() / z, 3.0f64.exp() / z];
        for (got, want) in out.data().iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!((got - want).abs() < 1e-5);
        }
        for (got, want) in out.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn square_has_derivative_six_at_three() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Array::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn constant_inputs_get_zero_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Array::scalar(2.0));
        let c = g.constant(Array::scalar(5.0));
        let y = g.mul(x, c).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(c).unwrap().data(), &[0.0]);
        assert_eq!(grads.get(x).unwrap().data(), &[5.0]);
    }

    #[test]
    fn backward_rejects_vector_output() {
        let mut g = Graph::<f64>::new();
        let x = g.param(arr(&[&[1.0, 2.0]]));
        let y = g.scale(x, 2.0).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Gradient(_))));
    }

    #[test]
    fn foreign_var_is_rejected() {
        let mut g1 = Graph::<f64>::new();
        let mut g2 = Graph::<f64>::new();
        let x = g1.param(Array::scalar(1.0));
        let y = g2.param(Array::scalar(1.0));
        let s = g2.sum(y).unwrap();
        let grads = g2.backward(s).unwrap();
        assert!(grads.get(x).is_err());
        assert!(g2.backward(x).is_err());
    }

    #[test]
    fn sum_of_matmul_gradient_is_row_sums_of_b() {
        // d/dM sum(M B) = 1 * B^T: each row of the gradient holds the row sums of B.
        let mut g = Graph::<f64>::new();
        let m = g.param(arr(&[&[1.0, -2.0], &[0.5, 3.0], &[4.0, 0.0]]));
        let b = g.constant(arr(&[&[1.0, 2.0, 3.0], &[-1.0, 0.5, 2.0]]));
        let p = g.matmul(m, b).unwrap();
        let s = g.sum(p).unwrap();
        let dm = g.backward(s).unwrap().get(m).unwrap();
        for r in 0..3 {
            assert_eq!(dm.row(r), &[6.0, 1.5]);
        }
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.param(arr(&[&[1.0, 2.0]]));
        let a = g.scale(x, 3.0).unwrap();
        let b = g.scale(x, -1.0).unwrap();
        let c = g.add(a, b).unwrap();
        let s = g.sum(c).unwrap();
        assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut g = Graph::<f64>::new();
        let a = g.param(Array::zeros(2, 3));
        let b = g.param(Array::zeros(3, 2));
        let err = g.add(a, b).unwrap_err().to_string();
        assert!(err.contains("add"), "{err}");
        let err = g.softmax_rows(a).and_then(|s| g.concat_cols(&[s, b])).unwrap_err();
        assert!(err.to_string().contains("concat_cols"));
    }
}
