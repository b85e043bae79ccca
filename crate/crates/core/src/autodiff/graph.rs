use std::collections::HashMap;

use rustfft::num_complex::Complex64;

use super::param::{ParamId, Parameter};
use super::{conv, norm, spectral};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<f64>,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

pub(crate) enum Op {
    Constant,
    Input,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Abs(Var),
    Sqrt(Var),
    Square(Var),
    /// Keeps the normal CDF of each input so backward skips the second erf.
    Gelu { x: Var, cdf: Vec<f64> },
    LogClamp { x: Var, floor: f64 },
    SignedPow { x: Var, alpha: f64, grad_floor: f64 },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Transpose12 { x: Var, dims: [usize; 3] },
    Concat { inputs: Vec<Var>, axis: usize },
    PadLast { x: Var, right: usize },
    SliceLast { x: Var, start: usize },
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Linear { x: Var, w: Var, b: Option<Var>, rows: usize, fan_in: usize, fan_out: usize },
    AddChannelBias { x: Var, bias: Var },
    GatherRows { table: Var, ids: Vec<usize> },
    Conv1d(conv::Conv1dSaved),
    ConvTranspose1d(conv::ConvTranspose1dSaved),
    LayerNorm(norm::LayerNormSaved),
    Grn(norm::GrnSaved),
    AvgPool2d { x: Var, kh: usize, kw: usize },
    Imdct { x: Var, hop: usize },
    StftMag { x: Var, fft_length: usize, hop: usize, spectrum: Vec<Complex64> },
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    params: HashMap<ParamId, Vec<f64>>,
    inputs: HashMap<usize, Vec<f64>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.get(&id).map(Vec::as_slice)
    }

    /// Gradient of an [`Graph::input`] leaf.
    pub fn input(&self, v: Var) -> Option<&[f64]> {
        self.inputs.get(&v.0).map(Vec::as_slice)
    }
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// vector is already a topological order for the backward sweep.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_data(op: &'static str, shape: &[usize], data: &[f64]) -> Result<()> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(op, format!("zero-sized dimension in {shape:?}")));
        }
        if numel(shape) != data.len() {
            return Err(Error::shape(
                op,
                format!("shape {shape:?} needs {} values, got {}", numel(shape), data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("{op} data"),
            });
        }
        Ok(())
    }

    /// Untracked leaf.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        Self::check_data("constant", shape, &data)?;
        Ok(self.push(shape.to_vec(), data, Op::Constant, false))
    }

    /// Tracked leaf whose gradient is reported through [`Gradients::input`].
    pub fn input(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        Self::check_data("input", shape, &data)?;
        Ok(self.push(shape.to_vec(), data, Op::Input, true))
    }

    /// Tracked leaf bound to a trainable parameter.
    pub fn param(&mut self, p: &Parameter) -> Var {
        self.push(p.shape().to_vec(), p.value().to_vec(), Op::Param(p.id()), true)
    }

    /// Same value, no gradient flow (stop-gradient).
    pub fn detach(&mut self, x: Var) -> Var {
        let n = &self.nodes[x.0];
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.push(shape, value, Op::Constant, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, mk: fn(Var, Var) -> Op) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let value: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(self.shape(a).to_vec(), value, mk(a, b), rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value: Vec<f64> = self.value(x).iter().map(|&v| f(v)).collect();
        let rg = self.requires_grad(x);
        self.push(self.shape(x).to_vec(), value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        if self.value(x).iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("sqrt of negative value".into()));
        }
        Ok(self.unary(x, f64::sqrt, Op::Sqrt(x)))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let cdf: Vec<f64> = self.value(x).iter().map(|&v| normal_cdf(v)).collect();
        let value = self.value(x).iter().zip(&cdf).map(|(v, c)| v * c).collect();
        let rg = self.requires_grad(x);
        self.push(self.shape(x).to_vec(), value, Op::Gelu { x, cdf }, rg)
    }

    /// `ln(max(x, floor))`.
    pub fn log_clamp(&mut self, x: Var, floor: f64) -> Var {
        self.unary(x, |v| v.max(floor).ln(), Op::LogClamp { x, floor })
    }

    /// `sign(x) |x|^alpha`. The derivative `alpha |x|^(alpha-1)` is evaluated
    /// at `max(|x|, grad_floor)` to keep it finite near zero.
    pub fn signed_pow(&mut self, x: Var, alpha: f64, grad_floor: f64) -> Var {
        self.unary(
            x,
            |v| v.signum() * v.abs().powf(alpha),
            Op::SignedPow { x, alpha, grad_floor },
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).iter().sum();
        let rg = self.requires_grad(x);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.requires_grad(x);
        self.push(vec![1], vec![m], Op::Mean(x), rg)
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.square(d);
        Ok(self.mean(sq))
    }

    /// Mean absolute difference.
    pub fn mae(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let ab = self.abs(d);
        Ok(self.mean(ab))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(x).len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape(x)),
            ));
        }
        let value = self.value(x).to_vec();
        let rg = self.requires_grad(x);
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x), rg))
    }

    /// `[a, b, c] -> [a, c, b]`.
    pub fn transpose12(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(Error::shape("transpose12", format!("expected rank 3, got {s:?}")));
        }
        let dims = [s[0], s[1], s[2]];
        let value = transpose12_data(self.value(x), dims);
        let rg = self.requires_grad(x);
        Ok(self.push(vec![dims[0], dims[2], dims[1]], value, Op::Transpose12 { x, dims }, rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != base.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != base[i])
            {
                return Err(Error::shape("concat", format!("{base:?} vs {s:?} on axis {axis}")));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut value = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                value.extend_from_slice(&self.value(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        Ok(self.push(
            out_shape,
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Right zero-padding of the last axis.
    pub fn pad_last(&mut self, x: Var, right: usize) -> Var {
        if right == 0 {
            return x;
        }
        let s = self.shape(x).to_vec();
        let last = *s.last().expect("rank >= 1");
        let rows = numel(&s) / last;
        let mut value = vec![0.0; rows * (last + right)];
        for r in 0..rows {
            value[r * (last + right)..r * (last + right) + last]
                .copy_from_slice(&self.value(x)[r * last..(r + 1) * last]);
        }
        let mut shape = s;
        *shape.last_mut().unwrap() = last + right;
        let rg = self.requires_grad(x);
        self.push(shape, value, Op::PadLast { x, right }, rg)
    }

    /// `x[..., start .. start + len]`.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let last = *s.last().expect("rank >= 1");
        if len == 0 || start + len > last {
            return Err(Error::shape("slice_last", format!("[{start}, {}) of {last}", start + len)));
        }
        let rows = numel(&s) / last;
        let mut value = Vec::with_capacity(rows * len);
        for r in 0..rows {
            value.extend_from_slice(&self.value(x)[r * last + start..r * last + start + len]);
        }
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        let rg = self.requires_grad(x);
        Ok(self.push(shape, value, Op::SliceLast { x, start }, rg))
    }

    /// `[m, k] × [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} × {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut value = vec![0.0; m * n];
        crate::linalg::gemm(m, k, n, self.value(a), false, self.value(b), false, &mut value, 0.0);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(vec![m, n], value, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// Affine map over the last axis: `x · wᵀ + b` with `w: [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let fan_in = *sx.last().ok_or_else(|| Error::shape("linear", "scalar input"))?;
        if sw.len() != 2 || sw[1] != fan_in {
            return Err(Error::shape("linear", format!("input {sx:?}, weight {sw:?}")));
        }
        let fan_out = sw[0];
        if let Some(b) = b {
            if self.shape(b) != [fan_out] {
                return Err(Error::shape("linear", format!("bias {:?}, expected [{fan_out}]", self.shape(b))));
            }
        }
        let rows = numel(&sx) / fan_in;
        let mut value = vec![0.0; rows * fan_out];
        crate::linalg::gemm(rows, fan_in, fan_out, self.value(x), false, self.value(w), true, &mut value, 0.0);
        if let Some(b) = b {
            let bias = self.value(b).to_vec();
            for row in value.chunks_mut(fan_out) {
                row.iter_mut().zip(&bias).for_each(|(v, b)| *v += b);
            }
        }
        let mut shape = sx;
        *shape.last_mut().unwrap() = fan_out;
        let rg = self.requires_grad(x) || self.requires_grad(w) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(shape, value, Op::Linear { x, w, b, rows, fan_in, fan_out }, rg))
    }

    /// `x[b, c, t] + bias[b, c]`.
    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(bias);
        if sx.len() != 3 || sb != [sx[0], sx[1]] {
            return Err(Error::shape("add_channel_bias", format!("{sx:?} + {sb:?}")));
        }
        let t = sx[2];
        let bv = self.value(bias).to_vec();
        let mut value = self.value(x).to_vec();
        for (i, row) in value.chunks_mut(t).enumerate() {
            row.iter_mut().for_each(|v| *v += bv[i]);
        }
        let rg = self.requires_grad(x) || self.requires_grad(bias);
        Ok(self.push(sx, value, Op::AddChannelBias { x, bias }, rg))
    }

    /// Rows of a `[E, D]` table selected by `ids`, giving `[ids.len(), D]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("gather_rows", format!("table must be rank 2, got {s:?}")));
        }
        if ids.is_empty() {
            return Err(Error::InvalidArgument("gather_rows with no ids".into()));
        }
        let d = s[1];
        let mut value = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= s[0] {
                return Err(Error::InvalidArgument(format!("row {i} out of range {}", s[0])));
            }
            value.extend_from_slice(&self.value(table)[i * d..(i + 1) * d]);
        }
        let rg = self.requires_grad(table);
        Ok(self.push(
            vec![ids.len(), d],
            value,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::NotScalar(root.shape.clone()));
        }
        if !root.requires_grad {
            return Err(Error::Untracked);
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Param(id) => {
                    accumulate_into(out.params.entry(*id).or_insert_with(|| vec![0.0; g.len()]), &g);
                }
                Op::Input => {
                    accumulate_into(out.inputs.entry(i).or_insert_with(|| vec![0.0; g.len()]), &g);
                }
                _ => {
                    let mut sink = Sink {
                        nodes: &self.nodes,
                        grads: &mut grads,
                    };
                    self.backward_op(node, &g, &mut sink);
                }
            }
        }
        Ok(out)
    }

    fn backward_op(&self, node: &Node, g: &[f64], sink: &mut Sink<'_>) {
        let val = |v: Var| self.nodes[v.0].value.as_slice();
        match &node.op {
            Op::Constant | Op::Input | Op::Param(_) => {}
            Op::Add(a, b) => {
                sink.add(*a, g);
                sink.add(*b, g);
            }
            Op::Sub(a, b) => {
                sink.add(*a, g);
                sink.add_with(*b, || g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                sink.add_with(*a, || g.iter().zip(val(*b)).map(|(g, y)| g * y).collect());
                sink.add_with(*b, || g.iter().zip(val(*a)).map(|(g, x)| g * x).collect());
            }
            Op::Scale(x, c) => sink.add_with(*x, || g.iter().map(|v| v * c).collect()),
            Op::Abs(x) => sink.add_with(*x, || {
                g.iter()
                    .zip(val(*x))
                    .map(|(g, x)| if *x > 0.0 { *g } else if *x < 0.0 { -g } else { 0.0 })
                    .collect()
            }),
            Op::Sqrt(x) => sink.add_with(*x, || {
                g.iter()
                    .zip(&node.value)
                    .map(|(g, y)| if *y > 0.0 { 0.5 * g / y } else { 0.0 })
                    .collect()
            }),
            Op::Square(x) => sink.add_with(*x, || g.iter().zip(val(*x)).map(|(g, x)| 2.0 * g * x).collect()),
            Op::Gelu { x, cdf } => sink.add_with(*x, || {
                g.iter().zip(val(*x)).zip(cdf).map(|((g, x), c)| g * (c + x * normal_pdf(*x))).collect()
            }),
            Op::LogClamp { x, floor } => sink.add_with(*x, || {
                g.iter()
                    .zip(val(*x))
                    .map(|(g, x)| if x > floor { g / x } else { 0.0 })
                    .collect()
            }),
            Op::SignedPow { x, alpha, grad_floor } => sink.add_with(*x, || {
                g.iter()
                    .zip(val(*x))
                    .map(|(g, x)| g * alpha * x.abs().max(*grad_floor).powf(alpha - 1.0))
                    .collect()
            }),
            Op::Sum(x) => {
                let n = val(*x).len();
                sink.add_with(*x, || vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                sink.add_with(*x, || vec![g[0] / n as f64; n]);
            }
            Op::Reshape(x) => sink.add(*x, g),
            Op::Transpose12 { x, dims } => {
                let back = [dims[0], dims[2], dims[1]];
                sink.add_with(*x, || transpose12_data(g, back));
            }
            Op::Concat { inputs, axis } => {
                let shape = &node.shape;
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &v in inputs {
                    let chunk = self.nodes[v.0].shape[*axis] * inner;
                    sink.add_with(v, || {
                        let mut gv = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            gv.extend_from_slice(&g[o * total + offset..o * total + offset + chunk]);
                        }
                        gv
                    });
                    offset += chunk;
                }
            }
            Op::PadLast { x, right } => {
                let last = *self.nodes[x.0].shape.last().unwrap();
                sink.add_with(*x, || {
                    g.chunks(last + right)
                        .flat_map(|row| row[..last].iter().copied())
                        .collect()
                });
            }
            Op::SliceLast { x, start } => {
                let last = *self.nodes[x.0].shape.last().unwrap();
                let len = *node.shape.last().unwrap();
                sink.add_with(*x, || {
                    let mut gx = vec![0.0; val(*x).len()];
                    for (r, row) in g.chunks(len).enumerate() {
                        gx[r * last + start..r * last + start + len].copy_from_slice(row);
                    }
                    gx
                });
            }
            Op::MatMul { a, b, m, k, n } => {
                sink.add_with(*a, || {
                    let mut ga = vec![0.0; m * k];
                    crate::linalg::gemm(*m, *n, *k, g, false, val(*b), true, &mut ga, 0.0);
                    ga
                });
                sink.add_with(*b, || {
                    let mut gb = vec![0.0; k * n];
                    crate::linalg::gemm(*k, *m, *n, val(*a), true, g, false, &mut gb, 0.0);
                    gb
                });
            }
            Op::Linear { x, w, b, rows, fan_in, fan_out } => {
                sink.add_with(*x, || {
                    let mut gx = vec![0.0; rows * fan_in];
                    crate::linalg::gemm(*rows, *fan_out, *fan_in, g, false, val(*w), false, &mut gx, 0.0);
                    gx
                });
                sink.add_with(*w, || {
                    let mut gw = vec![0.0; fan_out * fan_in];
                    crate::linalg::gemm(*fan_out, *rows, *fan_in, g, true, val(*x), false, &mut gw, 0.0);
                    gw
                });
                if let Some(b) = b {
                    sink.add_with(*b, || {
                        let mut gb = vec![0.0; *fan_out];
                        for row in g.chunks(*fan_out) {
                            gb.iter_mut().zip(row).for_each(|(a, r)| *a += r);
                        }
                        gb
                    });
                }
            }
            Op::AddChannelBias { x, bias } => {
                sink.add(*x, g);
                let t = node.shape[2];
                sink.add_with(*bias, || g.chunks(t).map(|row| row.iter().sum()).collect());
            }
            Op::GatherRows { table, ids } => {
                let d = node.shape[1];
                sink.add_with(*table, || {
                    let mut gt = vec![0.0; val(*table).len()];
                    for (r, &i) in ids.iter().enumerate() {
                        gt[i * d..(i + 1) * d]
                            .iter_mut()
                            .zip(&g[r * d..(r + 1) * d])
                            .for_each(|(a, b)| *a += b);
                    }
                    gt
                });
            }
            Op::Conv1d(saved) => conv::conv1d_backward(self, saved, g, sink),
            Op::ConvTranspose1d(saved) => conv::conv_transpose1d_backward(self, saved, g, sink),
            Op::LayerNorm(saved) => norm::layer_norm_backward(self, saved, g, sink),
            Op::Grn(saved) => norm::grn_backward(self, saved, g, sink),
            Op::AvgPool2d { x, kh, kw } => {
                let shape = &node.shape;
                sink.add_with(*x, || norm::avg_pool2d_adjoint(g, shape, *kh, *kw));
            }
            Op::Imdct { x, hop } => sink.add_with(*x, || spectral::imdct_adjoint(g, *hop, node.shape[0])),
            Op::StftMag {
                x,
                fft_length,
                hop,
                spectrum,
            } => {
                let len = val(*x).len();
                let batch = self.nodes[x.0].shape[0];
                sink.add_with(*x, || spectral::stft_mag_adjoint(g, spectrum, batch, len / batch, *fft_length, *hop));
            }
        }
    }
}

/// Accumulates gradients into tracked inputs, skipping untracked ones.
pub(crate) struct Sink<'a> {
    nodes: &'a [Node],
    grads: &'a mut [Option<Vec<f64>>],
}

impl Sink<'_> {
    pub(crate) fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn add(&mut self, v: Var, g: &[f64]) {
        if !self.wants(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => accumulate_into(acc, g),
            slot @ None => *slot = Some(g.to_vec()),
        }
    }

    /// Like [`add`](Self::add) but only computes the gradient when needed.
    pub(crate) fn add_with(&mut self, v: Var, f: impl FnOnce() -> Vec<f64>) {
        if !self.wants(v) {
            return;
        }
        let g = f();
        debug_assert_eq!(g.len(), self.nodes[v.0].value.len());
        match &mut self.grads[v.0] {
            Some(acc) => accumulate_into(acc, &g),
            slot @ None => *slot = Some(g),
        }
    }
}

fn accumulate_into(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

pub(crate) fn transpose12_data(x: &[f64], [a, b, c]: [usize; 3]) -> Vec<f64> {
    let mut out = vec![0.0; a * b * c];
    for i in 0..a {
        let src = &x[i * b * c..(i + 1) * b * c];
        let dst = &mut out[i * b * c..(i + 1) * b * c];
        for j in 0..b {
            for k in 0..c {
                dst[k * b + j] = src[j * c + k];
            }
        }
    }
    out
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
