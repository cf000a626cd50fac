//! Reverse-mode automatic differentiation over a recorded op list.
//!
//! Every op checks shapes before computing and records its output value. The
//! backward pass walks the record in exact reverse order and returns one
//! gradient per parameter that took part in the graph.

use std::collections::BTreeMap;

use super::array::{gemm, Tensor};
use super::params::{ParamId, ParamSet};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Matmul(Var, Var),
    Bmm(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Stack(Vec<Var>, usize),
    Select(Var, usize, usize),
    IndexSelect(Var, Vec<usize>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var, usize),
    PairAdd(Var, Var),
    Conv2d(Var, Var, Var),
    MaxPool(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    BceWithLogits(Var, Vec<f64>),
    CrossEntropy(Var, Vec<usize>, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients keyed by parameter, produced by [`Tape::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(id, t)| (*id, t))
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Splits `shape` around `axis` into (outer, dim, inner) element counts.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_dim(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

/// Output side length of a ceil-mode pooling window sweep.
pub fn pooled_len(len: usize, window: usize, stride: usize) -> usize {
    len.saturating_sub(window).div_ceil(stride) + 1
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Leaf => false,
            Op::Param(_) => true,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input. No gradient flows to it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// Records the current value of a parameter.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Param(id), &[])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    /// `x[..., j] + b[j]` for a rank-1 `b`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(b));
        if bs.len() != 1 || xs.is_empty() || last_dim(xs) != bs[0] {
            return Err(Error::shape("add_bias", xs, bs));
        }
        let n = bs[0];
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bias[i % n];
        }
        Ok(self.push(out, Op::AddBias(x, b), &[x, b]))
    }

    /// `a[..., k] · b[k, n]`; leading axes of `a` are treated as rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (as_, bs) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if as_.is_empty() || bs.len() != 2 || last_dim(&as_) != bs[0] {
            return Err(Error::shape("matmul", &as_, &bs));
        }
        let k = bs[0];
        let n = bs[1];
        let m = self.value(a).len() / k;
        let mut out_shape = as_.clone();
        *out_shape.last_mut().unwrap() = n;
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut data, false);
        let out = Tensor::new(&out_shape, data)?;
        Ok(self.push(out, Op::Matmul(a, b), &[a, b]))
    }

    /// Batched product `[B, m, k] · [B, k, n] → [B, m, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (as_, bs) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if as_.len() != 3 || bs.len() != 3 || as_[0] != bs[0] || as_[2] != bs[1] {
            return Err(Error::shape("bmm", &as_, &bs));
        }
        let (batch, m, k, n) = (as_[0], as_[1], as_[2], bs[2]);
        let mut data = vec![0.0; batch * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &ad[i * m * k..(i + 1) * m * k],
                false,
                &bd[i * k * n..(i + 1) * k * n],
                false,
                &mut data[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let out = Tensor::new(&[batch, m, n], data)?;
        Ok(self.push(out, Op::Bmm(a, b), &[a, b]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(Error::shape("transpose", &shape, &[]));
        }
        let out = transpose_last2(self.value(a));
        Ok(self.push(out, Op::Transpose(a), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::Usage("concat of nothing".into()))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", &first, &[axis]));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &first, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = self.shape(*p)[axis] * inner;
                data.extend_from_slice(&self.value(*p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::new(&out_shape, data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), parts))
    }

    /// Stacks equally shaped values along a new axis.
    pub fn stack(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::Usage("stack of nothing".into()))?)
            .to_vec();
        if axis > first.len() {
            return Err(Error::shape("stack", &first, &[axis]));
        }
        for p in parts {
            if self.shape(*p) != first.as_slice() {
                return Err(Error::shape("stack", &first, self.shape(*p)));
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis..].iter().product();
        let mut out_shape = first.clone();
        out_shape.insert(axis, parts.len());
        let mut data = Vec::with_capacity(outer * parts.len() * inner);
        for o in 0..outer {
            for p in parts {
                data.extend_from_slice(&self.value(*p).data()[o * inner..(o + 1) * inner]);
            }
        }
        let out = Tensor::new(&out_shape, data)?;
        Ok(self.push(out, Op::Stack(parts.to_vec(), axis), parts))
    }

    /// Slice `index` of `axis`, dropping that axis.
    pub fn select(&mut self, a: Var, axis: usize, index: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || index >= shape[axis] {
            return Err(Error::shape("select", &shape, &[axis, index]));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * dim + index) * inner;
            data.extend_from_slice(&src[start..start + inner]);
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let out = Tensor::new(&out_shape, data)?;
        Ok(self.push(out, Op::Select(a, axis, index), &[a]))
    }

    /// Gathers rows (axis 0) by index. Doubles as embedding lookup.
    pub fn index_select(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.is_empty() || indices.is_empty() {
            return Err(Error::shape("index_select", &shape, &[indices.len()]));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= shape[0]) {
            return Err(Error::Data(format!("index {bad} out of range for {} rows", shape[0])));
        }
        let row: usize = shape[1..].iter().product();
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            data.extend_from_slice(&src[i * row..(i + 1) * row]);
        }
        let mut out_shape = shape.clone();
        out_shape[0] = indices.len();
        let out = Tensor::new(&out_shape, data)?;
        Ok(self.push(out, Op::IndexSelect(a, indices.to_vec()), &[a]))
    }

    /// Embedding rows for `ids`, shape `[ids.len(), dim]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        if self.shape(table).len() != 2 {
            return Err(Error::shape("embedding_lookup", self.shape(table), &[ids.len()]));
        }
        self.index_select(table, ids)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(stable_sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.masked_softmax(a, axis, None)
    }

    /// Softmax along `axis` restricted to positions where `mask` is true.
    /// Masked positions come out as exactly zero, and a fully masked slice is
    /// all zeros.
    pub fn masked_softmax(&mut self, a: Var, axis: usize, mask: Option<&[bool]>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", &shape, &[axis]));
        }
        if let Some(m) = mask {
            if m.len() != self.value(a).len() {
                return Err(Error::shape("softmax mask", &shape, &[m.len()]));
            }
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let keep = |i: usize| mask.is_none_or(|m| m[i]);
        let mut data = vec![0.0; src.len()];
        for o in 0..outer {
            for j in 0..inner {
                let idx = |k: usize| (o * dim + k) * inner + j;
                let max = (0..dim)
                    .filter(|&k| keep(idx(k)))
                    .map(|k| src[idx(k)])
                    .fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    continue;
                }
                let mut total = 0.0;
                for k in 0..dim {
                    if keep(idx(k)) {
                        let e = (src[idx(k)] - max).exp();
                        data[idx(k)] = e;
                        total += e;
                    }
                }
                for k in 0..dim {
                    data[idx(k)] /= total;
                }
            }
        }
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::Softmax(a, axis), &[a]))
    }

    /// `[N, T, h] ⊕ [N, S, h] → [N, T, S, h]` with `out[n,t,s] = a[n,t] + b[n,s]`.
    pub fn pair_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (as_, bs) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if as_.len() != 3 || bs.len() != 3 || as_[0] != bs[0] || as_[2] != bs[2] {
            return Err(Error::shape("pair_add", &as_, &bs));
        }
        let (n, t, s, h) = (as_[0], as_[1], bs[1], as_[2]);
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(n * t * s * h);
        for i in 0..n {
            for ti in 0..t {
                let ar = &ad[(i * t + ti) * h..(i * t + ti + 1) * h];
                for si in 0..s {
                    let br = &bd[(i * s + si) * h..(i * s + si + 1) * h];
                    data.extend(ar.iter().zip(br).map(|(x, y)| x + y));
                }
            }
        }
        let out = Tensor::new(&[n, t, s, h], data)?;
        Ok(self.push(out, Op::PairAdd(a, b), &[a, b]))
    }

    /// Valid-padding, stride-1 convolution: `x [N, C, H, W]`, `w [F, C, kh, kw]`,
    /// `b [F]` → `[N, F, H-kh+1, W-kw+1]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || xs[2] < ws[2] || xs[3] < ws[3] {
            return Err(Error::shape("conv2d", &xs, &ws));
        }
        if bs != [ws[0]] {
            return Err(Error::shape("conv2d bias", &ws, &bs));
        }
        let geo = ConvGeometry::new(&xs, &ws);
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut data = vec![0.0; geo.n * geo.f * geo.plane()];
        let mut cols = vec![0.0; geo.patch() * geo.plane()];
        for i in 0..geo.n {
            geo.im2col(&xd[i * geo.image()..(i + 1) * geo.image()], &mut cols);
            let out = &mut data[i * geo.f * geo.plane()..(i + 1) * geo.f * geo.plane()];
            for (fi, row) in out.chunks_mut(geo.plane()).enumerate() {
                row.fill(bd[fi]);
            }
            gemm(geo.f, geo.patch(), geo.plane(), wd, false, &cols, false, out, true);
        }
        let out = Tensor::new(&[geo.n, geo.f, geo.oh, geo.ow], data)?;
        Ok(self.push(out, Op::Conv2d(x, w, b), &[x, w, b]))
    }

    /// Max pooling over the last two axes of `[N, C, H, W]` with partial
    /// windows at the far edges kept (ceil mode), so a 1×1 map pools to itself.
    pub fn maxpool2d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || window == 0 || stride == 0 {
            return Err(Error::shape("maxpool2d", &xs, &[window, stride]));
        }
        let (planes, h, w) = (xs[0] * xs[1], xs[2], xs[3]);
        let (oh, ow) = (pooled_len(h, window, stride), pooled_len(w, window, stride));
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    for y in oy * stride..(oy * stride + window).min(h) {
                        for xx in ox * stride..(ox * stride + window).min(w) {
                            let i = base + y * w + xx;
                            if best == usize::MAX || src[i] > src[best] {
                                best = i;
                            }
                        }
                    }
                    data.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::new(&[xs[0], xs[1], oh, ow], data)?;
        Ok(self.push(out, Op::MaxPool(x, argmax), &[x]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.data().iter().sum::<f64>() / v.len() as f64);
        self.push(out, Op::Mean(a), &[a])
    }

    /// Mean binary cross-entropy of logits against 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let v = self.value(logits);
        if v.len() != targets.len() {
            return Err(Error::shape("bce_with_logits", v.shape(), &[targets.len()]));
        }
        let total: f64 = v
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum();
        let out = Tensor::scalar(total / targets.len() as f64);
        Ok(self.push(out, Op::BceWithLogits(logits, targets.to_vec()), &[logits]))
    }

    /// Weighted mean softmax cross-entropy of `[N, V]` logits against class
    /// ids. Rows with weight zero are ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != targets.len() || weights.len() != targets.len() {
            return Err(Error::shape("cross_entropy", &shape, &[targets.len(), weights.len()]));
        }
        let vocab = shape[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(Error::Data(format!("target {bad} out of range for {vocab} classes")));
        }
        let data = self.value(logits).data();
        let weight_sum: f64 = weights.iter().sum();
        let mut total = 0.0;
        for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &data[i * vocab..(i + 1) * vocab];
            total += w * (log_sum_exp(row) - row[t]);
        }
        let loss = if weight_sum > 0.0 { total / weight_sum } else { 0.0 };
        let out = Tensor::scalar(loss);
        Ok(self.push(
            out,
            Op::CrossEntropy(logits, targets.to_vec(), weights.to_vec()),
            &[logits],
        ))
    }

    /// Runs the reverse pass from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let loss_shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {loss_shape:?}"
            )));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[loss.0] = Some(Tensor::full(nodes[loss.0].value.shape(), 1.0));
        let mut out = Gradients::default();

        let acc = |grads: &mut Vec<Option<Tensor>>, v: Var, g: Tensor| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        };

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => match out.by_param.get_mut(id) {
                    Some(existing) => existing.add_assign(&g),
                    None => {
                        out.by_param.insert(*id, g);
                    }
                },
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.zip(val(*b), |x, y| x * y));
                    acc(&mut grads, *b, g.zip(val(*a), |x, y| x * y));
                }
                Op::Scale(a, f) => acc(&mut grads, *a, g.map(|x| x * f)),
                Op::AddBias(x, b) => {
                    let n = val(*b).len();
                    let mut gb = vec![0.0; n];
                    for (j, v) in g.data().iter().enumerate() {
                        gb[j % n] += v;
                    }
                    acc(&mut grads, *b, Tensor::new(val(*b).shape(), gb)?);
                    acc(&mut grads, *x, g);
                }
                Op::Matmul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (k, n) = (bv.shape()[0], bv.shape()[1]);
                    let m = av.len() / k;
                    if nodes[a.0].needs_grad {
                        let mut ga = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), false, bv.data(), true, &mut ga, false);
                        acc(&mut grads, *a, Tensor::new(av.shape(), ga)?);
                    }
                    if nodes[b.0].needs_grad {
                        let mut gb = vec![0.0; k * n];
                        gemm(k, m, n, av.data(), true, g.data(), false, &mut gb, false);
                        acc(&mut grads, *b, Tensor::new(bv.shape(), gb)?);
                    }
                }
                Op::Bmm(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (batch, m, k, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                    let gd = g.data();
                    if nodes[a.0].needs_grad {
                        let mut ga = vec![0.0; batch * m * k];
                        for s in 0..batch {
                            gemm(
                                m,
                                n,
                                k,
                                &gd[s * m * n..(s + 1) * m * n],
                                false,
                                &bv.data()[s * k * n..(s + 1) * k * n],
                                true,
                                &mut ga[s * m * k..(s + 1) * m * k],
                                false,
                            );
                        }
                        acc(&mut grads, *a, Tensor::new(av.shape(), ga)?);
                    }
                    if nodes[b.0].needs_grad {
                        let mut gb = vec![0.0; batch * k * n];
                        for s in 0..batch {
                            gemm(
                                k,
                                m,
                                n,
                                &av.data()[s * m * k..(s + 1) * m * k],
                                true,
                                &gd[s * m * n..(s + 1) * m * n],
                                false,
                                &mut gb[s * k * n..(s + 1) * k * n],
                                false,
                            );
                        }
                        acc(&mut grads, *b, Tensor::new(bv.shape(), gb)?);
                    }
                }
                Op::Transpose(a) => acc(&mut grads, *a, transpose_last2(&g)),
                Op::Reshape(a) => acc(&mut grads, *a, g.reshape(val(*a).shape())?),
                Op::Concat(parts, axis) => {
                    let (outer, _, inner) = split_axis(node.value.shape(), *axis);
                    let total = node.value.shape()[*axis] * inner;
                    let mut offset = 0;
                    for p in parts {
                        let chunk = val(*p).shape()[*axis] * inner;
                        let mut gp = Vec::with_capacity(outer * chunk);
                        for o in 0..outer {
                            let start = o * total + offset;
                            gp.extend_from_slice(&g.data()[start..start + chunk]);
                        }
                        offset += chunk;
                        acc(&mut grads, *p, Tensor::new(val(*p).shape(), gp)?);
                    }
                }
                Op::Stack(parts, axis) => {
                    let shape = val(parts[0]).shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[*axis..].iter().product();
                    for (pi, p) in parts.iter().enumerate() {
                        let mut gp = Vec::with_capacity(outer * inner);
                        for o in 0..outer {
                            let start = (o * parts.len() + pi) * inner;
                            gp.extend_from_slice(&g.data()[start..start + inner]);
                        }
                        acc(&mut grads, *p, Tensor::new(shape, gp)?);
                    }
                }
                Op::Select(a, axis, index) => {
                    let shape = val(*a).shape();
                    let (outer, dim, inner) = split_axis(shape, *axis);
                    let mut ga = Tensor::zeros(shape);
                    let gd = ga.data_mut();
                    for o in 0..outer {
                        let start = (o * dim + index) * inner;
                        gd[start..start + inner].copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::IndexSelect(a, indices) => {
                    let shape = val(*a).shape();
                    let row: usize = shape[1..].iter().product();
                    let mut ga = Tensor::zeros(shape);
                    let gd = ga.data_mut();
                    for (r, &src) in indices.iter().enumerate() {
                        for (d, s) in gd[src * row..(src + 1) * row]
                            .iter_mut()
                            .zip(&g.data()[r * row..(r + 1) * row])
                        {
                            *d += s;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip(&node.value, |d, y| d * y * (1.0 - y))),
                Op::Tanh(a) => acc(&mut grads, *a, g.zip(&node.value, |d, y| d * (1.0 - y * y))),
                Op::Relu(a) => acc(
                    &mut grads,
                    *a,
                    g.zip(&node.value, |d, y| if y > 0.0 { d } else { 0.0 }),
                ),
                Op::Softmax(a, axis) => {
                    let (outer, dim, inner) = split_axis(node.value.shape(), *axis);
                    let y = node.value.data();
                    let mut ga = vec![0.0; y.len()];
                    for o in 0..outer {
                        for j in 0..inner {
                            let idx = |k: usize| (o * dim + k) * inner + j;
                            let dot: f64 = (0..dim).map(|k| g.data()[idx(k)] * y[idx(k)]).sum();
                            for k in 0..dim {
                                ga[idx(k)] = y[idx(k)] * (g.data()[idx(k)] - dot);
                            }
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(node.value.shape(), ga)?);
                }
                Op::PairAdd(a, b) => {
                    let s = node.value.shape();
                    let (n, t, sl, h) = (s[0], s[1], s[2], s[3]);
                    let mut ga = vec![0.0; n * t * h];
                    let mut gb = vec![0.0; n * sl * h];
                    for i in 0..n {
                        for ti in 0..t {
                            for si in 0..sl {
                                let src = &g.data()[((i * t + ti) * sl + si) * h..][..h];
                                for (k, v) in src.iter().enumerate() {
                                    ga[(i * t + ti) * h + k] += v;
                                    gb[(i * sl + si) * h + k] += v;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(val(*a).shape(), ga)?);
                    acc(&mut grads, *b, Tensor::new(val(*b).shape(), gb)?);
                }
                Op::Conv2d(x, w, b) => {
                    let (xv, wv) = (val(*x), val(*w));
                    let geo = ConvGeometry::new(xv.shape(), wv.shape());
                    let gd = g.data();
                    let mut gb = vec![0.0; geo.f];
                    for i in 0..geo.n {
                        for (fi, row) in gd[i * geo.f * geo.plane()..(i + 1) * geo.f * geo.plane()]
                            .chunks(geo.plane())
                            .enumerate()
                        {
                            gb[fi] += row.iter().sum::<f64>();
                        }
                    }
                    let mut gw = vec![0.0; wv.len()];
                    let mut gx = vec![0.0; xv.len()];
                    let mut cols = vec![0.0; geo.patch() * geo.plane()];
                    let mut gcols = vec![0.0; geo.patch() * geo.plane()];
                    for i in 0..geo.n {
                        let gi = &gd[i * geo.f * geo.plane()..(i + 1) * geo.f * geo.plane()];
                        if nodes[w.0].needs_grad {
                            geo.im2col(&xv.data()[i * geo.image()..(i + 1) * geo.image()], &mut cols);
                            gemm(geo.f, geo.plane(), geo.patch(), gi, false, &cols, true, &mut gw, true);
                        }
                        if nodes[x.0].needs_grad {
                            gemm(geo.patch(), geo.f, geo.plane(), wv.data(), true, gi, false, &mut gcols, false);
                            geo.col2im(&gcols, &mut gx[i * geo.image()..(i + 1) * geo.image()]);
                        }
                    }
                    acc(&mut grads, *b, Tensor::new(&[geo.f], gb)?);
                    acc(&mut grads, *w, Tensor::new(wv.shape(), gw)?);
                    acc(&mut grads, *x, Tensor::new(xv.shape(), gx)?);
                }
                Op::MaxPool(x, argmax) => {
                    let mut gx = Tensor::zeros(val(*x).shape());
                    let gd = gx.data_mut();
                    for (&src, v) in argmax.iter().zip(g.data()) {
                        gd[src] += v;
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Sum(a) => {
                    let s = g.item();
                    acc(&mut grads, *a, Tensor::full(val(*a).shape(), s));
                }
                Op::Mean(a) => {
                    let s = g.item() / val(*a).len() as f64;
                    acc(&mut grads, *a, Tensor::full(val(*a).shape(), s));
                }
                Op::BceWithLogits(a, targets) => {
                    let scale = g.item() / targets.len() as f64;
                    let ga = Tensor::new(
                        val(*a).shape(),
                        val(*a)
                            .data()
                            .iter()
                            .zip(targets)
                            .map(|(&x, &y)| (stable_sigmoid(x) - y) * scale)
                            .collect(),
                    )?;
                    acc(&mut grads, *a, ga);
                }
                Op::CrossEntropy(a, targets, weights) => {
                    let av = val(*a);
                    let vocab = av.shape()[1];
                    let weight_sum: f64 = weights.iter().sum();
                    let mut ga = vec![0.0; av.len()];
                    if weight_sum > 0.0 {
                        let upstream = g.item() / weight_sum;
                        for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                            if w == 0.0 {
                                continue;
                            }
                            let row = &av.data()[i * vocab..(i + 1) * vocab];
                            let lse = log_sum_exp(row);
                            for (k, &x) in row.iter().enumerate() {
                                let p = (x - lse).exp();
                                let target = if k == t { 1.0 } else { 0.0 };
                                ga[i * vocab + k] = upstream * w * (p - target);
                            }
                        }
                    }
                    acc(&mut grads, *a, Tensor::new(av.shape(), ga)?);
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn transpose_last2(t: &Tensor) -> Tensor {
    let shape = t.shape();
    let r = shape.len();
    let (rows, cols) = (shape[r - 2], shape[r - 1]);
    let batch = t.len() / (rows * cols);
    let mut out_shape = shape.to_vec();
    out_shape.swap(r - 2, r - 1);
    let src = t.data();
    let mut data = vec![0.0; src.len()];
    for b in 0..batch {
        let base = b * rows * cols;
        for i in 0..rows {
            for j in 0..cols {
                data[base + j * rows + i] = src[base + i * cols + j];
            }
        }
    }
    Tensor::new(&out_shape, data).expect("same element count")
}

struct ConvGeometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn new(x: &[usize], w: &[usize]) -> Self {
        ConvGeometry {
            n: x[0],
            c: x[1],
            h: x[2],
            w: x[3],
            f: w[0],
            kh: w[2],
            kw: w[3],
            oh: x[2] - w[2] + 1,
            ow: x[3] - w[3] + 1,
        }
    }

    fn plane(&self) -> usize {
        self.oh * self.ow
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn image(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Unfolds one image into a `[c·kh·kw, oh·ow]` column matrix.
    fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        for ci in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * self.plane()..(row + 1) * self.plane()];
                    for oy in 0..self.oh {
                        let src = (ci * self.h + oy + ky) * self.w + kx;
                        dst[oy * self.ow..(oy + 1) * self.ow].copy_from_slice(&img[src..src + self.ow]);
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], img: &mut [f64]) {
        for ci in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * self.plane()..(row + 1) * self.plane()];
                    for oy in 0..self.oh {
                        let dst = (ci * self.h + oy + ky) * self.w + kx;
                        for (d, s) in img[dst..dst + self.ow].iter_mut().zip(&src[oy * self.ow..(oy + 1) * self.ow]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}
