use super::gemm::Scalar;
use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Operation tag of a recorded node, for structural inspection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Param,
    MatMul,
    BatchMatMul,
    Add,
    AddBias,
    Scale,
    Relu,
    Softmax,
    Conv1d,
    BatchNorm,
    MeanAxis,
    Reshape,
    Transpose,
    Concat,
    ReduceMean,
    WeightedSum,
    Bce,
}

pub(crate) enum Op<T: Scalar> {
    Input,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Scale {
        x: Var,
        s: T,
    },
    Relu(Var),
    Softmax(Var),
    Conv1d(super::conv::ConvSaved<T>),
    BatchNorm(super::norm::BnSaved<T>),
    MeanAxis {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Reshape(Var),
    Transpose {
        x: Var,
        batch: usize,
        rows: usize,
        cols: usize,
    },
    Concat {
        parts: Vec<(Var, usize)>,
        outer: usize,
        inner: usize,
    },
    ReduceMean(Var),
    WeightedSum {
        x: Var,
        weights: Vec<T>,
    },
    Bce {
        probs: Var,
        labels: Vec<usize>,
        floor: T,
    },
}

impl<T: Scalar> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param(_) => OpKind::Param,
            Op::MatMul { batch: 0, .. } => OpKind::MatMul,
            Op::MatMul { .. } => OpKind::BatchMatMul,
            Op::Add(..) => OpKind::Add,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::Scale { .. } => OpKind::Scale,
            Op::Relu(_) => OpKind::Relu,
            Op::Softmax(_) => OpKind::Softmax,
            Op::Conv1d(_) => OpKind::Conv1d,
            Op::BatchNorm(_) => OpKind::BatchNorm,
            Op::MeanAxis { .. } => OpKind::MeanAxis,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Transpose { .. } => OpKind::Transpose,
            Op::Concat { .. } => OpKind::Concat,
            Op::ReduceMean(_) => OpKind::ReduceMean,
            Op::WeightedSum { .. } => OpKind::WeightedSum,
            Op::Bce { .. } => OpKind::Bce,
        }
    }
}

pub(crate) struct Node<T: Scalar> {
    pub(crate) value: Tensor<T>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
}

/// Define-by-run computation graph. Nodes are appended in evaluation order, which is
/// also a valid topological order; backward walks them in reverse.
pub struct Graph<T: Scalar = f32> {
    pub(crate) nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new(), backward_done: false }
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn needs_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Differentiable leaf whose gradient is readable through [`Graph::grad`].
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Leaf holding a copy of a stored parameter (or buffer).
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let entry = store.get(id);
        self.push(entry.value.clone(), Op::Param(id), entry.trainable)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Operation tags in recording order.
    pub fn op_kinds(&self) -> Vec<OpKind> {
        self.nodes.iter().map(|n| n.op.kind()).collect()
    }

    // ---- dense algebra -------------------------------------------------------------

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!("matmul: cannot multiply {sa:?} by {sb:?}")));
        }
        self.matmul_impl(a, b, false, false, 0, sa[0], sa[1], sb[1])
    }

    /// Batched product of `op(a)` and `op(b)` over a leading batch axis, where `op`
    /// optionally transposes the last two axes: `[B,m,k] x [B,k,n] -> [B,m,n]`.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || Error::Shape(format!("bmm: cannot multiply {sa:?} (t={ta}) by {sb:?} (t={tb})"));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (m, k) = if ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (k2, n) = if tb { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != k2 {
            return Err(bad());
        }
        self.matmul_impl(a, b, ta, tb, sa[0], m, k, n)
    }

    #[allow(clippy::too_many_arguments)]
    fn matmul_impl(
        &mut self,
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    ) -> Result<Var> {
        let reps = batch.max(1);
        let mut out = vec![T::zero(); reps * m * n];
        {
            let (av, bv) = (self.value(a).data(), self.value(b).data());
            for r in 0..reps {
                T::gemm(
                    m,
                    k,
                    n,
                    &av[r * m * k..],
                    ta,
                    &bv[r * k * n..],
                    tb,
                    T::zero(),
                    &mut out[r * m * n..(r + 1) * m * n],
                );
            }
        }
        let shape = if batch == 0 { vec![m, n] } else { vec![batch, m, n] };
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b, ta, tb, batch, m, k, n }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "add: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data: Vec<T> =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    /// Adds a `[n]` bias along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap();
        if self.shape(bias) != [n] {
            return Err(Error::Shape(format!(
                "add_bias: bias {:?} does not match last axis of {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let bv = self.value(bias).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            row.iter_mut().zip(&bv).for_each(|(v, &b)| *v += b);
        }
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        let rg = self.needs_grad(&[x, bias]);
        Ok(self.push(t, Op::AddBias { x, bias }, rg))
    }

    /// Position-wise affine map over the last axis: `x[..., in] W[in,out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let inner = *shape.last().unwrap();
        let rows = shape.iter().product::<usize>() / inner;
        let flat = self.reshape(x, &[rows, inner])?;
        let mut y = self.matmul(flat, w)?;
        if let Some(b) = b {
            y = self.add_bias(y, b)?;
        }
        let out = *self.shape(y).last().unwrap();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = out;
        self.reshape(y, &out_shape)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let data = self.value(x).data().iter().map(|&v| v * s).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).expect("shape preserved");
        let rg = self.needs_grad(&[x]);
        self.push(t, Op::Scale { x, s }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self.value(x).data().iter().map(|&v| v.max(T::zero())).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).expect("shape preserved");
        let rg = self.needs_grad(&[x]);
        self.push(t, Op::Relu(x), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = *shape.last().unwrap();
        if n == 0 {
            return Err(Error::Shape("softmax over an empty axis".into()));
        }
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut sum = 0.0f64;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += v.as_f64();
            }
            let inv = 1.0 / sum;
            row.iter_mut().for_each(|v| *v = T::lit(v.as_f64() * inv));
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Softmax(x), rg))
    }

    // ---- shape and reductions ------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        let rg = self.needs_grad(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    /// Swaps the last two axes of a rank-3 tensor: `[B,X,Y] -> [B,Y,X]`.
    pub fn transpose12(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 {
            return Err(Error::Shape(format!("transpose12 expects rank 3, got {s:?}")));
        }
        let (batch, rows, cols) = (s[0], s[1], s[2]);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for b in 0..batch {
            let base = b * rows * cols;
            for r in 0..rows {
                for c in 0..cols {
                    out[base + c * rows + r] = src[base + r * cols + c];
                }
            }
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(Tensor::new(vec![batch, cols, rows], out)?, Op::Transpose { x, batch, rows, cols }, rg))
    }

    /// Mean over `axis`, removing it.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || s.len() < 2 {
            return Err(Error::Shape(format!("mean_axis: axis {axis} invalid for {s:?}")));
        }
        let outer: usize = s[..axis].iter().product();
        let len = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut acc = vec![0.0f64; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let row = &src[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (a, &v) in acc[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *a += v.as_f64();
                }
            }
        }
        let out = acc.into_iter().map(|v| T::lit(v / len as f64)).collect();
        let mut shape = s.clone();
        shape.remove(axis);
        let rg = self.needs_grad(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::MeanAxis { x, outer, len, inner }, rg))
    }

    /// Global average pooling over the temporal axis: `[B,C,T] -> [B,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 3 {
            return Err(Error::Shape(format!(
                "global_avg_pool expects [batch, channels, T], got {:?}",
                self.shape(x)
            )));
        }
        self.mean_axis(x, 2)
    }

    /// Mean of every element, as a `[1]` tensor.
    pub fn reduce_mean(&mut self, x: Var) -> Var {
        let v = self.value(x).data();
        let mean = v.iter().map(|&a| a.as_f64()).sum::<f64>() / v.len() as f64;
        let rg = self.needs_grad(&[x]);
        self.push(Tensor::scalar(T::lit(mean)), Op::ReduceMean(x), rg)
    }

    /// `sum(x * weights)` as a `[1]` tensor; a convenient scalar probe for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return Err(Error::Shape(format!(
                "weighted_sum: {} weights for tensor {:?}",
                weights.len(),
                self.shape(x)
            )));
        }
        let s: f64 = self.value(x).data().iter().zip(&weights).map(|(&a, &w)| a.as_f64() * w.as_f64()).sum();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(Tensor::scalar(T::lit(s)), Op::WeightedSum { x, weights }, rg))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?).to_vec();
        if axis >= first.len() {
            return Err(Error::Shape(format!("concat: axis {axis} invalid for {first:?}")));
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut total = 0;
        let mut saved = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s[..axis] != first[..axis]
                || s[axis + 1..] != first[axis + 1..]
            {
                return Err(Error::Shape(format!("concat: {s:?} incompatible with {first:?} on axis {axis}")));
            }
            total += s[axis];
            saved.push((p, s[axis]));
        }
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &(p, len) in &saved {
                let d = self.value(p).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let rg = self.needs_grad(parts);
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat { parts: saved, outer, inner }, rg))
    }

    /// Mean negative log-likelihood of the true class under row-wise probabilities
    /// `probs [n, classes]`, with probabilities clamped below at `floor`.
    ///
    /// For two classes this is the binary cross-entropy of the positive-class probability.
    pub fn bce(&mut self, probs: Var, labels: &[usize], floor: T) -> Result<Var> {
        let s = self.shape(probs).to_vec();
        if labels.is_empty() {
            return Err(Error::Shape("bce over an empty batch".into()));
        }
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::Shape(format!("bce: probs {s:?} vs {} labels", labels.len())));
        }
        let classes = s[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Shape(format!("bce: label {bad} out of range for {classes} classes")));
        }
        let p = self.value(probs).data();
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -p[i * classes + l].max(floor).as_f64().ln())
            .sum();
        let loss = T::lit(total / labels.len() as f64);
        let rg = self.needs_grad(&[probs]);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { probs, labels: labels.to_vec(), floor }, rg))
    }

    // ---- backward ------------------------------------------------------------------

    /// Reverse-mode sweep from a single-element `loss`. Each node is visited once, after
    /// every consumer recorded later in the graph. A graph can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Graph("backward already ran on this graph; record a new forward pass".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a single-element loss, got {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        let Graph { nodes, grads, .. } = self;
        for i in (0..=loss.0).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            backward_node(nodes, i, &gout, grads);
            grads[i] = Some(gout);
        }
        Ok(())
    }

    /// Adds gradients of every parameter leaf into the store's gradient buffers.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>) {
        for (node, grad) in self.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, grad) {
                let entry = store.get_mut(*id);
                entry.grad.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
            }
        }
    }
}

/// Gradient buffer of `v`, allocated on first use; `None` for constants.
pub(crate) fn grad_of<'a, T: Scalar>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
}

fn backward_node<T: Scalar>(nodes: &[Node<T>], i: usize, gout: &[T], grads: &mut [Option<Vec<T>>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Input | Op::Param(_) => {}
        &Op::MatMul { a, b, ta, tb, batch, m, k, n } => {
            let reps = batch.max(1);
            let av = nodes[a.0].value.data();
            let bv = nodes[b.0].value.data();
            if let Some(ga) = grad_of(nodes, grads, a) {
                for r in 0..reps {
                    let dc = &gout[r * m * n..];
                    let bb = &bv[r * k * n..];
                    let da = &mut ga[r * m * k..(r + 1) * m * k];
                    if ta {
                        T::gemm(k, n, m, bb, tb, dc, true, T::one(), da);
                    } else {
                        T::gemm(m, n, k, dc, false, bb, !tb, T::one(), da);
                    }
                }
            }
            if let Some(gb) = grad_of(nodes, grads, b) {
                for r in 0..reps {
                    let dc = &gout[r * m * n..];
                    let aa = &av[r * m * k..];
                    let db = &mut gb[r * k * n..(r + 1) * k * n];
                    if tb {
                        T::gemm(n, m, k, dc, true, aa, ta, T::one(), db);
                    } else {
                        T::gemm(k, m, n, aa, !ta, dc, false, T::one(), db);
                    }
                }
            }
        }
        &Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(g) = grad_of(nodes, grads, v) {
                    g.iter_mut().zip(gout).for_each(|(x, &y)| *x += y);
                }
            }
        }
        &Op::AddBias { x, bias } => {
            if let Some(g) = grad_of(nodes, grads, x) {
                g.iter_mut().zip(gout).for_each(|(a, &b)| *a += b);
            }
            if let Some(g) = grad_of(nodes, grads, bias) {
                let n = g.len();
                let mut acc = vec![0.0f64; n];
                for row in gout.chunks(n) {
                    acc.iter_mut().zip(row).for_each(|(a, &b)| *a += b.as_f64());
                }
                g.iter_mut().zip(acc).for_each(|(a, b)| *a += T::lit(b));
            }
        }
        &Op::Scale { x, s } => {
            if let Some(g) = grad_of(nodes, grads, x) {
                g.iter_mut().zip(gout).for_each(|(a, &b)| *a += b * s);
            }
        }
        &Op::Relu(x) => {
            let xv = nodes[x.0].value.data();
            if let Some(g) = grad_of(nodes, grads, x) {
                for ((a, &d), &v) in g.iter_mut().zip(gout).zip(xv) {
                    if v > T::zero() {
                        *a += d;
                    }
                }
            }
        }
        &Op::Softmax(x) => {
            let y = node.value.data();
            let n = *node.value.shape().last().unwrap();
            if let Some(g) = grad_of(nodes, grads, x) {
                for ((gr, yr), dr) in g.chunks_mut(n).zip(y.chunks(n)).zip(gout.chunks(n)) {
                    let dot: f64 = yr.iter().zip(dr).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum();
                    for ((a, &yy), &dd) in gr.iter_mut().zip(yr).zip(dr) {
                        *a += T::lit(yy.as_f64() * (dd.as_f64() - dot));
                    }
                }
            }
        }
        Op::Conv1d(saved) => super::conv::conv1d_backward(nodes, saved, gout, grads),
        Op::BatchNorm(saved) => super::norm::batchnorm_backward(nodes, saved, gout, grads),
        &Op::MeanAxis { x, outer, len, inner } => {
            if let Some(g) = grad_of(nodes, grads, x) {
                let s = T::lit(1.0 / len as f64);
                for o in 0..outer {
                    let src = &gout[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let dst = &mut g[(o * len + l) * inner..(o * len + l + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b * s);
                    }
                }
            }
        }
        &Op::Reshape(x) => {
            if let Some(g) = grad_of(nodes, grads, x) {
                g.iter_mut().zip(gout).for_each(|(a, &b)| *a += b);
            }
        }
        &Op::Transpose { x, batch, rows, cols } => {
            if let Some(g) = grad_of(nodes, grads, x) {
                for b in 0..batch {
                    let base = b * rows * cols;
                    for r in 0..rows {
                        for c in 0..cols {
                            g[base + r * cols + c] += gout[base + c * rows + r];
                        }
                    }
                }
            }
        }
        Op::Concat { parts, outer, inner } => {
            let total: usize = parts.iter().map(|p| p.1).sum();
            let mut offset = 0;
            for &(p, len) in parts {
                if let Some(g) = grad_of(nodes, grads, p) {
                    for o in 0..*outer {
                        let src = &gout[(o * total + offset) * inner..(o * total + offset + len) * inner];
                        let dst = &mut g[o * len * inner..(o + 1) * len * inner];
                        dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
                    }
                }
                offset += len;
            }
        }
        &Op::ReduceMean(x) => {
            if let Some(g) = grad_of(nodes, grads, x) {
                let s = gout[0] / T::lit(g.len() as f64);
                g.iter_mut().for_each(|a| *a += s);
            }
        }
        Op::WeightedSum { x, weights } => {
            if let Some(g) = grad_of(nodes, grads, *x) {
                g.iter_mut().zip(weights).for_each(|(a, &w)| *a += gout[0] * w);
            }
        }
        Op::Bce { probs, labels, floor } => {
            let p = nodes[probs.0].value.data();
            let classes = nodes[probs.0].value.shape()[1];
            if let Some(g) = grad_of(nodes, grads, *probs) {
                let n = T::lit(labels.len() as f64);
                for (i, &l) in labels.iter().enumerate() {
                    let pv = p[i * classes + l];
                    if pv > *floor {
                        g[i * classes + l] -= gout[0] / (n * pv);
                    }
                }
            }
        }
    }
}
