//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! Every operation computes its value eagerly when recorded; `backward` walks
//! the tape in reverse and accumulates parameter gradients into the store.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::kernels;
use crate::nn::{ParamStore, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(usize),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Scale(NodeId, T),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        rstd: Vec<T>,
    },
    BatchNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        rstd: Vec<T>,
    },
    BatchNormEval {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        rstd: Vec<T>,
    },
    SoftmaxRows(NodeId),
    Transpose(NodeId),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize),
    ConcatRows(Vec<NodeId>),
    Reshape(NodeId),
    Dropout(NodeId, Vec<T>),
    Mse(NodeId, Vec<T>),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    /// Normalized activations kept for norm-layer backward passes.
    aux: Vec<T>,
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Per-column batch statistics from a training-mode batch norm.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    pub batch: usize,
}

fn dims<T: Scalar>(t: &Tensor<T>) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.push_aux(value, op, Vec::new())
    }

    fn push_aux(&mut self, value: Tensor<T>, op: Op<T>, aux: Vec<T>) -> NodeId {
        self.nodes.push(Node { value, op, aux });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        dims(self.value(id))
    }

    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        let (r, c) = dims(&t);
        let t = t.reshaped(vec![r, c]).expect("same size");
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<NodeId> {
        let id = store.id(name)?;
        Ok(self.param_by_id(store, id))
    }

    pub fn param_by_id(&mut self, store: &ParamStore<T>, id: usize) -> NodeId {
        let v = &store.param(id).value;
        let (r, c) = dims(v);
        let t = v.clone().reshaped(vec![r, c]).expect("same size");
        self.push(t, Op::Param(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::param(format!(
                "matmul shape mismatch: {m}x{k} · {k2}x{n}"
            )));
        }
        let mut out = vec![T::zero(); m * n];
        kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, n) = self.shape(x);
        if self.value(b).len() != n {
            return Err(Error::param(format!(
                "bias of {} values for {n} columns",
                self.value(b).len()
            )));
        }
        let mut out = self.value(x).data().to_vec();
        kernels::add_bias(&mut out, self.value(b).data());
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::AddBias(x, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::param("add shape mismatch"));
        }
        let (m, n) = self.shape(a);
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Add(a, b)))
    }

    fn map(&mut self, x: NodeId, f: impl Fn(T) -> T, op: Op<T>) -> NodeId {
        let (m, n) = self.shape(x);
        let out = self.value(x).data().iter().map(|&v| f(v)).collect();
        self.push(Tensor::matrix(m, n, out).expect("same size"), op)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn scale(&mut self, x: NodeId, s: T) -> NodeId {
        self.map(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.shape(x);
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::param("layer norm gain/bias must match the last dimension"));
        }
        let mut out = vec![T::zero(); m * n];
        let mut mean = vec![T::zero(); m];
        let mut rstd = vec![T::zero(); m];
        kernels::layer_norm(
            self.value(x).data(),
            self.value(gain).data(),
            self.value(bias).data(),
            &mut out,
            Some((&mut mean, &mut rstd)),
        );
        let xhat: Vec<T> = self
            .value(x)
            .data()
            .chunks_exact(n)
            .enumerate()
            .flat_map(|(r, row)| {
                let (mu, rs) = (mean[r], rstd[r]);
                row.iter().map(move |&v| (v - mu) * rs)
            })
            .collect();
        Ok(self.push_aux(
            Tensor::matrix(m, n, out)?,
            Op::LayerNorm { x, gain, bias, rstd },
            xhat,
        ))
    }

    /// Training-mode batch norm over rows (the batch axis) per column.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: T,
    ) -> Result<(NodeId, BatchStats<T>)> {
        let (m, n) = self.shape(x);
        if m < 2 {
            return Err(Error::param("batch norm in training mode needs a batch of at least 2"));
        }
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(Error::param("batch norm gain/bias must match the feature dimension"));
        }
        let xv = self.value(x).data();
        let inv_m = T::one() / T::of_usize(m);
        let mut mean = vec![T::zero(); n];
        let mut var = vec![T::zero(); n];
        for row in xv.chunks_exact(n) {
            for (mu, &v) in mean.iter_mut().zip(row) {
                *mu += v;
            }
        }
        mean.iter_mut().for_each(|v| *v *= inv_m);
        for row in xv.chunks_exact(n) {
            for ((s, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|v| *v *= inv_m);
        let rstd: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![T::zero(); m * n];
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            for c in 0..n {
                let h = (xv[r * n + c] - mean[c]) * rstd[c];
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        let id = self.push_aux(
            Tensor::matrix(m, n, out)?,
            Op::BatchNorm { x, gain, bias, rstd },
            xhat,
        );
        Ok((id, BatchStats { mean, var, batch: m }))
    }

    /// Inference-mode batch norm with fixed running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        mean: &[T],
        var: &[T],
        eps: T,
    ) -> Result<NodeId> {
        let (m, n) = self.shape(x);
        if self.value(gain).len() != n || mean.len() != n || var.len() != n {
            return Err(Error::param("batch norm statistics must match the feature dimension"));
        }
        let rstd: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let xv = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![T::zero(); m * n];
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            for c in 0..n {
                let h = (xv[r * n + c] - mean[c]) * rstd[c];
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        Ok(self.push_aux(
            Tensor::matrix(m, n, out)?,
            Op::BatchNormEval { x, gain, bias, rstd },
            xhat,
        ))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let (m, n) = self.shape(x);
        let mut out = self.value(x).data().to_vec();
        kernels::softmax_rows(&mut out, n);
        self.push(Tensor::matrix(m, n, out).expect("same size"), Op::SoftmaxRows(x))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let (m, n) = self.shape(x);
        let v = self.value(x).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        self.push(Tensor::matrix(n, m, out).expect("same size"), Op::Transpose(x))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self.shape(x);
        if start + len > n {
            return Err(Error::param("column slice out of range"));
        }
        let v = self.value(x).data();
        let out: Vec<T> = (0..m)
            .flat_map(|r| v[r * n + start..r * n + start + len].iter().copied())
            .collect();
        Ok(self.push(Tensor::matrix(m, len, out)?, Op::SliceCols(x, start)))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let m = self.shape(parts[0]).0;
        if parts.iter().any(|&p| self.shape(p).0 != m) {
            return Err(Error::param("column concat needs equal row counts"));
        }
        let n: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self.shape(x);
        if start + len > m {
            return Err(Error::param("row slice out of range"));
        }
        let out = self.value(x).data()[start * n..(start + len) * n].to_vec();
        Ok(self.push(Tensor::matrix(len, n, out)?, Op::SliceRows(x, start)))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let n = self.shape(parts[0]).1;
        if parts.iter().any(|&p| self.shape(p).1 != n) {
            return Err(Error::param("row concat needs equal column counts"));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let m = out.len() / n.max(1);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::ConcatRows(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let t = self.value(x).clone().reshaped(vec![rows, cols])?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Inverted dropout. Identity when `rate == 0` or not training.
    pub fn dropout<R: Rng>(
        &mut self,
        x: NodeId,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::param(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let (m, n) = self.shape(x);
        let out = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &k)| v * k)
            .collect();
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Dropout(x, mask)))
    }

    /// Mean squared error against a constant target; a 1×1 node.
    pub fn mse(&mut self, pred: NodeId, target: &Tensor<T>) -> Result<NodeId> {
        if self.value(pred).len() != target.len() {
            return Err(Error::param("mse target size mismatch"));
        }
        let n = T::of_usize(target.len());
        let loss = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum::<T>()
            / n;
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, target.data().to_vec())))
    }

    /// Accumulates d(loss)/d(param) into `store` for every parameter reached.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::param("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        fn acc<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, len: usize) -> &mut Vec<T> {
            grads[id.0].get_or_insert_with(|| vec![T::zero(); len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let (m, n) = dims(&node.value);
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => {
                    let p = store.param_mut(*pid);
                    if g.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Numerical(format!(
                            "non-finite gradient for parameter `{}`",
                            p.name
                        )));
                    }
                    for (d, &v) in p.grad.data_mut().iter_mut().zip(&g) {
                        *d += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (_, k) = self.shape(*a);
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let mut ga = vec![T::zero(); m * k];
                    kernels::matmul_bt(&g, bv, m, n, k, &mut ga);
                    add_into(acc(&mut grads, *a, m * k), &ga);
                    let gb = acc(&mut grads, *b, k * n);
                    kernels::matmul_at_acc(av, &g, m, k, n, gb);
                }
                Op::AddBias(x, b) => {
                    add_into(acc(&mut grads, *x, m * n), &g);
                    let gb = acc(&mut grads, *b, n);
                    for row in g.chunks_exact(n) {
                        add_into(gb, row);
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, m * n), &g);
                    add_into(acc(&mut grads, *b, m * n), &g);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    let gx = acc(&mut grads, *x, m * n);
                    for ((d, &gv), &v) in gx.iter_mut().zip(&g).zip(xv) {
                        if v > T::zero() {
                            *d += gv;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let yv = node.value.data();
                    let gx = acc(&mut grads, *x, m * n);
                    for ((d, &gv), &y) in gx.iter_mut().zip(&g).zip(yv) {
                        *d += gv * y * (T::one() - y);
                    }
                }
                Op::Scale(x, s) => {
                    let gx = acc(&mut grads, *x, m * n);
                    for (d, &gv) in gx.iter_mut().zip(&g) {
                        *d += gv * *s;
                    }
                }
                Op::LayerNorm { x, gain, bias, rstd } => {
                    let xhat = &node.aux;
                    let gainv = self.value(*gain).data();
                    let inv_n = T::one() / T::of_usize(n);
                    let mut gx_local = vec![T::zero(); m * n];
                    let mut ggain = vec![T::zero(); n];
                    let mut gbias = vec![T::zero(); n];
                    for r in 0..m {
                        let gr = &g[r * n..(r + 1) * n];
                        let hr = &xhat[r * n..(r + 1) * n];
                        let mut sum_dh = T::zero();
                        let mut sum_dh_h = T::zero();
                        for c in 0..n {
                            let dh = gr[c] * gainv[c];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[c];
                            ggain[c] += gr[c] * hr[c];
                            gbias[c] += gr[c];
                        }
                        for c in 0..n {
                            let dh = gr[c] * gainv[c];
                            gx_local[r * n + c] =
                                rstd[r] * (dh - sum_dh * inv_n - hr[c] * sum_dh_h * inv_n);
                        }
                    }
                    add_into(acc(&mut grads, *x, m * n), &gx_local);
                    add_into(acc(&mut grads, *gain, n), &ggain);
                    add_into(acc(&mut grads, *bias, n), &gbias);
                }
                Op::BatchNorm { x, gain, bias, rstd } => {
                    let xhat = &node.aux;
                    let gainv = self.value(*gain).data();
                    let inv_m = T::one() / T::of_usize(m);
                    let mut sum_dh = vec![T::zero(); n];
                    let mut sum_dh_h = vec![T::zero(); n];
                    let mut ggain = vec![T::zero(); n];
                    let mut gbias = vec![T::zero(); n];
                    for r in 0..m {
                        for c in 0..n {
                            let gv = g[r * n + c];
                            let dh = gv * gainv[c];
                            sum_dh[c] += dh;
                            sum_dh_h[c] += dh * xhat[r * n + c];
                            ggain[c] += gv * xhat[r * n + c];
                            gbias[c] += gv;
                        }
                    }
                    let mut gx_local = vec![T::zero(); m * n];
                    for r in 0..m {
                        for c in 0..n {
                            let dh = g[r * n + c] * gainv[c];
                            gx_local[r * n + c] = rstd[c]
                                * (dh - sum_dh[c] * inv_m - xhat[r * n + c] * sum_dh_h[c] * inv_m);
                        }
                    }
                    add_into(acc(&mut grads, *x, m * n), &gx_local);
                    add_into(acc(&mut grads, *gain, n), &ggain);
                    add_into(acc(&mut grads, *bias, n), &gbias);
                }
                Op::BatchNormEval { x, gain, bias, rstd } => {
                    let xhat = &node.aux;
                    let gainv = self.value(*gain).data();
                    let mut gx_local = vec![T::zero(); m * n];
                    let mut ggain = vec![T::zero(); n];
                    let mut gbias = vec![T::zero(); n];
                    for r in 0..m {
                        for c in 0..n {
                            let gv = g[r * n + c];
                            gx_local[r * n + c] = gv * gainv[c] * rstd[c];
                            ggain[c] += gv * xhat[r * n + c];
                            gbias[c] += gv;
                        }
                    }
                    add_into(acc(&mut grads, *x, m * n), &gx_local);
                    add_into(acc(&mut grads, *gain, n), &ggain);
                    add_into(acc(&mut grads, *bias, n), &gbias);
                }
                Op::SoftmaxRows(x) => {
                    let y = node.value.data();
                    let gx = acc(&mut grads, *x, m * n);
                    for r in 0..m {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for c in 0..n {
                            gx[r * n + c] += yr[c] * (gr[c] - dot);
                        }
                    }
                }
                Op::Transpose(x) => {
                    // node is m×n, input n×m
                    let gx = acc(&mut grads, *x, m * n);
                    for i in 0..m {
                        for j in 0..n {
                            gx[j * m + i] += g[i * n + j];
                        }
                    }
                }
                Op::SliceCols(x, start) => {
                    let (_, xn) = self.shape(*x);
                    let gx = acc(&mut grads, *x, m * xn);
                    for r in 0..m {
                        add_into(&mut gx[r * xn + start..r * xn + start + n], &g[r * n..(r + 1) * n]);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pn = self.shape(p).1;
                        let gp = acc(&mut grads, p, m * pn);
                        for r in 0..m {
                            add_into(
                                &mut gp[r * pn..(r + 1) * pn],
                                &g[r * n + offset..r * n + offset + pn],
                            );
                        }
                        offset += pn;
                    }
                }
                Op::SliceRows(x, start) => {
                    let (xm, _) = self.shape(*x);
                    let gx = acc(&mut grads, *x, xm * n);
                    add_into(&mut gx[start * n..(start + m) * n], &g);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        add_into(acc(&mut grads, p, len), &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Reshape(x) => {
                    add_into(acc(&mut grads, *x, m * n), &g);
                }
                Op::Dropout(x, mask) => {
                    let gx = acc(&mut grads, *x, m * n);
                    for ((d, &gv), &k) in gx.iter_mut().zip(&g).zip(mask) {
                        *d += gv * k;
                    }
                }
                Op::Mse(pred, target) => {
                    let pv = self.value(*pred).data();
                    let scale = g[0] * T::of(2.0) / T::of_usize(target.len());
                    let len = pv.len();
                    let gp = acc(&mut grads, *pred, len);
                    for ((d, &p), &t) in gp.iter_mut().zip(pv).zip(target) {
                        *d += scale * (p - t);
                    }
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
