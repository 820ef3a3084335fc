//! Layer-level forward operations, their graph-recording twins, and
//! parameter initialization.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::graph::{BatchStats, Graph, NodeId};
use crate::nn::kernels::{self, AttentionScratch, AttentionWeights};
use crate::nn::{ParamStore, Tensor};
use crate::scalar::Scalar;

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

fn name(prefix: &str, leaf: &str) -> String {
    format!("{prefix}.{leaf}")
}

// ---------------------------------------------------------------------------
// initialization

/// Uniform(-1/√fan_in, 1/√fan_in) weights, zero bias.
pub fn init_dense<T: Scalar, R: Rng>(
    store: &mut ParamStore<T>,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<()> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = (0..fan_in * fan_out)
        .map(|_| T::of(rng.gen_range(-bound..bound)))
        .collect();
    store.insert(&name(prefix, "weight"), Tensor::matrix(fan_in, fan_out, w)?, true)?;
    store.insert(&name(prefix, "bias"), Tensor::zeros(&[fan_out]), true)?;
    Ok(())
}

pub fn init_layer_norm<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, dim: usize) -> Result<()> {
    store.insert(&name(prefix, "gain"), Tensor::filled(&[dim], T::one()), true)?;
    store.insert(&name(prefix, "bias"), Tensor::zeros(&[dim]), true)?;
    Ok(())
}

pub fn init_batch_norm<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, dim: usize) -> Result<()> {
    init_layer_norm(store, prefix, dim)?;
    store.insert(&name(prefix, "running_mean"), Tensor::zeros(&[dim]), false)?;
    store.insert(&name(prefix, "running_var"), Tensor::filled(&[dim], T::one()), false)?;
    Ok(())
}

pub fn init_attention<T: Scalar, R: Rng>(
    store: &mut ParamStore<T>,
    prefix: &str,
    d_model: usize,
    rng: &mut R,
) -> Result<()> {
    for proj in ["q", "k", "v", "out"] {
        init_dense(store, &name(prefix, proj), d_model, d_model, rng)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plain forward operations

fn as_matrix<T: Scalar>(x: &Tensor<T>) -> (usize, usize) {
    (x.rows(), x.cols())
}

/// `y = xW + b` with `W` and `b` read from `{prefix}.weight` / `{prefix}.bias`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, params: &ParamStore<T>, prefix: &str) -> Result<Tensor<T>> {
    let w = params.get(&name(prefix, "weight"))?;
    let b = params.get(&name(prefix, "bias"))?;
    let (m, k) = as_matrix(x);
    if w.rows() != k || b.len() != w.cols() {
        return Err(Error::param(format!(
            "dense `{prefix}`: input has {k} features, weight is {:?}, bias {}",
            w.shape(),
            b.len()
        )));
    }
    let n = w.cols();
    let mut out = vec![T::zero(); m * n];
    kernels::dense(x.data(), w.data(), b.data(), m, k, n, &mut out);
    Tensor::matrix(m, n, out)
}

pub fn attention_weights<'a, T: Scalar>(
    params: &'a ParamStore<T>,
    prefix: &str,
) -> Result<AttentionWeights<'a, T>> {
    let get = |proj: &str, leaf: &str| -> Result<&'a [T]> {
        Ok(params.get(&format!("{prefix}.{proj}.{leaf}"))?.data())
    };
    Ok(AttentionWeights {
        wq: get("q", "weight")?,
        bq: get("q", "bias")?,
        wk: get("k", "weight")?,
        bk: get("k", "bias")?,
        wv: get("v", "weight")?,
        bv: get("v", "bias")?,
        wo: get("out", "weight")?,
        bo: get("out", "bias")?,
    })
}

/// Multi-head self-attention over `tokens[seq × d_model]`.
pub fn multi_head_attention<T: Scalar>(
    tokens: &Tensor<T>,
    params: &ParamStore<T>,
    prefix: &str,
    n_heads: usize,
) -> Result<Tensor<T>> {
    let (seq, d) = as_matrix(tokens);
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::param(format!(
            "d_model {d} is not divisible by {n_heads} heads"
        )));
    }
    let w = attention_weights(params, prefix)?;
    if w.wq.len() != d * d {
        return Err(Error::param(format!(
            "attention `{prefix}` projections do not match d_model {d}"
        )));
    }
    let mut scratch = AttentionScratch::new(seq, d);
    let mut out = vec![T::zero(); seq * d];
    kernels::attention(tokens.data(), seq, d, n_heads, &w, &mut scratch, &mut out);
    Tensor::matrix(seq, d, out)
}

pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = as_matrix(x);
    if gain.len() != n || bias.len() != n {
        return Err(Error::param("layer norm gain/bias must match the last dimension"));
    }
    let mut out = vec![T::zero(); m * n];
    kernels::layer_norm(x.data(), gain.data(), bias.data(), &mut out, None);
    Tensor::matrix(m, n, out)
}

/// Batch normalization with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gain: Vec<T>,
    pub bias: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gain: vec![T::one(); dim],
            bias: vec![T::zero(); dim],
            running_mean: vec![T::zero(); dim],
            running_var: vec![T::one(); dim],
            momentum: T::of(BATCH_NORM_MOMENTUM),
            eps: T::of(BATCH_NORM_EPS),
        }
    }

    /// Training mode normalizes by batch statistics and updates the running
    /// statistics; inference mode uses the running statistics.
    pub fn forward(&mut self, x: &Tensor<T>, training: bool) -> Result<Tensor<T>> {
        let (m, n) = as_matrix(x);
        if n != self.gain.len() {
            return Err(Error::param("batch norm feature dimension mismatch"));
        }
        if !training {
            let mut out = x.data().to_vec();
            for row in out.chunks_exact_mut(n) {
                batch_norm_infer_row(row, &self.gain, &self.bias, &self.running_mean, &self.running_var, self.eps);
            }
            return Tensor::matrix(m, n, out);
        }
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let gi = g.input(Tensor::matrix(1, n, self.gain.clone())?);
        let bi = g.input(Tensor::matrix(1, n, self.bias.clone())?);
        let (y, stats) = g.batch_norm(xi, gi, bi, self.eps)?;
        update_running_stats(&mut self.running_mean, &mut self.running_var, &stats, self.momentum);
        Ok(g.value(y).clone())
    }
}

/// Batch norm forward using (and in training, updating) `state`.
pub fn batch_norm_forward<T: Scalar>(x: &Tensor<T>, state: &mut BatchNorm<T>, training: bool) -> Result<Tensor<T>> {
    state.forward(x, training)
}

/// In-place inference-mode batch norm of one row.
#[inline]
pub fn batch_norm_infer_row<T: Scalar>(row: &mut [T], gain: &[T], bias: &[T], mean: &[T], var: &[T], eps: T) {
    for c in 0..row.len() {
        row[c] = (row[c] - mean[c]) / (var[c] + eps).sqrt() * gain[c] + bias[c];
    }
}

/// Exponential update; the running variance uses the unbiased batch variance.
pub fn update_running_stats<T: Scalar>(mean: &mut [T], var: &mut [T], stats: &BatchStats<T>, momentum: T) {
    let b = T::of_usize(stats.batch);
    let unbias = b / (b - T::one());
    for c in 0..mean.len() {
        mean[c] = (T::one() - momentum) * mean[c] + momentum * stats.mean[c];
        var[c] = (T::one() - momentum) * var[c] + momentum * stats.var[c] * unbias;
    }
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    kernels::relu_in_place(out.data_mut());
    out
}

/// Inverted dropout; the identity outside training.
pub fn dropout<T: Scalar, R: Rng>(x: &Tensor<T>, rate: f64, training: bool, rng: &mut R) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::param(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = if rng.gen::<f64>() < rate { T::zero() } else { *v * keep };
    }
    Ok(out)
}

pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    let c = x.cols();
    kernels::softmax_rows(out.data_mut(), c);
    out
}

pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::param("mse needs equal, non-empty inputs"));
    }
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / T::of_usize(pred.len()))
}

// ---------------------------------------------------------------------------
// graph-recording twins

pub fn dense_graph<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId, prefix: &str) -> Result<NodeId> {
    let w = g.param(store, &name(prefix, "weight"))?;
    let b = g.param(store, &name(prefix, "bias"))?;
    let h = g.matmul(x, w)?;
    g.add_bias(h, b)
}

pub fn layer_norm_graph<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId, prefix: &str) -> Result<NodeId> {
    let gain = g.param(store, &name(prefix, "gain"))?;
    let bias = g.param(store, &name(prefix, "bias"))?;
    g.layer_norm(x, gain, bias)
}

pub fn batch_norm_graph<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    x: NodeId,
    prefix: &str,
) -> Result<(NodeId, BatchStats<T>)> {
    let gain = g.param(store, &name(prefix, "gain"))?;
    let bias = g.param(store, &name(prefix, "bias"))?;
    g.batch_norm(x, gain, bias, T::of(BATCH_NORM_EPS))
}

pub fn attention_graph<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    x: NodeId,
    prefix: &str,
    n_heads: usize,
) -> Result<NodeId> {
    let d = g.value(x).cols();
    if n_heads == 0 || !d.is_multiple_of(n_heads) {
        return Err(Error::param(format!(
            "d_model {d} is not divisible by {n_heads} heads"
        )));
    }
    let dh = d / n_heads;
    let q = dense_graph(g, store, x, &name(prefix, "q"))?;
    let k = dense_graph(g, store, x, &name(prefix, "k"))?;
    let v = dense_graph(g, store, x, &name(prefix, "v"))?;
    let scale = T::one() / T::of_usize(dh).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, scale);
        let probs = g.softmax_rows(scores);
        heads.push(g.matmul(probs, vh)?);
    }
    let concat = g.concat_cols(&heads)?;
    dense_graph(g, store, concat, &name(prefix, "out"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with_dense(w: Vec<f64>, k: usize, n: usize, b: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("fc.weight", Tensor::matrix(k, n, w).unwrap(), true).unwrap();
        s.insert("fc.bias", Tensor::new(vec![n], b).unwrap(), true).unwrap();
        s
    }

    #[test]
    fn dense_examples() {
        let s = store_with_dense(vec![1.0, 1.0], 2, 1, vec![0.5]);
        let y = dense_forward(&Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap(), &s, "fc").unwrap();
        assert_eq!(y.data(), &[3.5]);

        let s = store_with_dense(vec![1.0, 0.0, 0.0, 1.0], 2, 2, vec![0.0, 0.0]);
        let x = Tensor::matrix(2, 2, vec![0.3, -1.0, 2.0, 5.0]).unwrap();
        assert_eq!(dense_forward(&x, &s, "fc").unwrap(), x);

        let s = store_with_dense(vec![3.0, -2.0, 7.0, 1.0], 2, 2, vec![0.25, -4.0]);
        let y = dense_forward(&Tensor::zeros(&[3, 2]), &s, "fc").unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), &[0.25, -4.0]);
        }
        assert!(dense_forward(&Tensor::zeros(&[3, 3]), &s, "fc").is_err());
    }

    fn attention_store(d: usize, seed: u64) -> ParamStore<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        init_attention(&mut s, "att", d, &mut rng).unwrap();
        // non-zero biases so they are exercised
        for p in s.iter_mut() {
            if p.name.ends_with("bias") {
                for v in p.value.data_mut() {
                    *v = rng.gen_range(-0.5..0.5);
                }
            }
        }
        s
    }

    /// Nested-loop reference attention.
    fn naive_attention(x: &[Vec<f64>], s: &ParamStore<f64>, heads: usize) -> Vec<Vec<f64>> {
        let d = x[0].len();
        let dh = d / heads;
        let proj = |p: &str, v: &[f64]| -> Vec<f64> {
            let w = s.get(&format!("att.{p}.weight")).unwrap();
            let b = s.get(&format!("att.{p}.bias")).unwrap();
            (0..d)
                .map(|j| b.data()[j] + (0..d).map(|i| v[i] * w.at(i, j)).sum::<f64>())
                .collect()
        };
        let q: Vec<_> = x.iter().map(|t| proj("q", t)).collect();
        let k: Vec<_> = x.iter().map(|t| proj("k", t)).collect();
        let v: Vec<_> = x.iter().map(|t| proj("v", t)).collect();
        let mut concat = vec![vec![0.0; d]; x.len()];
        for h in 0..heads {
            for t in 0..x.len() {
                let scores: Vec<f64> = (0..x.len())
                    .map(|u| (0..dh).map(|c| q[t][h * dh + c] * k[u][h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in 0..dh {
                    concat[t][h * dh + c] = (0..x.len()).map(|u| e[u] / z * v[u][h * dh + c]).sum();
                }
            }
        }
        concat.iter().map(|c| proj("out", c)).collect()
    }

    #[test]
    fn attention_matches_naive_oracle() {
        let s = attention_store(8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..3).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y = multi_head_attention(&Tensor::from_rows(&rows).unwrap(), &s, "att", 2).unwrap();
        let oracle = naive_attention(&rows, &s, 2);
        for t in 0..3 {
            for c in 0..8 {
                assert!((y.at(t, c) - oracle[t][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn attention_single_token_is_value_projection() {
        let s = attention_store(8, 5);
        let x = Tensor::matrix(1, 8, (0..8).map(|v| v as f64 * 0.1 - 0.3).collect()).unwrap();
        let y = multi_head_attention(&x, &s, "att", 4).unwrap();
        let v = dense_forward(&x, &s, "att.v").unwrap();
        let expect = dense_forward(&v, &s, "att.out").unwrap();
        assert!(y.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn attention_identical_tokens_give_identical_rows() {
        let s = attention_store(8, 6);
        let row: Vec<f64> = (0..8).map(|v| (v as f64).sin()).collect();
        let y = multi_head_attention(&Tensor::from_rows(&[row.clone(), row]).unwrap(), &s, "att", 2).unwrap();
        assert_eq!(y.row(0), y.row(1));
    }

    #[test]
    fn attention_rejects_indivisible_heads() {
        let s = attention_store(8, 7);
        assert!(matches!(
            multi_head_attention(&Tensor::zeros(&[2, 8]), &s, "att", 3),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn attention_output_pre_projection_is_convex_in_values() {
        let s = attention_store(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let v = dense_forward(&x, &s, "att.v").unwrap();
        // run graph version to read the pre-projection concat
        let mut g = Graph::new();
        let xi = g.input(x.clone());
        let out = attention_graph(&mut g, &s, xi, "att", 2).unwrap();
        let full = g.value(out).clone();
        assert!(full.max_abs_diff(&multi_head_attention(&x, &s, "att", 2).unwrap()) < 1e-12);
        // concat node is the input of the final matmul: recompute per head via naive softmax bounds
        for c in 0..8 {
            let lo = (0..5).map(|t| v.at(t, c)).fold(f64::MAX, f64::min);
            let hi = (0..5).map(|t| v.at(t, c)).fold(f64::MIN, f64::max);
            let oracle = naive_concat_col(&rows, &s, 2, c);
            for t in 0..5 {
                assert!(oracle[t] >= lo - 1e-12 && oracle[t] <= hi + 1e-12);
            }
        }
    }

    fn naive_concat_col(x: &[Vec<f64>], s: &ParamStore<f64>, heads: usize, col: usize) -> Vec<f64> {
        let d = x[0].len();
        let dh = d / heads;
        let h = col / dh;
        let proj = |p: &str, v: &[f64]| -> Vec<f64> {
            let w = s.get(&format!("att.{p}.weight")).unwrap();
            let b = s.get(&format!("att.{p}.bias")).unwrap();
            (0..d).map(|j| b.data()[j] + (0..d).map(|i| v[i] * w.at(i, j)).sum::<f64>()).collect()
        };
        let q: Vec<_> = x.iter().map(|t| proj("q", t)).collect();
        let k: Vec<_> = x.iter().map(|t| proj("k", t)).collect();
        let v: Vec<_> = x.iter().map(|t| proj("v", t)).collect();
        (0..x.len())
            .map(|t| {
                let sc: Vec<f64> = (0..x.len())
                    .map(|u| (0..dh).map(|c| q[t][h * dh + c] * k[u][h * dh + c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let mx = sc.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = sc.iter().map(|v| (v - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                (0..x.len()).map(|u| e[u] / z * v[u][col]).sum()
            })
            .collect()
    }

    #[test]
    fn layer_norm_examples() {
        let one = Tensor::filled(&[2], 1.0);
        let zero = Tensor::zeros(&[2]);
        let y = layer_norm(&Tensor::matrix(1, 2, vec![3.0, 3.0]).unwrap(), &one, &zero).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
        let y = layer_norm(&Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap(), &one, &zero).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - expect).abs() < 1e-15);
        assert!((y.data()[1] + expect).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::matrix(4, 6, (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let bias = Tensor::new(vec![6], vec![0.1, 0.2, 0.3, -0.4, 0.0, 0.6]).unwrap();
        let y = layer_norm(&x, &Tensor::filled(&[6], 1.0), &bias).unwrap();
        let bias_mean = bias.data().iter().sum::<f64>() / 6.0;
        for r in 0..4 {
            let mean = y.row(r).iter().sum::<f64>() / 6.0;
            assert!((mean - bias_mean).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_norm_examples() {
        // column mean 5, population variance 4
        let x = Tensor::matrix(4, 2, vec![3.0, 1.0, 7.0, 1.0, 3.0, 1.0, 7.0, 1.0]).unwrap();
        let mut bn = BatchNorm::<f64>::new(2);
        let y = bn.forward(&x, true).unwrap();
        for r in 0..4 {
            let expect = (x.at(r, 0) - 5.0) / (4.0f64 + 1e-5).sqrt();
            assert!((y.at(r, 0) - expect).abs() < 1e-12);
            // constant column collapses to zero
            assert_eq!(y.at(r, 1), 0.0);
        }
        assert!((bn.running_mean[0] - 0.5).abs() < 1e-12);

        let mut fresh = BatchNorm::<f64>::new(2);
        let y = fresh.forward(&x, false).unwrap();
        assert!(y.max_abs_diff(&x.clone()) < 1e-4);

        assert!(fresh.forward(&Tensor::zeros(&[1, 2]), true).is_err());
    }

    #[test]
    fn elementwise_primitives() {
        let x = Tensor::matrix(1, 2, vec![-3.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.5, false, &mut rng).unwrap(), x);
        assert!(dropout(&x, 1.0, true, &mut rng).is_err());
        assert_eq!(mse_loss(&x, &x).unwrap(), 0.0);
        let s = softmax(&Tensor::matrix(2, 3, vec![0.1, 5.0, -2.0, 3.0, 3.0, 3.0]).unwrap());
        for r in 0..2 {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_keeps_expectation() {
        let x = Tensor::filled(&[100, 100], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = dropout(&x, 0.1, true, &mut rng).unwrap();
        let mean = y.data().iter().sum::<f64>() / 10000.0;
        assert!((mean - 1.0).abs() < 0.02);
    }
}
