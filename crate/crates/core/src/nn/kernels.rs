//! Slice-level numeric kernels. These never allocate, so both the training
//! graph and the real-time inference path are built from them.

use crate::scalar::Scalar;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// `out[m×n] = a[m×k] · b[k×n]`
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    out[..m * n].iter_mut().for_each(|v| *v = T::zero());
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`
pub fn matmul_bt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
pub fn matmul_at_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `x[r×c] += bias[c]` on every row.
pub fn add_bias<T: Scalar>(x: &mut [T], bias: &[T]) {
    let c = bias.len();
    for row in x.chunks_exact_mut(c) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// `out = x·W + b` for `x[m×k]`, `W[k×n]`.
pub fn dense<T: Scalar>(x: &[T], w: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    matmul(x, w, m, k, n, out);
    add_bias(&mut out[..m * n], b);
}

/// Row-wise layer norm. Writes per-row mean and reciprocal std when requested.
pub fn layer_norm<T: Scalar>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    out: &mut [T],
    mut stats: Option<(&mut [T], &mut [T])>,
) {
    let c = gain.len();
    let eps = T::of(LAYER_NORM_EPS);
    let inv_c = T::one() / T::of_usize(c);
    for (r, (xr, or)) in x.chunks_exact(c).zip(out.chunks_exact_mut(c)).enumerate() {
        let mean = xr.iter().copied().sum::<T>() * inv_c;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
        let rstd = T::one() / (var + eps).sqrt();
        for ((o, &v), (&g, &b)) in or.iter_mut().zip(xr).zip(gain.iter().zip(bias)) {
            *o = (v - mean) * rstd * g + b;
        }
        if let Some((m, s)) = stats.as_mut() {
            m[r] = mean;
            s[r] = rstd;
        }
    }
}

/// Numerically stable row-wise softmax in place.
pub fn softmax_rows<T: Scalar>(x: &mut [T], cols: usize) {
    for row in x.chunks_exact_mut(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = T::one() / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
}

#[inline]
pub fn relu_in_place<T: Scalar>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = v.max(T::zero()));
}

/// Logistic function kept strictly inside (0, 1) even where it saturates.
#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    let y = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let eps = T::epsilon();
    y.max(eps).min(T::one() - eps)
}

/// Projection weights of one attention block, borrowed from a parameter store.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a, T> {
    pub wq: &'a [T],
    pub bq: &'a [T],
    pub wk: &'a [T],
    pub bk: &'a [T],
    pub wv: &'a [T],
    pub bv: &'a [T],
    pub wo: &'a [T],
    pub bo: &'a [T],
}

/// Scratch buffers for [`attention`], sized for a maximum sequence length.
#[derive(Debug, Clone)]
pub struct AttentionScratch<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    scores: Vec<T>,
    concat: Vec<T>,
    head_q: Vec<T>,
    head_k: Vec<T>,
    head_v: Vec<T>,
    head_out: Vec<T>,
}

impl<T: Scalar> AttentionScratch<T> {
    pub fn new(seq: usize, d_model: usize) -> Self {
        let z = |n| vec![T::zero(); n];
        AttentionScratch {
            q: z(seq * d_model),
            k: z(seq * d_model),
            v: z(seq * d_model),
            scores: z(seq * seq),
            concat: z(seq * d_model),
            head_q: z(seq * d_model),
            head_k: z(seq * d_model),
            head_v: z(seq * d_model),
            head_out: z(seq * d_model),
        }
    }
}

fn gather_head<T: Scalar>(src: &[T], seq: usize, d: usize, start: usize, dh: usize, dst: &mut [T]) {
    for t in 0..seq {
        dst[t * dh..(t + 1) * dh].copy_from_slice(&src[t * d + start..t * d + start + dh]);
    }
}

/// Multi-head scaled dot-product self-attention over `x[seq×d]`.
pub fn attention<T: Scalar>(
    x: &[T],
    seq: usize,
    d: usize,
    n_heads: usize,
    w: &AttentionWeights<'_, T>,
    s: &mut AttentionScratch<T>,
    out: &mut [T],
) {
    let dh = d / n_heads;
    dense(x, w.wq, w.bq, seq, d, d, &mut s.q);
    dense(x, w.wk, w.bk, seq, d, d, &mut s.k);
    dense(x, w.wv, w.bv, seq, d, d, &mut s.v);
    let scale = T::one() / T::of_usize(dh).sqrt();
    for h in 0..n_heads {
        let start = h * dh;
        gather_head(&s.q, seq, d, start, dh, &mut s.head_q);
        gather_head(&s.k, seq, d, start, dh, &mut s.head_k);
        gather_head(&s.v, seq, d, start, dh, &mut s.head_v);
        matmul_bt(&s.head_q[..seq * dh], &s.head_k[..seq * dh], seq, dh, seq, &mut s.scores);
        s.scores[..seq * seq].iter_mut().for_each(|v| *v *= scale);
        softmax_rows(&mut s.scores[..seq * seq], seq);
        matmul(&s.scores[..seq * seq], &s.head_v[..seq * dh], seq, seq, dh, &mut s.head_out);
        for t in 0..seq {
            s.concat[t * d + start..t * d + start + dh]
                .copy_from_slice(&s.head_out[t * dh..(t + 1) * dh]);
        }
    }
    dense(&s.concat[..seq * d], w.wo, w.bo, seq, d, d, out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.5, -1.0, 2.0, 0.0, 1.0]; // 3x2
        let mut out = [0.0; 4];
        matmul(&a, &b, 2, 3, 2, &mut out);
        assert_eq!(out, [-1.0, 7.5, -1.0, 18.0]);
        // b transposed as 2x3
        let bt = [1.0, -1.0, 0.0, 0.5, 2.0, 1.0];
        let mut out2 = [0.0; 4];
        matmul_bt(&a, &bt, 2, 3, 2, &mut out2);
        assert_eq!(out, out2);
        let mut acc = [0.0; 6];
        matmul_at_acc(&a, &out, 2, 3, 2, &mut acc);
        assert_eq!(acc, [-5.0, 79.5, -7.0, 105.0, -9.0, 130.5]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut x = [1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0];
        softmax_rows(&mut x, 3);
        assert!((x[..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((x[3..].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_extremes_are_finite() {
        assert!(sigmoid(-800.0f64) > 0.0);
        assert!(sigmoid(800.0f64) < 1.0);
        assert!(sigmoid(40.0f32) < 1.0);
        assert_eq!(sigmoid(0.0f64), 0.5);
    }
}
