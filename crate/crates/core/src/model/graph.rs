use rand::Rng;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::weights::{head_prefix, layer_prefix, ModelWeights, HEAD_OUT, POSITIONAL_NAME};
use crate::nn::layers::{attention_graph, batch_norm_graph, dense_graph, layer_norm_graph, BATCH_NORM_EPS};
use crate::nn::{BatchStats, Graph, NodeId, ParamStore, Tensor};
use crate::scalar::Scalar;

/// A minibatch with spectral features already normalized.
#[derive(Debug, Clone)]
pub struct BatchInput<T> {
    pub batch: usize,
    /// `[batch · T × n_bins]`, example-major, oldest frame first.
    pub features: Tensor<T>,
    /// `[batch × frame_length]`.
    pub raw: Tensor<T>,
}

impl<T: Scalar> BatchInput<T> {
    /// Normalizes raw log features with the statistics stored in `weights`.
    pub fn new(
        weights: &ModelWeights<T>,
        features: impl IntoIterator<Item = impl AsRef<[T]>>,
        raw: impl IntoIterator<Item = impl AsRef<[T]>>,
    ) -> Result<Self> {
        let c = &weights.config;
        let mut f = Vec::new();
        let mut batch = 0;
        for ex in features {
            let ex = ex.as_ref();
            if ex.len() != c.context_frames * c.n_bins {
                return Err(Error::param(format!(
                    "example has {} feature values, expected {}",
                    ex.len(),
                    c.context_frames * c.n_bins
                )));
            }
            for row in ex.chunks_exact(c.n_bins) {
                f.extend(
                    row.iter()
                        .zip(weights.norm_mean.iter().zip(&weights.norm_std))
                        .map(|(&v, (&m, &s))| (v - m) / s),
                );
            }
            batch += 1;
        }
        let mut r = Vec::with_capacity(batch * c.frame_length);
        let mut raw_count = 0;
        for ex in raw {
            let ex = ex.as_ref();
            if ex.len() != c.frame_length {
                return Err(Error::param("raw feature length does not match frame_length"));
            }
            r.extend_from_slice(ex);
            raw_count += 1;
        }
        if batch == 0 || raw_count != batch {
            return Err(Error::param(format!(
                "batch needs matching feature ({batch}) and raw ({raw_count}) examples"
            )));
        }
        Ok(BatchInput {
            batch,
            features: Tensor::matrix(batch * c.context_frames, c.n_bins, f)?,
            raw: Tensor::matrix(batch, c.frame_length, r)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput<T> {
    /// `[batch × 2·n_bins]` sigmoid outputs, clean masks then noise masks.
    pub masks: NodeId,
    /// Raw-branch batch statistics when run in training mode.
    pub bn_stats: Option<BatchStats<T>>,
}

/// Records a batched forward pass on `g`. In training mode the raw-branch batch
/// norm uses batch statistics and dropout is active.
pub fn forward_batch<T: Scalar, R: Rng>(
    g: &mut Graph<T>,
    params: &ParamStore<T>,
    config: &ModelConfig,
    input: &BatchInput<T>,
    training: bool,
    rng: &mut R,
) -> Result<BatchOutput<T>> {
    let c = config;
    let (b, tf, seq, d) = (input.batch, c.context_frames, c.seq_len(), c.d_model);
    if input.features.shape() != [b * tf, c.n_bins] || input.raw.shape() != [b, c.frame_length] {
        return Err(Error::param("batch input shapes do not match the model config"));
    }
    let feats = g.input(input.features.clone());
    let spec = dense_graph(g, params, feats, "spec_proj")?;
    let raw_in = g.input(input.raw.clone());
    let raw = dense_graph(g, params, raw_in, "raw_embed")?;
    let (raw, bn_stats) = if training {
        let (y, stats) = batch_norm_graph(g, params, raw, "raw_bn")?;
        (y, Some(stats))
    } else {
        let gain = g.param(params, "raw_bn.gain")?;
        let bias = g.param(params, "raw_bn.bias")?;
        let mean = params.get("raw_bn.running_mean")?.data().to_vec();
        let var = params.get("raw_bn.running_var")?.data().to_vec();
        (g.batch_norm_eval(raw, gain, bias, &mean, &var, T::of(BATCH_NORM_EPS))?, None)
    };
    let pos = g.param(params, POSITIONAL_NAME)?;
    let mut parts = Vec::with_capacity(2 * b);
    for e in 0..b {
        parts.push(g.slice_rows(spec, e * tf, tf)?);
        parts.push(g.slice_rows(raw, e, 1)?);
    }
    let tokens = g.concat_rows(&parts)?;
    let pos_all = g.concat_rows(&vec![pos; b])?;
    let mut x = g.add(tokens, pos_all)?;

    for l in 0..c.n_layers {
        let normed = layer_norm_graph(g, params, x, &layer_prefix(l, "ln1"))?;
        let attn_prefix = layer_prefix(l, "attn");
        let mut heads = Vec::with_capacity(b);
        for e in 0..b {
            let xe = g.slice_rows(normed, e * seq, seq)?;
            heads.push(attention_graph(g, params, xe, &attn_prefix, c.n_heads)?);
        }
        let attn = g.concat_rows(&heads)?;
        let h = g.add(x, attn)?;
        let normed = layer_norm_graph(g, params, h, &layer_prefix(l, "ln2"))?;
        let ff = dense_graph(g, params, normed, &layer_prefix(l, "ff1"))?;
        let ff = g.relu(ff);
        let ff = dense_graph(g, params, ff, &layer_prefix(l, "ff2"))?;
        x = g.add(h, ff)?;
    }

    let mut z = g.reshape(x, b, seq * d)?;
    for i in 0..c.mlp_hidden.len() {
        z = dense_graph(g, params, z, &head_prefix(i))?;
        z = g.relu(z);
        z = g.dropout(z, c.dropout_rate, training, rng)?;
    }
    let logits = dense_graph(g, params, z, HEAD_OUT)?;
    Ok(BatchOutput {
        masks: g.sigmoid(logits),
        bn_stats,
    })
}
