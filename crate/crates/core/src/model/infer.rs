use crate::dsp::RawSegmentFeature;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::config::ModelConfig;
use crate::model::weights::{head_prefix, layer_prefix, ModelWeights, HEAD_OUT, POSITIONAL_NAME};
use crate::nn::kernels::{self, AttentionScratch, AttentionWeights};
use crate::nn::layers::{batch_norm_infer_row, BATCH_NORM_EPS};
use crate::nn::{ParamStore, Tensor};
use crate::scalar::Scalar;

/// Masks for the newest frame of a context window.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPrediction<T> {
    pub clean_mask_frame: Vec<T>,
    pub noise_mask_frame: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
struct DenseIds {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct LayerIds {
    ln1: DenseIds,
    attn: [DenseIds; 4],
    ln2: DenseIds,
    ff1: DenseIds,
    ff2: DenseIds,
}

#[derive(Debug, Clone)]
struct ParamIds {
    spec: DenseIds,
    raw: DenseIds,
    bn: DenseIds,
    bn_mean: usize,
    bn_var: usize,
    pos: usize,
    layers: Vec<LayerIds>,
    head: Vec<DenseIds>,
    out: DenseIds,
}

fn pair(p: &ParamStore<impl Scalar>, prefix: &str, a: &str, b: &str) -> Result<DenseIds> {
    Ok(DenseIds {
        w: p.id(&format!("{prefix}.{a}"))?,
        b: p.id(&format!("{prefix}.{b}"))?,
    })
}

impl ParamIds {
    fn resolve<T: Scalar>(p: &ParamStore<T>, config: &ModelConfig) -> Result<Self> {
        let dense = |prefix: &str| pair(p, prefix, "weight", "bias");
        let norm = |prefix: &str| pair(p, prefix, "gain", "bias");
        let mut layers = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let attn = layer_prefix(i, "attn");
            layers.push(LayerIds {
                ln1: norm(&layer_prefix(i, "ln1"))?,
                attn: [
                    dense(&format!("{attn}.q"))?,
                    dense(&format!("{attn}.k"))?,
                    dense(&format!("{attn}.v"))?,
                    dense(&format!("{attn}.out"))?,
                ],
                ln2: norm(&layer_prefix(i, "ln2"))?,
                ff1: dense(&layer_prefix(i, "ff1"))?,
                ff2: dense(&layer_prefix(i, "ff2"))?,
            });
        }
        Ok(ParamIds {
            spec: dense("spec_proj")?,
            raw: dense("raw_embed")?,
            bn: norm("raw_bn")?,
            bn_mean: p.id("raw_bn.running_mean")?,
            bn_var: p.id("raw_bn.running_var")?,
            pos: p.id(POSITIONAL_NAME)?,
            layers,
            head: (0..config.mlp_hidden.len())
                .map(|i| dense(&head_prefix(i)))
                .collect::<Result<_>>()?,
            out: dense(HEAD_OUT)?,
        })
    }
}

/// Preallocated buffers for single-window inference. After construction,
/// [`InferenceWorkspace::run`] performs no heap allocation.
#[derive(Debug, Clone)]
pub struct InferenceWorkspace<T> {
    config: ModelConfig,
    n_params: usize,
    ids: ParamIds,
    features: Vec<T>,
    raw: Vec<T>,
    norm_row: Vec<T>,
    tokens: Vec<T>,
    normed: Vec<T>,
    sub: Vec<T>,
    ff: Vec<T>,
    scratch: AttentionScratch<T>,
    head: Vec<Vec<T>>,
    logits: Vec<T>,
}

impl<T: Scalar> InferenceWorkspace<T> {
    pub fn new(weights: &ModelWeights<T>) -> Result<Self> {
        weights.validate()?;
        let c = &weights.config;
        let seq = c.seq_len();
        let d = c.d_model;
        Ok(InferenceWorkspace {
            config: c.clone(),
            n_params: weights.params.len(),
            ids: ParamIds::resolve(&weights.params, c)?,
            features: vec![T::zero(); c.context_frames * c.n_bins],
            raw: vec![T::zero(); c.frame_length],
            norm_row: vec![T::zero(); c.n_bins],
            tokens: vec![T::zero(); seq * d],
            normed: vec![T::zero(); seq * d],
            sub: vec![T::zero(); seq * d],
            ff: vec![T::zero(); seq * c.ff_hidden],
            scratch: AttentionScratch::new(seq, d),
            head: c.mlp_hidden.iter().map(|&h| vec![T::zero(); h]).collect(),
            logits: vec![T::zero(); 2 * c.n_bins],
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Log-magnitude window `[T × n_bins]`, oldest frame first.
    pub fn features_mut(&mut self) -> &mut [T] {
        &mut self.features
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    /// Raw-waveform segment feature `[frame_length]`.
    pub fn raw_mut(&mut self) -> &mut [T] {
        &mut self.raw
    }

    /// Token sequence `[(T+1) × d_model]` from the last [`embed`](Self::embed).
    pub fn tokens(&self) -> &[T] {
        &self.tokens
    }

    fn check(&self, w: &ModelWeights<T>) {
        assert!(
            w.params.len() == self.n_params && w.config == self.config,
            "workspace was built for a different model configuration"
        );
    }

    /// Writes the fused token sequence for the current inputs.
    pub fn embed(&mut self, w: &ModelWeights<T>) {
        self.check(w);
        let c = &self.config;
        let (nb, d, tf) = (c.n_bins, c.d_model, c.context_frames);
        let p = &w.params;
        let ids = &self.ids;
        for t in 0..tf {
            let frame = &self.features[t * nb..(t + 1) * nb];
            for b in 0..nb {
                self.norm_row[b] = (frame[b] - w.norm_mean[b]) / w.norm_std[b];
            }
            kernels::dense(
                &self.norm_row,
                p.value(ids.spec.w),
                p.value(ids.spec.b),
                1,
                nb,
                d,
                &mut self.tokens[t * d..(t + 1) * d],
            );
        }
        let raw_tok = &mut self.tokens[tf * d..(tf + 1) * d];
        kernels::dense(
            &self.raw,
            p.value(ids.raw.w),
            p.value(ids.raw.b),
            1,
            c.frame_length,
            d,
            raw_tok,
        );
        batch_norm_infer_row(
            raw_tok,
            p.value(ids.bn.w),
            p.value(ids.bn.b),
            p.value(ids.bn_mean),
            p.value(ids.bn_var),
            T::of(BATCH_NORM_EPS),
        );
        for (v, &e) in self.tokens.iter_mut().zip(p.value(ids.pos)) {
            *v += e;
        }
    }

    /// Transformer stack and MLP head over the current tokens.
    pub fn transform(&mut self, w: &ModelWeights<T>) {
        self.check(w);
        let c = &self.config;
        let seq = c.seq_len();
        let (d, ffw) = (c.d_model, c.ff_hidden);
        let p = &w.params;
        for l in &self.ids.layers {
            kernels::layer_norm(&self.tokens, p.value(l.ln1.w), p.value(l.ln1.b), &mut self.normed, None);
            let a = &l.attn;
            let aw = AttentionWeights {
                wq: p.value(a[0].w),
                bq: p.value(a[0].b),
                wk: p.value(a[1].w),
                bk: p.value(a[1].b),
                wv: p.value(a[2].w),
                bv: p.value(a[2].b),
                wo: p.value(a[3].w),
                bo: p.value(a[3].b),
            };
            kernels::attention(&self.normed, seq, d, c.n_heads, &aw, &mut self.scratch, &mut self.sub);
            add_assign(&mut self.tokens, &self.sub);
            kernels::layer_norm(&self.tokens, p.value(l.ln2.w), p.value(l.ln2.b), &mut self.normed, None);
            kernels::dense(&self.normed, p.value(l.ff1.w), p.value(l.ff1.b), seq, d, ffw, &mut self.ff);
            kernels::relu_in_place(&mut self.ff);
            kernels::dense(&self.ff, p.value(l.ff2.w), p.value(l.ff2.b), seq, ffw, d, &mut self.sub);
            add_assign(&mut self.tokens, &self.sub);
        }
        let mut width = seq * d;
        for (i, ids) in self.ids.head.iter().enumerate() {
            let (done, rest) = self.head.split_at_mut(i);
            let input: &[T] = if i == 0 { &self.tokens } else { &done[i - 1] };
            let out = &mut rest[0];
            kernels::dense(input, p.value(ids.w), p.value(ids.b), 1, width, out.len(), out);
            kernels::relu_in_place(out);
            width = out.len();
        }
        let input: &[T] = self.head.last().map_or(&self.tokens, |h| h);
        let n_out = self.logits.len();
        kernels::dense(input, p.value(self.ids.out.w), p.value(self.ids.out.b), 1, width, n_out, &mut self.logits);
        self.logits.iter_mut().for_each(|v| *v = kernels::sigmoid(*v));
    }

    /// Full forward pass; returns `(clean, noise)` masks for the newest frame.
    pub fn run(&mut self, w: &ModelWeights<T>) -> (&[T], &[T]) {
        self.embed(w);
        self.transform(w);
        self.logits.split_at(self.config.n_bins)
    }

    /// Masks from the most recent `run`/`transform`.
    pub fn masks(&self) -> (&[T], &[T]) {
        self.logits.split_at(self.config.n_bins)
    }

    fn load(&mut self, log_features: &Matrix<T>, raw: &RawSegmentFeature<T>) -> Result<()> {
        let c = &self.config;
        if log_features.shape() != (c.context_frames, c.n_bins) {
            return Err(Error::param(format!(
                "log features are {:?}, model expects {} frames × {} bins",
                log_features.shape(),
                c.context_frames,
                c.n_bins
            )));
        }
        if raw.values.len() != c.frame_length {
            return Err(Error::param(format!(
                "raw feature has {} samples, model expects {}",
                raw.values.len(),
                c.frame_length
            )));
        }
        if raw.n_frames_averaged != c.context_frames {
            return Err(Error::param(format!(
                "raw feature averages {} frames, context is {}",
                raw.n_frames_averaged, c.context_frames
            )));
        }
        self.features.copy_from_slice(log_features.as_slice());
        self.raw.copy_from_slice(&raw.values);
        Ok(())
    }
}

fn add_assign<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

/// Fused token sequence `[(T+1) × d_model]`: one normalized, projected token per
/// frame followed by the batch-normalized raw-waveform token.
pub fn build_inputs<T: Scalar>(
    log_features: &Matrix<T>,
    raw_feature: &RawSegmentFeature<T>,
    weights: &ModelWeights<T>,
) -> Result<Tensor<T>> {
    let mut ws = InferenceWorkspace::new(weights)?;
    ws.load(log_features, raw_feature)?;
    ws.embed(weights);
    Tensor::matrix(weights.config.seq_len(), weights.config.d_model, ws.tokens.clone())
}

/// Transformer, flatten, MLP head and sigmoid over a token sequence.
pub fn forward<T: Scalar>(tokens: &Tensor<T>, weights: &ModelWeights<T>) -> Result<MaskPrediction<T>> {
    let c = &weights.config;
    if tokens.shape() != [c.seq_len(), c.d_model] {
        return Err(Error::param(format!(
            "tokens are {:?}, model expects [{}, {}]",
            tokens.shape(),
            c.seq_len(),
            c.d_model
        )));
    }
    let mut ws = InferenceWorkspace::new(weights)?;
    ws.tokens.copy_from_slice(tokens.data());
    ws.transform(weights);
    Ok(prediction(&ws))
}

/// `forward(build_inputs(..))`.
pub fn predict<T: Scalar>(
    log_features: &Matrix<T>,
    raw_feature: &RawSegmentFeature<T>,
    weights: &ModelWeights<T>,
) -> Result<MaskPrediction<T>> {
    let mut ws = InferenceWorkspace::new(weights)?;
    ws.load(log_features, raw_feature)?;
    ws.run(weights);
    Ok(prediction(&ws))
}

fn prediction<T: Scalar>(ws: &InferenceWorkspace<T>) -> MaskPrediction<T> {
    let (clean, noise) = ws.masks();
    MaskPrediction {
        clean_mask_frame: clean.to_vec(),
        noise_mask_frame: noise.to_vec(),
    }
}
