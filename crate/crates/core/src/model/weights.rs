use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::io::FORMAT_VERSION;
use crate::nn::layers::{init_attention, init_batch_norm, init_dense, init_layer_norm};
use crate::nn::{ParamStore, Tensor};
use crate::scalar::Scalar;

pub const POSITIONAL_NAME: &str = "pos_embedding.weight";

const POSITIONAL_INIT: f64 = 0.02;

/// Parameters plus the feature normalization statistics needed at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    /// Per-bin mean of log-magnitude features.
    pub norm_mean: Vec<T>,
    /// Per-bin standard deviation of log-magnitude features, strictly positive.
    pub norm_std: Vec<T>,
    pub format_version: u32,
}

pub(crate) fn layer_prefix(i: usize, leaf: &str) -> String {
    format!("layers.{i}.{leaf}")
}

pub(crate) fn head_prefix(i: usize) -> String {
    format!("head.{i}")
}

pub(crate) const HEAD_OUT: &str = "head.out";

impl<T: Scalar> ModelWeights<T> {
    /// Fresh weights with identity normalization (mean 0, std 1).
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.d_model;
        init_dense(&mut params, "spec_proj", config.n_bins, d, &mut rng)?;
        init_dense(&mut params, "raw_embed", config.frame_length, d, &mut rng)?;
        init_batch_norm(&mut params, "raw_bn", d)?;
        let seq = config.seq_len();
        let pos = (0..seq * d)
            .map(|_| T::of(rng.gen_range(-POSITIONAL_INIT..POSITIONAL_INIT)))
            .collect();
        params.insert(POSITIONAL_NAME, Tensor::matrix(seq, d, pos)?, true)?;
        for i in 0..config.n_layers {
            init_layer_norm(&mut params, &layer_prefix(i, "ln1"), d)?;
            init_attention(&mut params, &layer_prefix(i, "attn"), d, &mut rng)?;
            init_layer_norm(&mut params, &layer_prefix(i, "ln2"), d)?;
            init_dense(&mut params, &layer_prefix(i, "ff1"), d, config.ff_hidden, &mut rng)?;
            init_dense(&mut params, &layer_prefix(i, "ff2"), config.ff_hidden, d, &mut rng)?;
        }
        let mut width = seq * d;
        for (i, &h) in config.mlp_hidden.iter().enumerate() {
            init_dense(&mut params, &head_prefix(i), width, h, &mut rng)?;
            width = h;
        }
        init_dense(&mut params, HEAD_OUT, width, 2 * config.n_bins, &mut rng)?;
        Ok(ModelWeights {
            config: config.clone(),
            params,
            norm_mean: vec![T::zero(); config.n_bins],
            norm_std: vec![T::one(); config.n_bins],
            format_version: FORMAT_VERSION,
        })
    }

    pub fn set_normalization(&mut self, mean: Vec<T>, std: Vec<T>) -> Result<()> {
        check_normalization(self.config.n_bins, &mean, &std)?;
        self.norm_mean = mean;
        self.norm_std = std;
        Ok(())
    }

    /// Checks that every tensor exists with the shape the config implies.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let reference = ModelWeights::<T>::init(&self.config, 0)?;
        if reference.params.len() != self.params.len() {
            return Err(Error::format(format!(
                "expected {} tensors, found {}",
                reference.params.len(),
                self.params.len()
            )));
        }
        for (want, have) in reference.params.iter().zip(self.params.iter()) {
            if want.name != have.name {
                return Err(Error::format_in(
                    have.name.clone(),
                    format!("expected tensor `{}`", want.name),
                ));
            }
            if want.value.shape() != have.value.shape() {
                return Err(Error::format_in(
                    have.name.clone(),
                    format!(
                        "shape {:?} does not match config shape {:?}",
                        have.value.shape(),
                        want.value.shape()
                    ),
                ));
            }
        }
        check_normalization(self.config.n_bins, &self.norm_mean, &self.norm_std)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.trainable_count()
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            config: self.config.clone(),
            params: self.params.cast(),
            norm_mean: self.norm_mean.iter().map(|v| U::of(v.as_f64())).collect(),
            norm_std: self.norm_std.iter().map(|v| U::of(v.as_f64())).collect(),
            format_version: self.format_version,
        }
    }
}

fn check_normalization<T: Scalar>(n_bins: usize, mean: &[T], std: &[T]) -> Result<()> {
    if mean.len() != n_bins || std.len() != n_bins {
        return Err(Error::param(format!(
            "normalization statistics need {n_bins} bins, got {} / {}",
            mean.len(),
            std.len()
        )));
    }
    if std.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::param("normalization std must be positive and finite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trainable_count_matches_closed_form() {
        let c = ModelConfig::default();
        let w = ModelWeights::<f64>::init(&c, 1).unwrap();
        assert_eq!(w.parameter_count(), c.parameter_count());
        w.validate().unwrap();
    }

    #[test]
    fn init_is_seeded() {
        let c = ModelConfig::default();
        let a = ModelWeights::<f32>::init(&c, 5).unwrap();
        let b = ModelWeights::<f32>::init(&c, 5).unwrap();
        let d = ModelWeights::<f32>::init(&c, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, d.params);
    }

    #[test]
    fn rejects_nonpositive_std() {
        let c = ModelConfig::default();
        let mut w = ModelWeights::<f64>::init(&c, 1).unwrap();
        let mut std = vec![1.0; c.n_bins];
        std[3] = 0.0;
        assert!(w.set_normalization(vec![0.0; c.n_bins], std).is_err());
    }
}
