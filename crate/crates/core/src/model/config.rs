use serde::{Deserialize, Serialize};

use crate::dsp::stft::{DEFAULT_FRAME_LENGTH, DEFAULT_HOP};
use crate::error::{Error, Result};
use crate::mask::SmoothingSpec;

/// Architecture and post-processing settings of the dual-branch denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Causal context window in STFT frames.
    pub context_frames: usize,
    pub frame_length: usize,
    pub hop: usize,
    pub n_bins: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Width of the feed-forward sublayer inside each transformer layer.
    pub ff_hidden: usize,
    pub mlp_hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub exponent_l: f64,
    pub smoothing_sigma: f64,
    pub smoothing_radius: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context_frames: 8,
            frame_length: DEFAULT_FRAME_LENGTH,
            hop: DEFAULT_HOP,
            n_bins: DEFAULT_FRAME_LENGTH / 2 + 1,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            ff_hidden: 128,
            mlp_hidden: vec![128, 64],
            dropout_rate: 0.1,
            exponent_l: 2.0,
            smoothing_sigma: 1.0,
            smoothing_radius: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::param(m));
        if self.context_frames == 0 {
            return fail("context_frames must be at least 1".into());
        }
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1".into());
        }
        if self.n_heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !self.frame_length.is_power_of_two() || self.frame_length < 2 {
            return fail(format!("frame_length {} must be a power of two", self.frame_length));
        }
        if self.hop == 0 || self.hop > self.frame_length {
            return fail(format!("hop {} must lie in 1..={}", self.hop, self.frame_length));
        }
        if self.n_bins != self.frame_length / 2 + 1 {
            return fail(format!(
                "n_bins {} must equal frame_length/2 + 1 = {}",
                self.n_bins,
                self.frame_length / 2 + 1
            ));
        }
        if self.ff_hidden == 0 || self.mlp_hidden.contains(&0) {
            return fail("hidden widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.exponent_l > 0.0 && self.exponent_l.is_finite()) {
            return fail("exponent_l must be positive".into());
        }
        SmoothingSpec::new(self.smoothing_sigma, self.smoothing_radius)?;
        Ok(())
    }

    pub fn smoothing(&self) -> SmoothingSpec {
        SmoothingSpec {
            sigma: self.smoothing_sigma,
            truncation_radius: self.smoothing_radius,
        }
    }

    /// Tokens per sequence: one per context frame plus the raw-waveform token.
    pub fn seq_len(&self) -> usize {
        self.context_frames + 1
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let d = self.d_model;
        let dense = |i: usize, o: usize| i * o + o;
        let spectral = dense(self.n_bins, d);
        let raw = dense(self.frame_length, d) + 2 * d;
        let positional = self.seq_len() * d;
        let layer = 2 * (2 * d) + 4 * dense(d, d) + dense(d, self.ff_hidden) + dense(self.ff_hidden, d);
        let mut head = 0;
        let mut width = self.seq_len() * d;
        for &h in &self.mlp_hidden {
            head += dense(width, h);
            width = h;
        }
        head += dense(width, 2 * self.n_bins);
        spectral + raw + positional + self.n_layers * layer + head
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("bad value `{value}` for `{key}`")))
        }
        match key.trim() {
            "context_frames" | "frames" => self.context_frames = parse(key, value)?,
            "frame_length" => {
                self.frame_length = parse(key, value)?;
                self.n_bins = self.frame_length / 2 + 1;
            }
            "hop" => self.hop = parse(key, value)?,
            "d_model" => self.d_model = parse(key, value)?,
            "n_layers" => self.n_layers = parse(key, value)?,
            "n_heads" => self.n_heads = parse(key, value)?,
            "ff_hidden" => self.ff_hidden = parse(key, value)?,
            "mlp_hidden" => {
                self.mlp_hidden = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "dropout_rate" => self.dropout_rate = parse(key, value)?,
            "exponent_l" => self.exponent_l = parse(key, value)?,
            "smoothing_sigma" => self.smoothing_sigma = parse(key, value)?,
            "smoothing_radius" => self.smoothing_radius = parse(key, value)?,
            other => return Err(Error::param(format!("unknown model key `{other}`"))),
        }
        Ok(())
    }

    pub fn is_key(key: &str) -> bool {
        matches!(
            key.trim(),
            "context_frames"
                | "frames"
                | "frame_length"
                | "hop"
                | "d_model"
                | "n_layers"
                | "n_heads"
                | "ff_hidden"
                | "mlp_hidden"
                | "dropout_rate"
                | "exponent_l"
                | "smoothing_sigma"
                | "smoothing_radius"
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n_layers, 2);
        assert_eq!(c.n_heads, 4);
        assert_eq!(c.seq_len(), 9);
    }

    #[test]
    fn default_parameter_count() {
        // spectral 65*64+64, raw 128*64+64+128, pos 9*64,
        // per layer 256 + 4*(4096+64) + (8192+128) + (8192+64),
        // head (576*128+128) + (128*64+64) + (64*130+130)
        let expect = 4224 + 8384 + 576 + 2 * 33472 + 73856 + 8256 + 8450;
        assert_eq!(ModelConfig::default().parameter_count(), expect);
    }

    #[test]
    fn rejects_bad_heads() {
        let c = ModelConfig {
            d_model: 8,
            n_heads: 3,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn key_value_overrides() {
        let mut c = ModelConfig::default();
        c.set("d_model", "32").unwrap();
        c.set("mlp_hidden", "16, 8").unwrap();
        c.set("frames", "4").unwrap();
        assert_eq!((c.d_model, c.context_frames), (32, 4));
        assert_eq!(c.mlp_hidden, vec![16, 8]);
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("d_model", "x").is_err());
    }
}
