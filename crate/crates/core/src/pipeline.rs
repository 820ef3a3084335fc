//! Offline (whole-signal) enhancement: input filter, STFT, masks from the
//! model or from ground truth, smoothing, mask application, noisy-phase
//! resynthesis and output filter.

use crate::dsp::{bandpass_filter, log_power_features, stft, AudioSignal, BandSpec, FrameGrid, Spectrogram, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::mask::{apply_masks, ideal_masks, reconstruct, MaskPair, ReconstructionSpec, SmoothingMode, SmoothingSpec};
use crate::matrix::Matrix;
use crate::model::{InferenceWorkspace, ModelConfig, ModelWeights};
use crate::scalar::Scalar;

/// Post-processing settings shared by every mask source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostProcess {
    pub smoothing: SmoothingSpec,
    pub mode: SmoothingMode,
    pub reconstruction: ReconstructionSpec,
    pub band: BandSpec,
}

impl Default for PostProcess {
    fn default() -> Self {
        PostProcess {
            smoothing: SmoothingSpec::default(),
            mode: SmoothingMode::Symmetric,
            reconstruction: ReconstructionSpec::default(),
            band: BandSpec::default(),
        }
    }
}

impl PostProcess {
    /// Settings implied by a model config, with the given smoothing mode.
    pub fn for_model(config: &ModelConfig, mode: SmoothingMode) -> Result<Self> {
        Ok(PostProcess {
            smoothing: SmoothingSpec::new(config.smoothing_sigma, config.smoothing_radius)?,
            mode,
            reconstruction: ReconstructionSpec::new(config.exponent_l, 0.0)?,
            band: BandSpec::default(),
        })
    }
}

/// Result of an offline run with the intermediate products kept for inspection.
#[derive(Debug, Clone)]
pub struct Enhancement<T> {
    pub output: AudioSignal<T>,
    /// Spectrogram of the band-limited mixture.
    pub mix_spec: Spectrogram<T>,
    /// Masks before smoothing.
    pub masks: MaskPair<T>,
    pub smoothed: MaskPair<T>,
}

fn band_limit<T: Scalar>(s: &AudioSignal<T>, band: BandSpec) -> Result<AudioSignal<T>> {
    bandpass_filter(s, band.low_hz, band.high_hz)
}

/// Smoothing, mask application and resynthesis for externally supplied masks.
pub fn enhance_with_masks<T: Scalar>(
    mix_spec: &Spectrogram<T>,
    masks: MaskPair<T>,
    post: &PostProcess,
) -> Result<Enhancement<T>> {
    let smoothed = masks.smoothed(&post.smoothing, post.mode);
    let magnitude = apply_masks(mix_spec, &smoothed, &post.reconstruction)?;
    let output = reconstruct(&magnitude, mix_spec, post.band)?;
    Ok(Enhancement {
        output,
        mix_spec: mix_spec.clone(),
        masks,
        smoothed,
    })
}

/// Band-limits and transforms a mixture with the standard grid.
pub fn analyze_mixture<T: Scalar>(mix: &AudioSignal<T>, band: BandSpec, grid: &FrameGrid<T>) -> Result<(AudioSignal<T>, Spectrogram<T>)> {
    let filtered = band_limit(mix, band)?;
    let spec = stft(&filtered, grid)?;
    Ok((filtered, spec))
}

/// Enhancement with ideal masks computed from the true clean and noise signals.
pub fn denoise_oracle<T: Scalar>(
    mix: &AudioSignal<T>,
    clean: &AudioSignal<T>,
    noise: &AudioSignal<T>,
    post: &PostProcess,
) -> Result<Enhancement<T>> {
    if mix.len() != clean.len() || mix.len() != noise.len() {
        return Err(Error::param("oracle needs mixture, clean and noise of equal length"));
    }
    let grid = FrameGrid::<f64>::standard().cast::<T>();
    let (_, x) = analyze_mixture(mix, post.band, &grid)?;
    let s = stft(&band_limit(clean, post.band)?, &grid)?;
    let n = stft(&band_limit(noise, post.band)?, &grid)?;
    let masks = ideal_masks(&s, &n, &x)?;
    enhance_with_masks(&x, masks, post)
}

/// Per-frame model masks over a band-limited mixture. Frames before the start
/// of the signal are represented by floor-level features and zero samples.
pub fn predict_masks<T: Scalar>(
    filtered_mix: &AudioSignal<T>,
    mix_spec: &Spectrogram<T>,
    weights: &ModelWeights<T>,
) -> Result<MaskPair<T>> {
    let c = &weights.config;
    if mix_spec.n_bins() != c.n_bins || mix_spec.grid().hop() != c.hop || mix_spec.grid().frame_length() != c.frame_length {
        return Err(Error::param("spectrogram grid does not match the model config"));
    }
    let features = log_power_features(mix_spec, T::of(LOG_FLOOR))?;
    let (n_frames, nb) = (mix_spec.n_frames(), c.n_bins);
    let (tf, fl, hop) = (c.context_frames, c.frame_length, c.hop);
    let mut padded = filtered_mix.samples().to_vec();
    padded.resize((n_frames - 1) * hop + fl, T::zero());
    let floor = T::of(LOG_FLOOR).ln();
    let inv_t = T::one() / T::of_usize(tf);

    let mut ws = InferenceWorkspace::new(weights)?;
    let mut clean = Matrix::zeros(n_frames, nb);
    let mut noise = Matrix::zeros(n_frames, nb);
    for t in 0..n_frames {
        {
            let window = ws.features_mut();
            for k in 0..tf {
                let row = &mut window[k * nb..(k + 1) * nb];
                match (t + k + 1).checked_sub(tf) {
                    Some(src) => row.copy_from_slice(features.row(src)),
                    None => row.fill(floor),
                }
            }
        }
        {
            let raw = ws.raw_mut();
            raw.fill(T::zero());
            for k in 0..tf {
                if let Some(f) = (t + k + 1).checked_sub(tf) {
                    for (r, &s) in raw.iter_mut().zip(&padded[f * hop..f * hop + fl]) {
                        *r += s;
                    }
                }
            }
            raw.iter_mut().for_each(|r| *r *= inv_t);
        }
        let (cm, nm) = ws.run(weights);
        clean.row_mut(t).copy_from_slice(cm);
        noise.row_mut(t).copy_from_slice(nm);
    }
    MaskPair::new(clean, noise)
}

/// Full offline enhancement with a trained model.
pub fn denoise<T: Scalar>(
    mix: &AudioSignal<T>,
    weights: &ModelWeights<T>,
    mode: SmoothingMode,
) -> Result<Enhancement<T>> {
    let c = &weights.config;
    let post = PostProcess::for_model(c, mode)?;
    let grid = FrameGrid::<T>::hann(c.frame_length, c.hop)?;
    let (filtered, spec) = analyze_mixture(mix, post.band, &grid)?;
    let masks = predict_masks(&filtered, &spec, weights)?;
    enhance_with_masks(&spec, masks, &post)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth;

    #[test]
    fn pass_through_masks_reproduce_filtered_input() {
        let clean = synth::speech_like(1, 4000, 8000);
        let post = PostProcess {
            mode: SmoothingMode::None,
            ..Default::default()
        };
        let grid = FrameGrid::standard();
        let (_, spec) = analyze_mixture(&clean, post.band, &grid).unwrap();
        let (r, c) = spec.shape();
        // c = 1, n = 0 with L = 2 gives the unmodified magnitude
        let out = enhance_with_masks(&spec, MaskPair::pass_through(r, c), &post).unwrap();
        let reference = band_limit(&band_limit(&clean, post.band).unwrap(), post.band).unwrap();
        let err = out.output.samples()[128..3800]
            .iter()
            .zip(&reference.samples()[128..3800])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn model_masks_have_frame_shape() {
        let config = ModelConfig {
            d_model: 16,
            ff_hidden: 16,
            mlp_hidden: vec![16],
            ..Default::default()
        };
        let w = ModelWeights::<f64>::init(&config, 1).unwrap();
        let x = synth::speech_like(2, 2000, 8000);
        let out = denoise(&x, &w, SmoothingMode::Causal).unwrap();
        assert_eq!(out.masks.shape(), out.mix_spec.shape());
        assert_eq!(out.output.len(), x.len());
        assert!(out.masks.clean.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
