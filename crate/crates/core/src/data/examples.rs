use crate::data::mixing::Mixture;
use crate::dsp::{bandpass_filter, log_power_features, stacked_mean, stft, BandSpec, FrameGrid, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::mask::{ideal_masks, MaskPair};
use crate::matrix::Matrix;
use crate::model::ModelConfig;
use crate::scalar::Scalar;

/// One supervised window: T frames of features and targets for the newest frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample<T> {
    pub utterance: usize,
    /// Index of the newest frame in its utterance.
    pub frame: usize,
    /// `[T × n_bins]` log magnitudes, oldest first.
    pub features: Vec<T>,
    /// `[frame_length]` stacked mean of the T analysis frames.
    pub raw: Vec<T>,
    pub clean_target: Vec<T>,
    pub noise_target: Vec<T>,
}

impl<T: Scalar> TrainingExample<T> {
    /// Feature row of the newest frame.
    pub fn newest_frame(&self) -> &[T] {
        let nb = self.clean_target.len();
        &self.features[self.features.len() - nb..]
    }
}

/// Applies the input band-pass filter to all three signals of a mixture.
pub fn prepare_triple<T: Scalar>(m: &Mixture<T>) -> Result<Mixture<T>> {
    let band = BandSpec::default();
    let f = |s| bandpass_filter(s, band.low_hz, band.high_hz);
    Ok(Mixture {
        mix: f(&m.mix)?,
        clean: f(&m.clean)?,
        noise: f(&m.noise)?,
        gain: m.gain,
    })
}

/// Pull-based example iterator over one utterance.
#[derive(Debug, Clone)]
pub struct ExampleStream<T> {
    utterance: usize,
    context: usize,
    frame_length: usize,
    hop: usize,
    features: Matrix<T>,
    masks: MaskPair<T>,
    silent: Vec<bool>,
    padded: Vec<T>,
    next: usize,
}

/// Slides a causal T-frame window (step 1) over the mixture and emits
/// features plus ideal-mask targets for the newest frame. Windows whose
/// newest mixture frame is all-zero are skipped.
pub fn generate_examples<T: Scalar>(
    triple: &Mixture<T>,
    config: &ModelConfig,
    utterance: usize,
) -> Result<ExampleStream<T>> {
    config.validate()?;
    let grid = FrameGrid::<T>::hann(config.frame_length, config.hop)?;
    if triple.mix.len() != triple.clean.len() || triple.mix.len() != triple.noise.len() {
        return Err(Error::data("mixture triple lengths differ"));
    }
    if triple.mix.len() < config.frame_length {
        return Err(Error::data(format!(
            "utterance {utterance}: {} samples is shorter than {} frames",
            triple.mix.len(),
            config.context_frames
        )));
    }
    let n_frames = grid.n_frames(triple.mix.len());
    if n_frames < config.context_frames {
        return Err(Error::data(format!(
            "utterance {utterance}: {n_frames} frames is shorter than the {}-frame context",
            config.context_frames
        )));
    }
    let x = stft(&triple.mix, &grid)?;
    let s = stft(&triple.clean, &grid)?;
    let n = stft(&triple.noise, &grid)?;
    let masks = ideal_masks(&s, &n, &x)?;
    let features = log_power_features(&x, T::of(LOG_FLOOR))?;
    let silent = (0..n_frames)
        .map(|t| x.frame(t).iter().all(|c| c.norm_sqr() == T::zero()))
        .collect();
    let mut padded = triple.mix.samples().to_vec();
    padded.resize((n_frames - 1) * config.hop + config.frame_length, T::zero());
    Ok(ExampleStream {
        utterance,
        context: config.context_frames,
        frame_length: config.frame_length,
        hop: config.hop,
        features,
        masks,
        silent,
        padded,
        next: config.context_frames - 1,
    })
}

impl<T: Scalar> ExampleStream<T> {
    pub fn n_frames(&self) -> usize {
        self.features.rows()
    }

    fn example(&self, t: usize) -> TrainingExample<T> {
        let first = t + 1 - self.context;
        let nb = self.features.cols();
        let features = self.features.as_slice()[first * nb..(t + 1) * nb].to_vec();
        let raw = stacked_mean(&self.padded[first * self.hop..], self.frame_length, self.hop, self.context)
            .expect("padded signal covers every frame")
            .values;
        TrainingExample {
            utterance: self.utterance,
            frame: t,
            features,
            raw,
            clean_target: self.masks.clean.row(t).to_vec(),
            noise_target: self.masks.noise.row(t).to_vec(),
        }
    }
}

impl<T: Scalar> Iterator for ExampleStream<T> {
    type Item = TrainingExample<T>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.next < self.n_frames() {
            let t = self.next;
            self.next += 1;
            if !self.silent[t] {
                return Some(self.example(t));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mixing::mix_signals;
    use crate::dsp::AudioSignal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, len: usize) -> AudioSignal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioSignal::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 8000).unwrap()
    }

    fn cfg(t: usize) -> ModelConfig {
        ModelConfig {
            context_frames: t,
            ..Default::default()
        }
    }

    #[test]
    fn exactly_t_frames_yields_one_example() {
        // 1 + (len - 128)/64 = 8 frames
        let len = 128 + 7 * 64;
        let m = mix_signals(&random(1, len), &random(2, len), 0.0, 1).unwrap();
        let ex: Vec<_> = generate_examples(&m, &cfg(8), 0).unwrap().collect();
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].frame, 7);
        assert_eq!(ex[0].features.len(), 8 * 65);
        assert_eq!(ex[0].raw.len(), 128);
    }

    #[test]
    fn too_short_is_data_error() {
        let len = 128 + 5 * 64;
        let m = mix_signals(&random(1, len), &random(2, len), 0.0, 1).unwrap();
        assert!(matches!(generate_examples(&m, &cfg(8), 0), Err(Error::Data(_))));
    }

    #[test]
    fn silent_clean_gives_zero_clean_targets() {
        let len = 2000;
        let noise = random(2, len);
        let m = Mixture {
            mix: noise.clone(),
            clean: AudioSignal::zeros(len, 8000),
            noise,
            gain: 1.0,
        };
        let mut count = 0;
        for ex in generate_examples(&m, &cfg(4), 0).unwrap() {
            assert!(ex.clean_target.iter().all(|&v| v == 0.0));
            count += 1;
        }
        assert!(count > 0);
    }

    #[test]
    fn silent_mixture_frames_are_skipped() {
        let len = 128 + 19 * 64;
        let mut s = random(3, len).into_samples();
        s[..12 * 64].iter_mut().for_each(|v| *v = 0.0);
        let clean = AudioSignal::new(s, 8000).unwrap();
        let m = Mixture {
            mix: clean.clone(),
            clean,
            noise: AudioSignal::zeros(len, 8000),
            gain: 1.0,
        };
        let frames: Vec<usize> = generate_examples(&m, &cfg(2), 0).unwrap().map(|e| e.frame).collect();
        // frames 0..=10 lie entirely inside the zeroed prefix
        assert_eq!(frames.first(), Some(&11));
        assert_eq!(frames.len(), 20 - 11);
    }
}
