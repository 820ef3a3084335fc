use std::time::{Duration, Instant};

use num_complex::Complex;

use crate::dsp::stft::ENVELOPE_FLOOR;
use crate::dsp::{hann_window, BandSpec, BandpassFilter, FramePlan, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::mask::{apply_masks_frame, clamp_unit, combine_with_phase, ReconstructionSpec, SmoothingSpec};
use crate::model::{InferenceWorkspace, ModelConfig, ModelWeights};
use crate::scalar::Scalar;

/// Wall-clock time spent in each stage of one processed frame.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub pre: Duration,
    pub inference: Duration,
    pub post: Duration,
}

/// State of one audio stream. Every buffer is allocated up front; pushing a
/// chunk performs no heap allocation.
pub struct StreamState<T: Scalar> {
    config: ModelConfig,
    reconstruction: ReconstructionSpec,
    input_filter: BandpassFilter<T>,
    output_filter: BandpassFilter<T>,
    window: Vec<T>,
    plan: FramePlan<T>,
    workspace: InferenceWorkspace<T>,
    /// Last `frame_length` band-limited input samples.
    frame: Vec<T>,
    spectrum: Vec<Complex<T>>,
    magnitude: Vec<T>,
    /// Raw analysis frames of the context window, as a ring.
    raw_ring: Vec<T>,
    raw_sum: Vec<T>,
    raw_pos: usize,
    /// Unsmoothed masks of the last `radius + 1` frames, as rings.
    clean_ring: Vec<T>,
    noise_ring: Vec<T>,
    mask_pos: usize,
    causal_tables: Vec<Vec<T>>,
    clean_smoothed: Vec<T>,
    noise_smoothed: Vec<T>,
    enhanced_mag: Vec<T>,
    enhanced_bins: Vec<Complex<T>>,
    synth: Vec<T>,
    overlap: Vec<T>,
    envelope: Vec<T>,
    output: Vec<T>,
    pushes: usize,
    frames_processed: usize,
    log_floor: T,
}

/// Frames between full recomputations of the running raw-feature sum.
const RAW_RESYNC_FRAMES: usize = 4096;

impl<T: Scalar> StreamState<T> {
    pub fn new(weights: &ModelWeights<T>) -> Result<Self> {
        let c = weights.config.clone();
        let smoothing = SmoothingSpec::new(c.smoothing_sigma, c.smoothing_radius)?;
        let band = BandSpec::default();
        let rate = crate::PIPELINE_SAMPLE_RATE;
        let (fl, hop, nb, tf) = (c.frame_length, c.hop, c.n_bins, c.context_frames);
        if fl != 2 * hop {
            return Err(Error::param("streaming requires hop = frame_length / 2"));
        }
        let depth = c.smoothing_radius + 1;
        let zc = Complex::new(T::zero(), T::zero());
        let mut state = StreamState {
            reconstruction: ReconstructionSpec::new(c.exponent_l, 0.0)?,
            input_filter: BandpassFilter::design(band, rate)?,
            output_filter: BandpassFilter::design(band, rate)?,
            window: hann_window(fl),
            plan: FramePlan::new(fl),
            workspace: InferenceWorkspace::new(weights)?,
            frame: vec![T::zero(); fl],
            spectrum: vec![zc; nb],
            magnitude: vec![T::zero(); nb],
            raw_ring: vec![T::zero(); tf * fl],
            raw_sum: vec![T::zero(); fl],
            raw_pos: 0,
            clean_ring: vec![T::zero(); depth * nb],
            noise_ring: vec![T::zero(); depth * nb],
            mask_pos: 0,
            causal_tables: (1..=depth)
                .map(|n| smoothing.causal_weights(n).into_iter().map(T::of).collect())
                .collect(),
            clean_smoothed: vec![T::zero(); nb],
            noise_smoothed: vec![T::zero(); nb],
            enhanced_mag: vec![T::zero(); nb],
            enhanced_bins: vec![zc; nb],
            synth: vec![T::zero(); fl],
            overlap: vec![T::zero(); fl],
            envelope: vec![T::zero(); fl],
            output: vec![T::zero(); hop],
            pushes: 0,
            frames_processed: 0,
            log_floor: T::of(LOG_FLOOR).ln(),
            config: c,
        };
        state.reset();
        Ok(state)
    }

    /// Returns to the freshly constructed state.
    pub fn reset(&mut self) {
        self.input_filter.reset();
        self.output_filter.reset();
        let floor = self.log_floor;
        self.workspace.features_mut().fill(floor);
        for buf in [
            &mut self.frame,
            &mut self.raw_ring,
            &mut self.raw_sum,
            &mut self.clean_ring,
            &mut self.noise_ring,
            &mut self.overlap,
            &mut self.envelope,
            &mut self.output,
        ] {
            buf.fill(T::zero());
        }
        self.raw_pos = 0;
        self.mask_pos = 0;
        self.pushes = 0;
        self.frames_processed = 0;
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn hop(&self) -> usize {
        self.config.hop
    }

    pub fn frames_processed(&self) -> usize {
        self.frames_processed
    }

    /// Samples emitted so far; output sample `n` aligns with input sample `n`.
    pub fn samples_emitted(&self) -> usize {
        self.frames_processed * self.config.hop
    }

    /// Input samples received but not yet represented in the output.
    pub fn samples_buffered(&self) -> usize {
        self.pushes * self.config.hop - self.samples_emitted()
    }

    /// Buffering delay between an input sample and its output, in samples.
    pub fn algorithmic_latency(&self) -> usize {
        self.config.frame_length
    }

    /// Feeds one hop of samples. Returns a hop of output once a full analysis
    /// frame is available (from the second push on).
    pub fn push_frame(&mut self, samples: &[T], weights: &ModelWeights<T>) -> Result<Option<&[T]>> {
        self.push_inner(samples, weights, None)
    }

    /// [`push_frame`](Self::push_frame) with per-stage timing.
    pub fn push_frame_timed(
        &mut self,
        samples: &[T],
        weights: &ModelWeights<T>,
        times: &mut StageTimes,
    ) -> Result<Option<&[T]>> {
        self.push_inner(samples, weights, Some(times))
    }

    fn push_inner(
        &mut self,
        samples: &[T],
        weights: &ModelWeights<T>,
        times: Option<&mut StageTimes>,
    ) -> Result<Option<&[T]>> {
        let hop = self.config.hop;
        if samples.len() != hop {
            return Err(Error::param(format!(
                "stream chunks must be exactly {hop} samples, got {}",
                samples.len()
            )));
        }
        let t0 = Instant::now();
        self.frame.copy_within(hop.., 0);
        let fl = self.config.frame_length;
        for (dst, &x) in self.frame[fl - hop..].iter_mut().zip(samples) {
            *dst = self.input_filter.process_sample(x);
        }
        self.pushes += 1;
        if self.pushes * hop < fl {
            if let Some(t) = times {
                t.pre = t0.elapsed();
                t.inference = Duration::ZERO;
                t.post = Duration::ZERO;
            }
            return Ok(None);
        }
        self.analyze();
        let t1 = Instant::now();
        self.workspace.run(weights);
        let t2 = Instant::now();
        self.synthesize();
        if let Some(t) = times {
            t.pre = t1 - t0;
            t.inference = t2 - t1;
            t.post = t2.elapsed();
        }
        self.frames_processed += 1;
        Ok(Some(&self.output))
    }

    /// STFT of the newest frame, feature window shift and raw running mean.
    fn analyze(&mut self) {
        let c = &self.config;
        let (nb, fl, tf) = (c.n_bins, c.frame_length, c.context_frames);
        self.plan.analyze(&self.frame, &self.window, &mut self.spectrum);
        let floor = T::of(LOG_FLOOR);
        let features = self.workspace.features_mut();
        features.copy_within(nb.., 0);
        let newest = &mut features[(tf - 1) * nb..];
        for ((f, m), x) in newest.iter_mut().zip(self.magnitude.iter_mut()).zip(&self.spectrum) {
            *m = x.norm();
            *f = m.max(floor).ln();
        }

        let slot = &mut self.raw_ring[self.raw_pos * fl..(self.raw_pos + 1) * fl];
        for ((s, old), &new) in self.raw_sum.iter_mut().zip(slot.iter_mut()).zip(&self.frame) {
            *s = *s - *old + new;
            *old = new;
        }
        self.raw_pos = (self.raw_pos + 1) % tf;
        if (self.frames_processed + 1).is_multiple_of(RAW_RESYNC_FRAMES) {
            self.raw_sum.fill(T::zero());
            for k in 0..tf {
                let p = (self.raw_pos + k) % tf;
                for (s, &v) in self.raw_sum.iter_mut().zip(&self.raw_ring[p * fl..(p + 1) * fl]) {
                    *s += v;
                }
            }
        }
        let inv_t = T::one() / T::of_usize(tf);
        for (r, &s) in self.workspace.raw_mut().iter_mut().zip(&self.raw_sum) {
            *r = s * inv_t;
        }
    }

    /// Causal smoothing, mask application, inverse transform, overlap-add and
    /// output filter for the newest frame.
    fn synthesize(&mut self) {
        let c = &self.config;
        let (nb, hop, fl) = (c.n_bins, c.hop, c.frame_length);
        let depth = self.causal_tables.len();
        {
            let (clean, noise) = self.workspace.masks();
            let p = self.mask_pos;
            self.clean_ring[p * nb..(p + 1) * nb].copy_from_slice(clean);
            self.noise_ring[p * nb..(p + 1) * nb].copy_from_slice(noise);
        }
        let available = (self.frames_processed + 1).min(depth);
        let weights = &self.causal_tables[available - 1];
        self.clean_smoothed.fill(T::zero());
        self.noise_smoothed.fill(T::zero());
        for (lag, &w) in weights.iter().enumerate() {
            let p = (self.mask_pos + depth - lag) % depth;
            let (cr, nr) = (&self.clean_ring[p * nb..(p + 1) * nb], &self.noise_ring[p * nb..(p + 1) * nb]);
            for k in 0..nb {
                self.clean_smoothed[k] += w * cr[k];
                self.noise_smoothed[k] += w * nr[k];
            }
        }
        clamp_unit(&mut self.clean_smoothed);
        clamp_unit(&mut self.noise_smoothed);
        self.mask_pos = (self.mask_pos + 1) % depth;

        apply_masks_frame(
            &self.magnitude,
            &self.clean_smoothed,
            &self.noise_smoothed,
            &self.reconstruction,
            &mut self.enhanced_mag,
        );
        combine_with_phase(&self.enhanced_mag, &self.spectrum, &mut self.enhanced_bins);
        self.plan.synthesize(&self.enhanced_bins, &mut self.synth);
        for k in 0..fl {
            self.overlap[k] += self.synth[k];
            self.envelope[k] += self.window[k];
        }
        let floor = T::of(ENVELOPE_FLOOR);
        for k in 0..hop {
            let e = self.envelope[k];
            let y = if e > floor { self.overlap[k] / e } else { T::zero() };
            self.output[k] = self.output_filter.process_sample(y);
        }
        self.overlap.copy_within(hop.., 0);
        self.envelope.copy_within(hop.., 0);
        self.overlap[fl - hop..].fill(T::zero());
        self.envelope[fl - hop..].fill(T::zero());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelWeights<f64> {
        let c = ModelConfig {
            d_model: 16,
            ff_hidden: 16,
            mlp_hidden: vec![16],
            ..Default::default()
        };
        ModelWeights::init(&c, 2).unwrap()
    }

    #[test]
    fn first_output_after_two_pushes() {
        let w = small();
        let mut s = StreamState::new(&w).unwrap();
        let chunk = vec![0.1; 64];
        assert!(s.push_frame(&chunk, &w).unwrap().is_none());
        assert_eq!(s.push_frame(&chunk, &w).unwrap().map(<[f64]>::len), Some(64));
        assert_eq!(s.frames_processed(), 1);
        assert_eq!(s.samples_buffered(), 64);
    }

    #[test]
    fn wrong_chunk_size_rejected() {
        let w = small();
        let mut s = StreamState::new(&w).unwrap();
        assert!(matches!(s.push_frame(&[0.0; 63], &w), Err(Error::Parameter(_))));
    }

    #[test]
    fn silence_in_silence_out() {
        let w = small();
        let mut s = StreamState::new(&w).unwrap();
        for _ in 0..50 {
            if let Some(out) = s.push_frame(&[0.0; 64], &w).unwrap() {
                assert!(out.iter().all(|&v| v == 0.0));
            }
        }
    }
}
