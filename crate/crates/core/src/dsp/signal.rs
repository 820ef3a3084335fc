use crate::error::{Error, Result};
use crate::scalar::{all_finite, Scalar};

/// Mono sample sequence with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Scalar> AudioSignal<T> {
    /// Builds a signal, rejecting a zero sample rate or non-finite samples.
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::param("sample rate must be positive"));
        }
        if !all_finite(&samples) {
            return Err(Error::data("signal contains NaN or infinite samples"));
        }
        Ok(AudioSignal {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        AudioSignal {
            samples: vec![T::zero(); len],
            sample_rate: sample_rate.max(1),
        }
    }

    #[inline]
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [T] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    #[inline]
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> T {
        rms(&self.samples)
    }

    /// Same sample rate, new samples (used by operators that preserve rate).
    pub(crate) fn with_samples(&self, samples: Vec<T>) -> Self {
        AudioSignal {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub fn truncated(&self, len: usize) -> Self {
        self.with_samples(self.samples[..len.min(self.samples.len())].to_vec())
    }

    pub fn scaled(&self, gain: T) -> Self {
        self.with_samples(self.samples.iter().map(|&s| s * gain).collect())
    }

    pub fn cast<U: Scalar>(&self) -> AudioSignal<U> {
        AudioSignal {
            samples: self.samples.iter().map(|&s| U::of(s.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub fn rms<T: Scalar>(samples: &[T]) -> T {
    if samples.is_empty() {
        return T::zero();
    }
    let energy: T = samples.iter().map(|&s| s * s).sum();
    (energy / T::of_usize(samples.len())).sqrt()
}
