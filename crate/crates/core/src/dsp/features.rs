use crate::dsp::{AudioSignal, Spectrogram};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Magnitude floor applied before taking the log (bounds features at ≈ -18.42).
pub const LOG_FLOOR: f64 = 1e-8;

/// Elementwise `ln(max(|X|, floor))`.
pub fn log_power_features<T: Scalar>(spec: &Spectrogram<T>, floor: T) -> Result<Matrix<T>> {
    if !(floor > T::zero()) {
        return Err(Error::param("log floor must be positive"));
    }
    Ok(spec.magnitude().map(|a| a.max(floor).ln()))
}

/// Averaged raw-waveform segment.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSegmentFeature<T> {
    pub values: Vec<T>,
    pub n_frames_averaged: usize,
}

/// Stacks `n_frames` non-overlapping frames and averages them sample-wise.
pub fn raw_segment_feature<T: Scalar>(
    signal: &AudioSignal<T>,
    frame_length: usize,
    n_frames: usize,
) -> Result<RawSegmentFeature<T>> {
    stacked_mean(signal.samples(), frame_length, frame_length, n_frames)
}

/// Sample-wise mean of `n_frames` frames of `frame_length` starting every `stride`
/// samples. With `stride == frame_length` the frames do not overlap.
pub fn stacked_mean<T: Scalar>(
    samples: &[T],
    frame_length: usize,
    stride: usize,
    n_frames: usize,
) -> Result<RawSegmentFeature<T>> {
    if frame_length == 0 || stride == 0 || n_frames == 0 {
        return Err(Error::param("frame length, stride and frame count must be positive"));
    }
    let needed = (n_frames - 1) * stride + frame_length;
    if samples.len() < needed {
        return Err(Error::data(format!(
            "raw segment needs {needed} samples, signal has {}",
            samples.len()
        )));
    }
    let mut values = vec![T::zero(); frame_length];
    for i in 0..n_frames {
        let frame = &samples[i * stride..i * stride + frame_length];
        for (v, &s) in values.iter_mut().zip(frame) {
            *v += s;
        }
    }
    let inv = T::one() / T::of_usize(n_frames);
    values.iter_mut().for_each(|v| *v *= inv);
    Ok(RawSegmentFeature {
        values,
        n_frames_averaged: n_frames,
    })
}
