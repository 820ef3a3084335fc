//! Dual-input transformer noise suppression.
//!
//! The pipeline band-limits a noisy 8 kHz signal, computes a 128/64 Hann STFT,
//! feeds log-magnitude frames plus an averaged raw-waveform token to a small
//! transformer that predicts a clean mask and a noise mask, subtracts the two
//! masked magnitudes, and resynthesizes with the noisy phase.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); aliases for the
//! common instantiations live at the crate root.

pub mod data;
pub mod dsp;
pub mod error;
pub mod mask;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod runtime;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// Sample rate every stage of the pipeline runs at.
pub const PIPELINE_SAMPLE_RATE: u32 = 8000;

pub type Signal = dsp::AudioSignal<f64>;
pub type Signal32 = dsp::AudioSignal<f32>;
pub type Spectrogram = dsp::Spectrogram<f64>;
pub type Spectrogram32 = dsp::Spectrogram<f32>;
pub type FrameGrid = dsp::FrameGrid<f64>;
pub type MaskPair = mask::MaskPair<f64>;
pub type Tensor = nn::Tensor<f64>;
pub type ParamStore = nn::ParamStore<f64>;
pub type ModelWeights = model::ModelWeights<f64>;
pub type ModelWeights32 = model::ModelWeights<f32>;
pub type StreamState = runtime::StreamState<f64>;
pub type StreamState32 = runtime::StreamState<f32>;
