//! Time-domain and time-frequency primitives.

pub mod features;
pub mod filter;
pub mod resample;
pub mod signal;
pub mod stft;
pub mod wav;

pub use features::{log_power_features, raw_segment_feature, stacked_mean, RawSegmentFeature, LOG_FLOOR};
pub use filter::{bandpass_filter, BandSpec, BandpassFilter};
pub use resample::resample;
pub use signal::{rms, AudioSignal};
pub use stft::{frame_signal, hann_window, istft, stft, FramePlan, FrameGrid, Spectrogram};
