//! Frame-by-frame streaming enhancement and latency profiling.

mod profile;
mod stream;

pub use profile::{profile_stream, LatencyReport, StageStats};
pub use stream::{StageTimes, StreamState};
