//! Dual-branch transformer mask estimator.
//!
//! Spectral branch: one token per context frame (normalized log magnitude,
//! linear projection). Raw branch: the stacked-mean waveform segment, densely
//! embedded and batch-normalized into a single extra token. Both are fused by
//! concatenation, pass through pre-norm transformer layers, get flattened and
//! regressed by an MLP head into a clean mask and a noise mask for the newest
//! frame.

mod config;
mod graph;
mod infer;
mod io;
mod weights;

pub use config::ModelConfig;
pub use graph::{forward_batch, BatchInput, BatchOutput};
pub use infer::{build_inputs, forward, predict, InferenceWorkspace, MaskPrediction};
pub use io::{load_weights, read_weights, save_weights, write_weights, FORMAT_VERSION, MAGIC};
pub use weights::{ModelWeights, POSITIONAL_NAME};
