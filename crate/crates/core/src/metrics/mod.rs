//! Objective quality measures: segmental SNR, LPC log-likelihood ratio,
//! short-time objective intelligibility, and scale-invariant SDR.

mod llr;
mod report;
mod segsnr;
mod sisdr;
mod stoi;

pub use llr::{levinson_durbin, llr, llr_frames, LPC_ORDER};
pub use report::{evaluate, evaluate_pairs, parse_pairs, ConditionSummary, EvaluationPair, MetricReport};
pub use segsnr::{seg_snr, seg_snr_detail, SegSnrDetail, SEGSNR_MAX_DB, SEGSNR_MIN_DB};
pub use sisdr::{si_sdr, SI_SDR_CAP_DB};
pub use stoi::{stoi, STOI_RATE};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Both signals as f64 at a common length; unequal lengths truncate with a warning.
pub(crate) fn aligned<T: Scalar>(clean: &AudioSignal<T>, enhanced: &AudioSignal<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    if clean.sample_rate() != enhanced.sample_rate() {
        return Err(Error::param(format!(
            "clean at {} Hz vs enhanced at {} Hz",
            clean.sample_rate(),
            enhanced.sample_rate()
        )));
    }
    let n = clean.len().min(enhanced.len());
    if clean.len() != enhanced.len() {
        log::warn!(
            "metric inputs differ in length ({} vs {}), truncating to {n}",
            clean.len(),
            enhanced.len()
        );
    }
    let f = |s: &AudioSignal<T>| s.samples()[..n].iter().map(|v| v.as_f64()).collect();
    Ok((f(clean), f(enhanced)))
}
