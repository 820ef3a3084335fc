use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::metrics::aligned;
use crate::scalar::Scalar;

pub const SEGSNR_MIN_DB: f64 = -10.0;
pub const SEGSNR_MAX_DB: f64 = 35.0;
/// Frames whose clean energy is this far below the loudest frame are silent.
const SILENCE_RANGE_DB: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SegSnrDetail {
    /// Indices of the frames that entered the mean.
    pub frames: Vec<usize>,
    /// Unclamped per-frame SNR in dB (may be +inf for an exact frame).
    pub raw_db: Vec<f64>,
    pub clamped_db: Vec<f64>,
    pub mean_db: f64,
}

/// Per-frame SNR over non-overlapping frames, clamped to [−10, 35] dB and
/// averaged over non-silent clean frames. A trailing partial frame is ignored.
pub fn seg_snr_detail<T: Scalar>(
    clean: &AudioSignal<T>,
    enhanced: &AudioSignal<T>,
    frame_length: usize,
) -> Result<SegSnrDetail> {
    if frame_length == 0 {
        return Err(Error::param("frame length must be positive"));
    }
    let (x, y) = aligned(clean, enhanced)?;
    let energies: Vec<(f64, f64)> = x
        .chunks_exact(frame_length)
        .zip(y.chunks_exact(frame_length))
        .map(|(a, b)| {
            let sig = a.iter().map(|v| v * v).sum::<f64>();
            let err = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            (sig, err)
        })
        .collect();
    let peak = energies.iter().map(|e| e.0).fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(-SILENCE_RANGE_DB / 10.0);
    let mut detail = SegSnrDetail {
        frames: Vec::new(),
        raw_db: Vec::new(),
        clamped_db: Vec::new(),
        mean_db: 0.0,
    };
    for (i, &(sig, err)) in energies.iter().enumerate() {
        if !(sig > threshold) {
            continue;
        }
        let raw = 10.0 * (sig / err).log10();
        detail.frames.push(i);
        detail.raw_db.push(raw);
        detail.clamped_db.push(raw.clamp(SEGSNR_MIN_DB, SEGSNR_MAX_DB));
    }
    if detail.frames.is_empty() {
        return Err(Error::data("segmental SNR undefined: every clean frame is silent"));
    }
    detail.mean_db = detail.clamped_db.iter().sum::<f64>() / detail.clamped_db.len() as f64;
    Ok(detail)
}

pub fn seg_snr<T: Scalar>(clean: &AudioSignal<T>, enhanced: &AudioSignal<T>, frame_length: usize) -> Result<f64> {
    Ok(seg_snr_detail(clean, enhanced, frame_length)?.mean_db)
}
