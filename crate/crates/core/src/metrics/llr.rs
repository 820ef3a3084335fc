use crate::dsp::{hann_window, AudioSignal};
use crate::error::{Error, Result};
use crate::metrics::aligned;
use crate::scalar::Scalar;

pub const LPC_ORDER: usize = 10;
const FRAME_SECS: f64 = 0.025;
const HOP_SECS: f64 = 0.010;
const KEEP_FRACTION: f64 = 0.95;
/// Frames with autocorrelation lag-0 at or below this are degenerate.
const ENERGY_FLOOR: f64 = 1e-20;

fn autocorrelation(frame: &[f64], order: usize) -> Vec<f64> {
    (0..=order)
        .map(|lag| frame[lag..].iter().zip(frame).map(|(a, b)| a * b).sum())
        .collect()
}

/// Prediction-error filter `[1, a1, …, ap]` from autocorrelation `r[0..=p]`.
/// Returns `None` when the recursion hits a non-positive error power.
pub fn levinson_durbin(r: &[f64]) -> Option<Vec<f64>> {
    let p = r.len() - 1;
    let mut a = vec![0.0; p + 1];
    a[0] = 1.0;
    let mut err = r[0];
    if !(err > 0.0) {
        return None;
    }
    let mut prev = a.clone();
    for i in 1..=p {
        let acc: f64 = (0..i).map(|j| prev[j] * r[i - j]).sum();
        let k = -acc / err;
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err > 0.0) {
            return None;
        }
        prev.copy_from_slice(&a);
    }
    Some(a)
}

/// `a · R · aᵀ` with `R` the symmetric Toeplitz matrix of `r`.
fn toeplitz_form(a: &[f64], r: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            s += a[i] * r[i.abs_diff(j)] * a[j];
        }
    }
    s
}

/// Per-frame LLR values, degenerate frames omitted.
pub fn llr_frames<T: Scalar>(clean: &AudioSignal<T>, enhanced: &AudioSignal<T>) -> Result<Vec<f64>> {
    let (x, y) = aligned(clean, enhanced)?;
    let fs = clean.sample_rate() as f64;
    let len = (FRAME_SECS * fs).round() as usize;
    let hop = (HOP_SECS * fs).round() as usize;
    if len <= LPC_ORDER || x.len() < len {
        return Err(Error::data(format!(
            "LLR needs at least one {len}-sample frame, signal has {}",
            x.len()
        )));
    }
    let window: Vec<f64> = hann_window(len);
    let mut out = Vec::new();
    let mut cf = vec![0.0; len];
    let mut ef = vec![0.0; len];
    let mut start = 0;
    while start + len <= x.len() {
        for k in 0..len {
            cf[k] = x[start + k] * window[k];
            ef[k] = y[start + k] * window[k];
        }
        start += hop;
        let rc = autocorrelation(&cf, LPC_ORDER);
        let re = autocorrelation(&ef, LPC_ORDER);
        if rc[0] <= ENERGY_FLOOR || re[0] <= ENERGY_FLOOR {
            continue;
        }
        let (Some(ac), Some(ae)) = (levinson_durbin(&rc), levinson_durbin(&re)) else {
            continue;
        };
        let num = toeplitz_form(&ae, &rc);
        let den = toeplitz_form(&ac, &rc);
        if num > 0.0 && den > 0.0 {
            out.push((num / den).ln());
        }
    }
    Ok(out)
}

/// Mean of the smallest 95% of per-frame LLR values (lower is closer).
pub fn llr<T: Scalar>(clean: &AudioSignal<T>, enhanced: &AudioSignal<T>) -> Result<f64> {
    let mut frames = llr_frames(clean, enhanced)?;
    if frames.is_empty() {
        return Err(Error::data("LLR undefined: every analysis frame is degenerate"));
    }
    frames.sort_by(f64::total_cmp);
    let keep = ((frames.len() as f64 * KEEP_FRACTION).floor() as usize).max(1);
    Ok(frames[..keep].iter().sum::<f64>() / keep as f64)
}
