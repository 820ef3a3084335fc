use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::metrics::aligned;
use crate::scalar::Scalar;

/// Magnitude of the sentinel returned for zero residual / zero projection.
pub const SI_SDR_CAP_DB: f64 = 100.0;

fn zero_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Scale-invariant SDR in dB, capped to ±100 dB.
pub fn si_sdr<T: Scalar>(clean: &AudioSignal<T>, enhanced: &AudioSignal<T>) -> Result<f64> {
    let (mut x, mut y) = aligned(clean, enhanced)?;
    zero_mean(&mut x);
    zero_mean(&mut y);
    let xx: f64 = x.iter().map(|v| v * v).sum();
    if !(xx > 0.0) {
        return Err(Error::data("SI-SDR undefined for a zero (or constant) clean signal"));
    }
    let alpha = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / xx;
    let mut target = 0.0;
    let mut resid = 0.0;
    for (&a, &b) in x.iter().zip(&y) {
        let t = alpha * a;
        target += t * t;
        resid += (b - t) * (b - t);
    }
    if resid == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / resid).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}
