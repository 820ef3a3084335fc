//! Short-time objective intelligibility (the standard 10 kHz formulation).

use num_complex::Complex;

use crate::dsp::{resample, AudioSignal, FramePlan};
use crate::error::{Error, Result};
use crate::metrics::aligned;
use crate::scalar::Scalar;

/// Internal analysis rate.
pub const STOI_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const N_BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Segment length in frames (384 ms).
const SEGMENT: usize = 30;
/// Lower SDR bound for clipping, dB.
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;

/// `hanning(n + 2)[1..n+1]`: symmetric Hann without the zero endpoints.
fn stoi_window() -> Vec<f64> {
    let m = (FRAME + 2) as f64;
    (1..=FRAME)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (m - 1.0)).cos())
        .collect()
}

/// Drops frames more than 40 dB below the loudest clean frame and
/// overlap-adds the survivors.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if x.len() < FRAME {
        return (Vec::new(), Vec::new());
    }
    let starts: Vec<usize> = (0..=x.len() - FRAME).step_by(HOP).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let n = x[s..s + FRAME].iter().zip(w).map(|(a, b)| (a * b) * (a * b)).sum::<f64>().sqrt();
            20.0 * (n + f64::EPSILON).log10()
        })
        .collect();
    let max = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if keep.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let len = (keep.len() - 1) * HOP + FRAME;
    let mut xo = vec![0.0; len];
    let mut yo = vec![0.0; len];
    for (i, &s) in keep.iter().enumerate() {
        for k in 0..FRAME {
            xo[i * HOP + k] += x[s + k] * w[k];
            yo[i * HOP + k] += y[s + k] * w[k];
        }
    }
    (xo, yo)
}

/// Band-edge bin indices of the one-third-octave bands.
fn octave_bands() -> Vec<(usize, usize)> {
    let freqs: Vec<f64> = (0..=NFFT / 2).map(|k| k as f64 * STOI_RATE as f64 / NFFT as f64).collect();
    let nearest = |f: f64| {
        freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - f).powi(2).total_cmp(&(b.1 - f).powi(2)))
            .map(|(i, _)| i)
            .unwrap()
    };
    (0..N_BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes `[band][frame]`.
fn band_envelopes(x: &[f64], w: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let mut plan = FramePlan::<f64>::new(NFFT);
    let mut window = w.to_vec();
    window.resize(NFFT, 0.0);
    let mut spec = vec![Complex::new(0.0, 0.0); NFFT / 2 + 1];
    let mut out = vec![Vec::new(); bands.len()];
    // frames start strictly before len − FRAME, as in the reference
    let mut s = 0;
    while x.len() > FRAME && s < x.len() - FRAME {
        plan.analyze(&x[s..s + FRAME], &window, &mut spec);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let e: f64 = spec[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            out[b].push(e.sqrt());
        }
        s += HOP;
    }
    out
}

fn centred_unit(v: &mut [f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= m);
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// STOI in [0, 1]. Inputs are resampled to 10 kHz internally.
pub fn stoi<T: Scalar>(clean: &AudioSignal<T>, enhanced: &AudioSignal<T>) -> Result<f64> {
    let (x, y) = aligned(clean, enhanced)?;
    let rate = clean.sample_rate();
    let to_rate = |v: Vec<f64>| resample(&AudioSignal::new(v, rate).expect("finite"), STOI_RATE).into_samples();
    let (x, y) = (to_rate(x), to_rate(y));
    let w = stoi_window();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let bands = octave_bands();
    let xb = band_envelopes(&x, &w, &bands);
    let yb = band_envelopes(&y, &w, &bands);
    let n_frames = xb[0].len();
    if n_frames < SEGMENT {
        return Err(Error::data(format!(
            "STOI needs {SEGMENT} non-silent frames (384 ms), got {n_frames}"
        )));
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut xs = vec![0.0; SEGMENT];
    let mut ys = vec![0.0; SEGMENT];
    for m in SEGMENT..=n_frames {
        for b in 0..N_BANDS {
            xs.copy_from_slice(&xb[b][m - SEGMENT..m]);
            ys.copy_from_slice(&yb[b][m - SEGMENT..m]);
            let nx = xs.iter().map(|a| a * a).sum::<f64>().sqrt();
            let ny = ys.iter().map(|a| a * a).sum::<f64>().sqrt();
            let alpha = if ny > 0.0 { nx / ny } else { 0.0 };
            for (yv, &xv) in ys.iter_mut().zip(&xs) {
                *yv = (*yv * alpha).min(xv * (1.0 + clip));
            }
            let nxc = centred_unit(&mut xs);
            let nyc = centred_unit(&mut ys);
            let denom = nxc * nyc;
            if denom > 0.0 {
                total += xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>() / denom;
            }
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}
