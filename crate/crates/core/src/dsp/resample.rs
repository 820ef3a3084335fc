//! Polyphase windowed-sinc sample-rate conversion.

use crate::dsp::AudioSignal;
use crate::scalar::Scalar;

const TAPS_PER_PHASE: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Cutoff as a fraction of the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.9;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Resamples to `target_rate` with a Kaiser-windowed sinc (β = 8.6, 64 taps per phase).
pub fn resample<T: Scalar>(signal: &AudioSignal<T>, target_rate: u32) -> AudioSignal<T> {
    let source_rate = signal.sample_rate();
    if target_rate == source_rate || signal.is_empty() {
        return AudioSignal::new(signal.samples().to_vec(), target_rate.max(1))
            .expect("samples already validated");
    }
    assert!(target_rate > 0, "target rate must be positive");
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (source_rate as u64 / g) as usize;

    // cutoff in cycles per input sample
    let cutoff = 0.5 * ROLLOFF * (target_rate.min(source_rate) as f64 / source_rate as f64);
    let half = TAPS_PER_PHASE as f64 / 2.0;
    let i0_beta = bessel_i0(KAISER_BETA);

    // phase p covers output times with fractional input offset p / up
    let mut table = vec![0.0f64; up * TAPS_PER_PHASE];
    for p in 0..up {
        let frac = p as f64 / up as f64;
        let taps = &mut table[p * TAPS_PER_PHASE..(p + 1) * TAPS_PER_PHASE];
        for (t, tap) in taps.iter_mut().enumerate() {
            // input index offset relative to floor(t_out): t - (half - 1)
            let tau = frac - (t as f64 - (half - 1.0));
            let r = tau / half;
            let w = if r.abs() <= 1.0 {
                bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta
            } else {
                0.0
            };
            *tap = 2.0 * cutoff * sinc(2.0 * cutoff * tau) * w;
        }
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|v| *v /= sum);
    }

    let x = signal.samples();
    let out_len = (x.len() * up).div_ceil(down);
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let pos = j * down;
        let base = (pos / up) as isize;
        let phase = pos % up;
        let taps = &table[phase * TAPS_PER_PHASE..(phase + 1) * TAPS_PER_PHASE];
        let mut acc = 0.0f64;
        for (t, &h) in taps.iter().enumerate() {
            let idx = base + t as isize - (TAPS_PER_PHASE as isize / 2 - 1);
            if idx >= 0 && (idx as usize) < x.len() {
                acc += h * x[idx as usize].as_f64();
            }
        }
        out.push(T::of(acc));
    }
    AudioSignal::new(out, target_rate).expect("resampled output is finite")
}
