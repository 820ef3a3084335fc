use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::manifest::MixtureSpec;
use crate::dsp::wav::read_wav;
use crate::dsp::{resample, AudioSignal};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::PIPELINE_SAMPLE_RATE;

/// Aligned mixture triple `mix = clean + noise` where `noise` is already scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture<T> {
    pub mix: AudioSignal<T>,
    pub clean: AudioSignal<T>,
    pub noise: AudioSignal<T>,
    pub gain: T,
}

/// `G = rms(clean)/rms(noise) · 10^(−snr/20)`.
pub fn compute_noise_gain<T: Scalar>(
    clean: &AudioSignal<T>,
    noise: &AudioSignal<T>,
    target_snr_db: f64,
) -> Result<T> {
    if !target_snr_db.is_finite() {
        return Err(Error::param(format!("target SNR {target_snr_db} is not finite")));
    }
    let (rc, rn) = (clean.rms(), noise.rms());
    if !(rc > T::zero()) || !(rn > T::zero()) {
        return Err(Error::data("noise gain needs clean and noise with nonzero RMS"));
    }
    Ok(rc / rn * T::of(10f64.powf(-target_snr_db / 20.0)))
}

/// `10·log10(Σs² / Σn²)`.
pub fn snr_db<T: Scalar>(signal: &[T], noise: &[T]) -> f64 {
    let e = |x: &[T]| x.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
    10.0 * (e(signal) / e(noise)).log10()
}

/// Loops or trims `noise` to `len` samples from a seeded random offset.
fn fit_length<T: Scalar>(noise: &[T], len: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if noise.len() >= len {
        let start = rng.gen_range(0..=noise.len() - len);
        noise[start..start + len].to_vec()
    } else {
        let start = rng.gen_range(0..noise.len());
        (0..len).map(|i| noise[(start + i) % noise.len()]).collect()
    }
}

/// Mixes two signals at the pipeline rate. The noise is fitted to the clean
/// length first, and the gain is computed on the fitted segment.
pub fn mix_signals<T: Scalar>(
    clean: &AudioSignal<T>,
    noise: &AudioSignal<T>,
    target_snr_db: f64,
    seed: u64,
) -> Result<Mixture<T>> {
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::param(format!(
            "clean at {} Hz and noise at {} Hz must share a rate",
            clean.sample_rate(),
            noise.sample_rate()
        )));
    }
    if clean.is_empty() || noise.is_empty() {
        return Err(Error::data("cannot mix empty signals"));
    }
    let fitted = noise.with_samples(fit_length(noise.samples(), clean.len(), seed));
    let gain = compute_noise_gain(clean, &fitted, target_snr_db)?;
    let scaled = fitted.scaled(gain);
    let mix: Vec<T> = clean
        .samples()
        .iter()
        .zip(scaled.samples())
        .map(|(&s, &n)| s + n)
        .collect();
    Ok(Mixture {
        mix: clean.with_samples(mix),
        clean: clean.clone(),
        noise: scaled,
        gain,
    })
}

fn load_at_pipeline_rate<T: Scalar>(path: &std::path::Path) -> Result<AudioSignal<T>> {
    let s = read_wav(path)?;
    if s.sample_rate() != PIPELINE_SAMPLE_RATE {
        Ok(resample(&s, PIPELINE_SAMPLE_RATE))
    } else {
        Ok(s)
    }
}

/// Reads both files, resamples to 8 kHz and mixes at the requested SNR.
pub fn make_mixture<T: Scalar>(spec: &MixtureSpec) -> Result<Mixture<T>> {
    let clean = load_at_pipeline_rate(&spec.clean_path)?;
    let noise = load_at_pipeline_rate(&spec.noise_path)?;
    mix_signals(&clean, &noise, spec.target_snr_db, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn sig(v: Vec<f64>) -> AudioSignal<f64> {
        AudioSignal::new(v, 8000).unwrap()
    }

    fn noise_like(seed: u64, len: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn equal_rms_gains() {
        let a = sig(vec![1.0, -1.0, 1.0, -1.0]);
        let b = sig(vec![-1.0, 1.0, 1.0, -1.0]);
        assert!((compute_noise_gain(&a, &b, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let g = compute_noise_gain(&a, &b, 10.0).unwrap();
        assert!((g - 10f64.powf(-0.5)).abs() < 1e-15);
        assert!((g - 0.31623).abs() < 1e-5);
    }

    #[test]
    fn zero_rms_is_data_error() {
        let a = sig(vec![0.0; 8]);
        let b = sig(vec![1.0; 8]);
        assert!(matches!(compute_noise_gain(&a, &b, 0.0), Err(Error::Data(_))));
        assert!(matches!(compute_noise_gain(&b, &a, 0.0), Err(Error::Data(_))));
    }

    #[test]
    fn negated_clean_cancels() {
        let c = noise_like(1, 400);
        let n: Vec<f64> = c.iter().map(|v| -v).collect();
        let m = mix_signals(&sig(c), &sig(n), 0.0, 3).unwrap();
        assert!((m.gain - 1.0).abs() < 1e-12);
        assert!(m.mix.rms() < 1e-12);
    }

    #[test]
    fn deterministic_and_exact() {
        let c = sig(noise_like(1, 1000));
        let n = sig(noise_like(2, 333));
        let a = mix_signals(&c, &n, 3.0, 9).unwrap();
        let b = mix_signals(&c, &n, 3.0, 9).unwrap();
        assert_eq!(a, b);
        for i in 0..1000 {
            let resid = a.mix.samples()[i] - a.clean.samples()[i] - a.noise.samples()[i];
            assert!(resid.abs() <= 4.0 * f64::EPSILON);
        }
    }

    proptest! {
        #[test]
        fn measured_snr_matches_target(seed in 0u64..1000, snr in -10.0f64..20.0, nlen in 50usize..900) {
            let c = sig(noise_like(seed, 600));
            let n = sig(noise_like(seed + 7, nlen));
            let m = mix_signals(&c, &n, snr, seed).unwrap();
            let measured = snr_db(m.clean.samples(), m.noise.samples());
            prop_assert!((measured - snr).abs() < 0.01);
        }
    }
}
