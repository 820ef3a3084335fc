//! Synthetic speech and noise surrogates so everything runs without external
//! corpora. "Speech" is a harmonic source with gliding pitch, formant-shaped
//! harmonic amplitudes and syllable-rate gating; the noises cover broadband,
//! tonal-sweep, impulsive and coloured cases.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::mixing::{mix_signals, Mixture};
use crate::dsp::AudioSignal;
use crate::error::{Error, Result};

const SPEECH_RMS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Chirp,
    ImpulseTrain,
    Filtered,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::White,
        NoiseKind::Chirp,
        NoiseKind::ImpulseTrain,
        NoiseKind::Filtered,
    ];
    /// Kinds with energy in every frame (no silent gaps between events).
    pub const CONTINUOUS: [NoiseKind; 3] = [NoiseKind::White, NoiseKind::Chirp, NoiseKind::Filtered];
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::White => "white",
            NoiseKind::Chirp => "chirp",
            NoiseKind::ImpulseTrain => "impulse_train",
            NoiseKind::Filtered => "filtered",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::param(format!("unknown noise kind `{s}`")))
    }
}

fn normalize(mut x: Vec<f64>, target_rms: f64) -> Vec<f64> {
    let r = crate::dsp::rms(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target_rms / r);
    }
    x
}

fn formant_gain(freq: f64, f1: f64, f2: f64) -> f64 {
    let bump = |c: f64, w: f64| (-((freq - c) / w).powi(2)).exp();
    0.05 + bump(f1, 150.0) + 0.6 * bump(f2, 250.0)
}

/// Harmonic "speech" surrogate with syllable gating and short pauses.
pub fn speech_like(seed: u64, n_samples: usize, sample_rate: u32) -> AudioSignal<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = sample_rate as f64;
    let nyquist = fs / 2.0;
    let mut out = vec![0.0; n_samples];
    let base_f0: f64 = rng.gen_range(100.0..220.0);
    let mut pos = (rng.gen_range(0.02..0.08) * fs) as usize;
    let mut phase = 0.0f64;
    while pos < n_samples {
        let len = (rng.gen_range(0.12..0.3) * fs) as usize;
        let gap = (rng.gen_range(0.04..0.12) * fs) as usize;
        let f0_start: f64 = base_f0 * rng.gen_range(0.85..1.15);
        let f0_end = base_f0 * rng.gen_range(0.85..1.15);
        let f1 = rng.gen_range(300.0..800.0);
        let f2 = rng.gen_range(900.0..2500.0);
        let n_harm = ((nyquist * 0.95) / f0_start.max(f0_end)).floor() as usize;
        let gains: Vec<f64> = (1..=n_harm)
            .map(|k| formant_gain(k as f64 * (f0_start + f0_end) / 2.0, f1, f2) / (k as f64).sqrt())
            .collect();
        let level = rng.gen_range(0.5..1.0);
        for i in 0..len.min(n_samples - pos) {
            let u = i as f64 / len as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            phase += 2.0 * PI * f0 / fs;
            let env = level * (PI * u).sin().powi(2);
            let v: f64 = gains
                .iter()
                .enumerate()
                .map(|(k, g)| g * ((k + 1) as f64 * phase).sin())
                .sum();
            out[pos + i] = env * v;
        }
        pos += len + gap;
    }
    AudioSignal::new(normalize(out, SPEECH_RMS), sample_rate).expect("finite synthesis")
}

/// Noise surrogate of the given kind, unit-ish level (RMS 0.1).
pub fn noise(kind: NoiseKind, seed: u64, n_samples: usize, sample_rate: u32) -> AudioSignal<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let fs = sample_rate as f64;
    let x: Vec<f64> = match kind {
        NoiseKind::White => (0..n_samples).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        NoiseKind::Chirp => {
            let period = rng.gen_range(0.3..0.7) * fs;
            let (lo, hi) = (100.0, 0.45 * fs);
            let mut phase = 0.0;
            (0..n_samples)
                .map(|n| {
                    let u = (n as f64 % period) / period;
                    phase += 2.0 * PI * (lo + (hi - lo) * u) / fs;
                    phase.sin()
                })
                .collect()
        }
        NoiseKind::ImpulseTrain => {
            let mut x = vec![0.0; n_samples];
            let spacing = fs / rng.gen_range(5.0..12.0);
            let mut t = rng.gen_range(0.0..spacing);
            while (t as usize) < n_samples {
                let amp = rng.gen_range(0.5..1.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let decay = rng.gen_range(0.002..0.006) * fs;
                for (i, v) in x[t as usize..].iter_mut().take((6.0 * decay) as usize).enumerate() {
                    *v += amp * (-(i as f64) / decay).exp() * rng.gen_range(-1.0..1.0);
                }
                t += spacing * rng.gen_range(0.7..1.3);
            }
            x
        }
        NoiseKind::Filtered => {
            let a = rng.gen_range(0.85..0.97);
            let mut y = 0.0;
            (0..n_samples)
                .map(|_| {
                    y = a * y + (1.0 - a) * rng.gen_range(-1.0..1.0);
                    y
                })
                .collect()
        }
    };
    AudioSignal::new(normalize(x, 0.1), sample_rate).expect("finite synthesis")
}

/// One synthetic mixture with its provenance.
#[derive(Debug, Clone)]
pub struct SyntheticMixture {
    pub utterance: usize,
    pub kind: NoiseKind,
    pub snr_db: f64,
    pub seed: u64,
    pub mixture: Mixture<f64>,
}

/// `n` mixtures cycling through the SNRs fastest, then the noise kinds.
pub fn synthetic_mixtures(
    n: usize,
    snrs_db: &[f64],
    kinds: &[NoiseKind],
    duration_secs: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<SyntheticMixture>> {
    if snrs_db.is_empty() || kinds.is_empty() {
        return Err(Error::param("need at least one SNR and one noise kind"));
    }
    let len = (duration_secs * sample_rate as f64).round() as usize;
    (0..n)
        .map(|i| {
            let s = seed.wrapping_mul(1000).wrapping_add(i as u64);
            let snr = snrs_db[i % snrs_db.len()];
            let kind = kinds[(i / snrs_db.len()) % kinds.len()];
            let clean = speech_like(s, len, sample_rate);
            let nz = noise(kind, s, len + len / 3, sample_rate);
            Ok(SyntheticMixture {
                utterance: i,
                kind,
                snr_db: snr,
                seed: s,
                mixture: mix_signals(&clean, &nz, snr, s)?,
            })
        })
        .collect()
}
