//! Butterworth IIR filters realized as cascaded biquads.
//!
//! A 4th-order Butterworth section pair is used for each band edge. When the
//! upper edge sits at or above Nyquist the low-pass half is dropped and the
//! filter is a pure high-pass at the lower edge.

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::{all_finite, Scalar};

/// Default voice band used before analysis and after synthesis.
pub const VOICE_BAND_LOW_HZ: f64 = 40.0;
pub const VOICE_BAND_HIGH_HZ: f64 = 4000.0;

/// Q factors of the two biquads forming a 4th-order Butterworth response.
const BUTTERWORTH4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_5];

/// Band edges in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Default for BandSpec {
    fn default() -> Self {
        BandSpec {
            low_hz: VOICE_BAND_LOW_HZ,
            high_hz: VOICE_BAND_HIGH_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Biquad<T> {
    b0: T,
    b1: T,
    b2: T,
    a1: T,
    a2: T,
    z1: T,
    z2: T,
}

impl<T: Scalar> Biquad<T> {
    fn new(b: [f64; 3], a: [f64; 3]) -> Self {
        let n = a[0];
        Biquad {
            b0: T::of(b[0] / n),
            b1: T::of(b[1] / n),
            b2: T::of(b[2] / n),
            a1: T::of(a[1] / n),
            a2: T::of(a[2] / n),
            z1: T::zero(),
            z2: T::zero(),
        }
    }

    fn highpass(cutoff_hz: f64, sample_rate: f64, q: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / sample_rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        Biquad::new(
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    fn lowpass(cutoff_hz: f64, sample_rate: f64, q: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / sample_rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        Biquad::new(
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    // transposed direct form II
    #[inline]
    fn process(&mut self, x: T) -> T {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }

    fn reset(&mut self) {
        self.z1 = T::zero();
        self.z2 = T::zero();
    }

    fn magnitude_at(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b0.as_f64() + z1 * self.b1.as_f64() + z2 * self.b2.as_f64();
        let den = 1.0 + z1 * self.a1.as_f64() + z2 * self.a2.as_f64();
        (num / den).norm()
    }
}

/// Causal band-pass (or high-pass) filter with persistent state.
#[derive(Debug, Clone)]
pub struct BandpassFilter<T> {
    sections: Vec<Biquad<T>>,
    sample_rate: f64,
}

impl<T: Scalar> BandpassFilter<T> {
    pub fn design(band: BandSpec, sample_rate: u32) -> Result<Self> {
        let fs = sample_rate as f64;
        let nyquist = fs / 2.0;
        let BandSpec { low_hz, high_hz } = band;
        if !(low_hz.is_finite() && high_hz.is_finite()) || low_hz < 0.0 || low_hz >= high_hz {
            return Err(Error::param(format!(
                "band edges must satisfy 0 <= low < high (got {low_hz} Hz, {high_hz} Hz)"
            )));
        }
        if low_hz >= nyquist {
            return Err(Error::param(format!(
                "low edge {low_hz} Hz must be below Nyquist {nyquist} Hz"
            )));
        }
        let mut sections = Vec::with_capacity(4);
        if low_hz > 0.0 {
            for q in BUTTERWORTH4_Q {
                sections.push(Biquad::highpass(low_hz, fs, q));
            }
        }
        if high_hz < nyquist {
            for q in BUTTERWORTH4_Q {
                sections.push(Biquad::lowpass(high_hz, fs, q));
            }
        }
        Ok(BandpassFilter {
            sections,
            sample_rate: fs,
        })
    }

    /// True when the upper edge was dropped because it reaches Nyquist.
    pub fn is_highpass_only(&self) -> bool {
        self.sections.len() <= 2
    }

    #[inline]
    pub fn process_sample(&mut self, x: T) -> T {
        self.sections.iter_mut().fold(x, |acc, s| s.process(acc))
    }

    pub fn process_in_place(&mut self, samples: &mut [T]) {
        for s in samples.iter_mut() {
            *s = self.process_sample(*s);
        }
    }

    pub fn reset(&mut self) {
        self.sections.iter_mut().for_each(Biquad::reset);
    }

    /// Linear magnitude response at `freq_hz`.
    pub fn magnitude_response(&self, freq_hz: f64) -> f64 {
        self.sections
            .iter()
            .map(|s| s.magnitude_at(freq_hz, self.sample_rate))
            .product()
    }
}

/// Filters a whole signal from zero initial state.
pub fn bandpass_filter<T: Scalar>(
    signal: &AudioSignal<T>,
    low_hz: f64,
    high_hz: f64,
) -> Result<AudioSignal<T>> {
    if !all_finite(signal.samples()) {
        return Err(Error::data("filter input contains non-finite samples"));
    }
    let mut filter = BandpassFilter::design(BandSpec { low_hz, high_hz }, signal.sample_rate())?;
    let mut out = signal.samples().to_vec();
    filter.process_in_place(&mut out);
    Ok(signal.with_samples(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::signal::rms;

    fn sine(freq: f64, rate: u32, len: usize) -> AudioSignal<f64> {
        let s = (0..len)
            .map(|n| (2.0 * std::f64::consts::PI * freq * n as f64 / rate as f64).sin())
            .collect();
        AudioSignal::new(s, rate).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let z = AudioSignal::<f64>::zeros(500, 8000);
        let y = bandpass_filter(&z, 40.0, 4000.0).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
        assert_eq!(y.len(), 500);
    }

    #[test]
    fn voice_band_at_8k_is_highpass_only() {
        let f = BandpassFilter::<f64>::design(BandSpec::default(), 8000).unwrap();
        assert!(f.is_highpass_only());
        let f = BandpassFilter::<f64>::design(BandSpec::default(), 16000).unwrap();
        assert!(!f.is_highpass_only());
    }

    #[test]
    fn designed_response_matches_butterworth_shape() {
        let f = BandpassFilter::<f64>::design(BandSpec::default(), 8000).unwrap();
        // -3 dB at the cutoff
        let at_edge = 20.0 * f.magnitude_response(40.0).log10();
        assert!((at_edge + 3.0103).abs() < 0.01, "{at_edge}");
        assert!(20.0 * f.magnitude_response(1000.0).log10() > -0.01);
        assert!(20.0 * f.magnitude_response(10.0).log10() < -40.0);
    }

    #[test]
    fn passband_sine_keeps_level() {
        let x = sine(1000.0, 8000, 8000);
        let y = bandpass_filter(&x, 40.0, 4000.0).unwrap();
        let gain_db = 20.0 * (rms(&y.samples()[256..]) / rms(&x.samples()[256..])).log10();
        assert!(gain_db.abs() < 1.0, "{gain_db}");
    }

    #[test]
    fn subsonic_sine_is_attenuated() {
        let x = sine(10.0, 8000, 40000);
        let y = bandpass_filter(&x, 40.0, 4000.0).unwrap();
        let steady = 16000;
        let att_db = 20.0 * (rms(&y.samples()[steady..]) / rms(&x.samples()[steady..])).log10();
        assert!(att_db <= -20.0, "{att_db}");
    }

    #[test]
    fn invalid_edges_rejected() {
        let x = sine(100.0, 8000, 100);
        assert!(matches!(bandpass_filter(&x, 500.0, 100.0), Err(Error::Parameter(_))));
        assert!(matches!(bandpass_filter(&x, -1.0, 100.0), Err(Error::Parameter(_))));
        assert!(matches!(bandpass_filter(&x, 4000.0, 5000.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn linearity() {
        let a = sine(300.0, 8000, 1000);
        let b = sine(20.0, 8000, 1000);
        let combo: Vec<f64> = a
            .samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| 0.3 * x - 1.7 * y)
            .collect();
        let combo = AudioSignal::new(combo, 8000).unwrap();
        let fa = bandpass_filter(&a, 40.0, 4000.0).unwrap();
        let fb = bandpass_filter(&b, 40.0, 4000.0).unwrap();
        let fc = bandpass_filter(&combo, 40.0, 4000.0).unwrap();
        for i in 0..1000 {
            let expect = 0.3 * fa.samples()[i] - 1.7 * fb.samples()[i];
            assert!((fc.samples()[i] - expect).abs() < 1e-9);
        }
    }
}
