//! Framing, short-time Fourier transform and weighted overlap-add inverse.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const DEFAULT_FRAME_LENGTH: usize = 128;
pub const DEFAULT_HOP: usize = 64;

/// Envelope values at or below this are treated as uncovered by any window.
pub(crate) const ENVELOPE_FLOOR: f64 = 1e-6;
const COLA_TOLERANCE: f64 = 1e-10;

/// Frame length, hop and analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid<T> {
    frame_length: usize,
    hop: usize,
    window: Vec<T>,
}

impl<T: Scalar> FrameGrid<T> {
    pub fn new(frame_length: usize, hop: usize, window: Vec<T>) -> Result<Self> {
        if hop == 0 || hop > frame_length {
            return Err(Error::param(format!(
                "hop must satisfy 0 < hop <= frame_length (hop {hop}, frame {frame_length})"
            )));
        }
        if window.len() != frame_length {
            return Err(Error::param(format!(
                "window has {} taps, frame length is {frame_length}",
                window.len()
            )));
        }
        if window.iter().any(|&w| !(w >= T::zero() && w <= T::one())) {
            return Err(Error::param("window values must lie in [0, 1]"));
        }
        Ok(FrameGrid {
            frame_length,
            hop,
            window,
        })
    }

    /// Periodic Hann window, which is COLA at hop = frame_length / 2.
    pub fn hann(frame_length: usize, hop: usize) -> Result<Self> {
        Self::new(frame_length, hop, hann_window(frame_length))
    }

    pub fn rectangular(frame_length: usize, hop: usize) -> Result<Self> {
        Self::new(frame_length, hop, vec![T::one(); frame_length])
    }

    /// 128-sample Hann frames with 50% overlap (16 ms at 8 kHz).
    pub fn standard() -> Self {
        Self::hann(DEFAULT_FRAME_LENGTH, DEFAULT_HOP).expect("default grid is valid")
    }

    #[inline]
    pub fn frame_length(&self) -> usize {
        self.frame_length
    }

    #[inline]
    pub fn hop(&self) -> usize {
        self.hop
    }

    #[inline]
    pub fn window(&self) -> &[T] {
        &self.window
    }

    #[inline]
    pub fn n_bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    /// Frames needed to cover `len` samples, the last one zero-padded if partial.
    pub fn n_frames(&self, len: usize) -> usize {
        if len <= self.frame_length {
            1
        } else {
            1 + (len - self.frame_length).div_ceil(self.hop)
        }
    }

    /// Steady-state overlapped window sum for each of the `hop` phases.
    pub fn overlap_sum(&self) -> Vec<T> {
        (0..self.hop)
            .map(|k| self.window.iter().skip(k).step_by(self.hop).copied().sum())
            .collect()
    }

    /// Constant-overlap-add check on the steady-state window sum.
    pub fn is_cola(&self) -> bool {
        let sums = self.overlap_sum();
        let max = sums.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
        let min = sums.iter().copied().fold(T::infinity(), T::min).as_f64();
        min > ENVELOPE_FLOOR && (max - min) <= COLA_TOLERANCE * max.max(1.0)
    }

    pub fn cast<U: Scalar>(&self) -> FrameGrid<U> {
        FrameGrid {
            frame_length: self.frame_length,
            hop: self.hop,
            window: self.window.iter().map(|&w| U::of(w.as_f64())).collect(),
        }
    }

    pub(crate) fn require_power_of_two(&self) -> Result<()> {
        if !self.frame_length.is_power_of_two() {
            return Err(Error::param(format!(
                "frame length {} is not a power of two",
                self.frame_length
            )));
        }
        Ok(())
    }
}

pub fn hann_window<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|k| {
            let phase = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            T::of(0.5 - 0.5 * phase.cos())
        })
        .collect()
}

/// Windowed frames as rows: row `i` = window ⊙ samples[i·hop .. i·hop + frame_length].
pub fn frame_signal<T: Scalar>(signal: &AudioSignal<T>, grid: &FrameGrid<T>) -> Result<Matrix<T>> {
    let n = grid.frame_length();
    if signal.len() < n {
        return Err(Error::data(format!(
            "signal of {} samples is shorter than one {n}-sample frame",
            signal.len()
        )));
    }
    let n_frames = grid.n_frames(signal.len());
    let x = signal.samples();
    let mut frames = Matrix::zeros(n_frames, n);
    for i in 0..n_frames {
        let start = i * grid.hop();
        let avail = (x.len() - start).min(n);
        let row = frames.row_mut(i);
        for k in 0..avail {
            row[k] = grid.window()[k] * x[start + k];
        }
    }
    Ok(frames)
}

/// Complex one-sided time-frequency matrix (frames × bins).
#[derive(Debug, Clone)]
pub struct Spectrogram<T> {
    bins: Vec<Complex<T>>,
    n_frames: usize,
    grid: FrameGrid<T>,
    sample_rate: u32,
    signal_len: usize,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn from_bins(
        bins: Vec<Complex<T>>,
        n_frames: usize,
        grid: FrameGrid<T>,
        sample_rate: u32,
        signal_len: usize,
    ) -> Result<Self> {
        if bins.len() != n_frames * grid.n_bins() {
            return Err(Error::param(format!(
                "{} bins do not fill {n_frames} frames of {} bins",
                bins.len(),
                grid.n_bins()
            )));
        }
        if bins.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::data("spectrogram contains non-finite bins"));
        }
        Ok(Spectrogram {
            bins,
            n_frames,
            grid,
            sample_rate,
            signal_len,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Spectrogram {
            bins: vec![Complex::new(T::zero(), T::zero()); self.bins.len()],
            ..self.clone()
        }
    }

    #[inline]
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    #[inline]
    pub fn n_bins(&self) -> usize {
        self.grid.n_bins()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.n_frames, self.n_bins())
    }

    pub fn grid(&self) -> &FrameGrid<T> {
        &self.grid
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Length of the signal this spectrogram was computed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    #[inline]
    pub fn get(&self, frame: usize, bin: usize) -> Complex<T> {
        self.bins[frame * self.n_bins() + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex<T>] {
        let nb = self.n_bins();
        &self.bins[frame * nb..(frame + 1) * nb]
    }

    pub fn bins(&self) -> &[Complex<T>] {
        &self.bins
    }

    pub fn magnitude(&self) -> Matrix<T> {
        Matrix::from_vec(
            self.n_frames,
            self.n_bins(),
            self.bins.iter().map(|c| c.norm()).collect(),
        )
        .expect("shape is consistent")
    }

    /// Phase in (-π, π].
    pub fn phase(&self) -> Matrix<T> {
        Matrix::from_vec(
            self.n_frames,
            self.n_bins(),
            self.bins.iter().map(|c| principal_phase(*c)).collect(),
        )
        .expect("shape is consistent")
    }

    pub(crate) fn same_layout(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self.grid == other.grid
            && self.sample_rate == other.sample_rate
    }
}

#[inline]
pub(crate) fn principal_phase<T: Scalar>(c: Complex<T>) -> T {
    let p = c.im.atan2(c.re);
    if p <= -T::PI() {
        T::PI()
    } else {
        p
    }
}

/// Reusable forward/inverse transforms with preallocated buffers; the
/// per-frame methods perform no heap allocation.
pub struct FramePlan<T: Scalar> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    buffer: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
    n: usize,
}

impl<T: Scalar> FramePlan<T> {
    pub fn new(frame_length: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(frame_length);
        let inverse = planner.plan_fft_inverse(frame_length);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        FramePlan {
            forward,
            inverse,
            buffer: vec![Complex::new(T::zero(), T::zero()); frame_length],
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
            n: frame_length,
        }
    }

    /// One-sided spectrum of `window ⊙ samples`. Missing trailing samples are zero.
    pub fn analyze(&mut self, samples: &[T], window: &[T], out: &mut [Complex<T>]) {
        for (k, slot) in self.buffer.iter_mut().enumerate() {
            let x = samples.get(k).copied().unwrap_or_else(T::zero);
            *slot = Complex::new(window[k] * x, T::zero());
        }
        self.forward
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        out.copy_from_slice(&self.buffer[..self.n / 2 + 1]);
    }

    /// Real time-domain frame from a one-sided spectrum (Hermitian extension).
    pub fn synthesize(&mut self, bins: &[Complex<T>], out: &mut [T]) {
        let n = self.n;
        let half = n / 2;
        self.buffer[0] = Complex::new(bins[0].re, T::zero());
        for m in 1..half {
            self.buffer[m] = bins[m];
            self.buffer[n - m] = bins[m].conj();
        }
        if n > 1 {
            self.buffer[half] = Complex::new(bins[half].re, T::zero());
        }
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let scale = T::one() / T::of_usize(n);
        for (o, c) in out.iter_mut().zip(&self.buffer) {
            *o = c.re * scale;
        }
    }
}

pub fn stft<T: Scalar>(signal: &AudioSignal<T>, grid: &FrameGrid<T>) -> Result<Spectrogram<T>> {
    grid.require_power_of_two()?;
    let n = grid.frame_length();
    if signal.len() < n {
        return Err(Error::data(format!(
            "signal of {} samples is shorter than one {n}-sample frame",
            signal.len()
        )));
    }
    let n_frames = grid.n_frames(signal.len());
    let nb = grid.n_bins();
    let mut plan = FramePlan::new(n);
    let mut bins = vec![Complex::new(T::zero(), T::zero()); n_frames * nb];
    let x = signal.samples();
    for i in 0..n_frames {
        let start = i * grid.hop();
        let end = (start + n).min(x.len());
        plan.analyze(&x[start..end], grid.window(), &mut bins[i * nb..(i + 1) * nb]);
    }
    Spectrogram::from_bins(bins, n_frames, grid.clone(), signal.sample_rate(), signal.len())
}

/// Overlap-add resynthesis normalized by the window-sum envelope.
pub fn istft<T: Scalar>(spec: &Spectrogram<T>) -> Result<AudioSignal<T>> {
    let grid = spec.grid();
    if !grid.is_cola() {
        return Err(Error::param(
            "inverse STFT requires a constant-overlap-add window/hop pair",
        ));
    }
    grid.require_power_of_two()?;
    let n = grid.frame_length();
    let hop = grid.hop();
    let total = (spec.n_frames() - 1) * hop + n;
    let mut out = vec![T::zero(); total];
    let mut envelope = vec![T::zero(); total];
    let mut plan = FramePlan::new(n);
    let mut frame = vec![T::zero(); n];
    for i in 0..spec.n_frames() {
        plan.synthesize(spec.frame(i), &mut frame);
        let start = i * hop;
        for k in 0..n {
            out[start + k] += frame[k];
            envelope[start + k] += grid.window()[k];
        }
    }
    let floor = T::of(ENVELOPE_FLOOR);
    for (o, &e) in out.iter_mut().zip(&envelope) {
        *o = if e > floor { *o / e } else { T::zero() };
    }
    out.truncate(spec.signal_len().min(total));
    AudioSignal::new(out, spec.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N²) one-sided DFT.
    fn direct_dft(x: &[f64]) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..=n / 2)
            .map(|m| {
                x.iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let ang = -2.0 * std::f64::consts::PI * (m * k) as f64 / n as f64;
                        Complex::from_polar(v, ang)
                    })
                    .sum()
            })
            .collect()
    }

    fn noise(len: usize, seed: u64) -> AudioSignal<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioSignal::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 8000).unwrap()
    }

    #[test]
    fn hann_default_grid_is_cola() {
        let g = FrameGrid::<f64>::standard();
        assert!(g.is_cola());
        for s in g.overlap_sum() {
            assert!((s - 1.0).abs() < 1e-10);
        }
        let bad = FrameGrid::<f64>::hann(128, 48).unwrap();
        assert!(!bad.is_cola());
    }

    #[test]
    fn grid_rejects_bad_hop_and_window() {
        assert!(FrameGrid::<f64>::hann(128, 0).is_err());
        assert!(FrameGrid::<f64>::hann(128, 129).is_err());
        assert!(FrameGrid::<f64>::new(4, 2, vec![0.0, 1.5, 1.0, 0.0]).is_err());
    }

    #[test]
    fn framing_ones_gives_window() {
        let g = FrameGrid::<f64>::standard();
        let x = AudioSignal::new(vec![1.0; 512], 8000).unwrap();
        let f = frame_signal(&x, &g).unwrap();
        for r in 0..f.rows() {
            assert_eq!(f.row(r), g.window());
        }
    }

    #[test]
    fn framing_counts_and_offsets() {
        let g = FrameGrid::<f64>::rectangular(128, 64).unwrap();
        let x = AudioSignal::new((0..256).map(|v| v as f64).collect(), 8000).unwrap();
        let f = frame_signal(&x, &g).unwrap();
        assert_eq!(f.rows(), 3);
        for (i, start) in [0usize, 64, 128].into_iter().enumerate() {
            assert_eq!(f.get(i, 0), start as f64);
            assert_eq!(f.get(i, 127), (start + 127) as f64);
        }
    }

    #[test]
    fn framing_pads_trailing_partial_frame() {
        let g = FrameGrid::<f64>::rectangular(128, 64).unwrap();
        let x = AudioSignal::new(vec![1.0; 130], 8000).unwrap();
        let f = frame_signal(&x, &g).unwrap();
        assert_eq!(f.rows(), 2);
        assert!(f.row(1)[..66].iter().all(|&v| v == 1.0));
        assert!(f.row(1)[66..].iter().all(|&v| v == 0.0));
        assert_eq!(f.row(1)[66..].len(), 62);
    }

    #[test]
    fn framing_short_signal_is_data_error() {
        let g = FrameGrid::<f64>::standard();
        let x = AudioSignal::new(vec![0.0; 100], 8000).unwrap();
        assert!(matches!(frame_signal(&x, &g), Err(Error::Data(_))));
    }

    #[test]
    fn dc_frame_rectangular() {
        let g = FrameGrid::<f64>::rectangular(128, 128).unwrap();
        let x = AudioSignal::new(vec![1.0; 128], 8000).unwrap();
        let s = stft(&x, &g).unwrap();
        assert_eq!(s.shape(), (1, 65));
        assert!((s.get(0, 0).norm() - 128.0).abs() < 1e-9);
        for m in 1..65 {
            assert!(s.get(0, m).norm() < 1e-9);
        }
    }

    #[test]
    fn cosine_energy_in_its_bin() {
        let g = FrameGrid::<f64>::rectangular(128, 128).unwrap();
        let x: Vec<f64> = (0..128)
            .map(|k| (2.0 * std::f64::consts::PI * 8.0 * k as f64 / 128.0).cos())
            .collect();
        let oracle = direct_dft(&x);
        let s = stft(&AudioSignal::new(x, 8000).unwrap(), &g).unwrap();
        let total: f64 = (0..65).map(|m| s.get(0, m).norm_sqr()).sum();
        assert!(s.get(0, 8).norm_sqr() / total > 1.0 - 1e-12);
        assert!((oracle[8].norm() - 64.0).abs() < 1e-9);
        assert!((s.get(0, 8).norm() - 64.0).abs() < 1e-9);
    }

    #[test]
    fn matches_direct_dft() {
        let g = FrameGrid::<f64>::hann(128, 64).unwrap();
        for seed in 0..5 {
            let x = noise(128, seed);
            let s = stft(&x, &g).unwrap();
            let windowed: Vec<f64> = x.samples().iter().zip(g.window()).map(|(a, w)| a * w).collect();
            let oracle = direct_dft(&windowed);
            for m in 0..65 {
                assert!((s.get(0, m) - oracle[m]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let g = FrameGrid::<f64>::hann(120, 60).unwrap();
        let x = noise(400, 1);
        assert!(matches!(stft(&x, &g), Err(Error::Parameter(_))));
    }

    #[test]
    fn round_trip_interior() {
        let g = FrameGrid::<f64>::standard();
        let x = noise(2000, 3);
        let y = istft(&stft(&x, &g).unwrap()).unwrap();
        assert_eq!(y.len(), x.len());
        let err = x.samples()[128..1872]
            .iter()
            .zip(&y.samples()[128..1872])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn round_trip_sine_correlation() {
        let g = FrameGrid::<f64>::standard();
        let x: Vec<f64> = (0..8000)
            .map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / 8000.0).sin())
            .collect();
        let x = AudioSignal::new(x, 8000).unwrap();
        let y = istft(&stft(&x, &g).unwrap()).unwrap();
        let (a, b) = (&x.samples()[128..7872], &y.samples()[128..7872]);
        let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
        let na: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|p| p * p).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.999999);
    }

    #[test]
    fn zero_spectrogram_gives_silence() {
        let g = FrameGrid::<f64>::standard();
        let s = stft(&noise(1000, 4), &g).unwrap().zeros_like();
        assert!(istft(&s).unwrap().samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn istft_rejects_non_cola() {
        let g = FrameGrid::<f64>::hann(128, 48).unwrap();
        let s = stft(&noise(1000, 5), &g).unwrap();
        assert!(matches!(istft(&s), Err(Error::Parameter(_))));
    }

    #[test]
    fn phase_range_is_half_open() {
        let c = Complex::new(-1.0f64, -0.0);
        assert_eq!(principal_phase(c), std::f64::consts::PI);
    }
}
