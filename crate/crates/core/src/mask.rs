//! Ideal ratio masks, Gaussian mask smoothing, dual-mask magnitude arithmetic
//! and noisy-phase reconstruction.

use num_complex::Complex;

use crate::dsp::{istft, AudioSignal, BandSpec, BandpassFilter, Spectrogram};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Denominators below `MASK_FLOOR²` yield a zero mask.
pub const MASK_FLOOR: f64 = 1e-8;

/// Clean-speech and noise masks over one time-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair<T> {
    pub clean: Matrix<T>,
    pub noise: Matrix<T>,
}

impl<T: Scalar> MaskPair<T> {
    pub fn new(clean: Matrix<T>, noise: Matrix<T>) -> Result<Self> {
        clean.check_same_shape(&noise, "mask pair")?;
        let in_range = |m: &Matrix<T>| {
            m.as_slice()
                .iter()
                .all(|&v| v >= T::zero() && v <= T::one())
        };
        if !in_range(&clean) || !in_range(&noise) {
            return Err(Error::data("mask values must lie in [0, 1]"));
        }
        Ok(MaskPair { clean, noise })
    }

    /// Clean mask 1, noise mask 0: passes the mixture through unchanged.
    pub fn pass_through(rows: usize, cols: usize) -> Self {
        MaskPair {
            clean: Matrix::filled(rows, cols, T::one()),
            noise: Matrix::zeros(rows, cols),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.clean.shape()
    }

    pub fn smoothed(&self, spec: &SmoothingSpec, mode: SmoothingMode) -> Self {
        MaskPair {
            clean: smooth(&self.clean, spec, mode),
            noise: smooth(&self.noise, spec, mode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingSpec {
    /// Standard deviation in frames.
    pub sigma: f64,
    pub truncation_radius: usize,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec {
            sigma: 1.0,
            truncation_radius: 4,
        }
    }
}

impl SmoothingSpec {
    pub fn new(sigma: f64, truncation_radius: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) || truncation_radius == 0 {
            return Err(Error::param("smoothing needs sigma > 0 and radius >= 1"));
        }
        Ok(SmoothingSpec {
            sigma,
            truncation_radius,
        })
    }

    /// Symmetric kernel of length 2r+1, unit sum.
    pub fn kernel(&self) -> Vec<f64> {
        let r = self.truncation_radius as isize;
        let raw: Vec<f64> = (-r..=r)
            .map(|k| (-((k * k) as f64) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }

    /// Trailing half-kernel weights for lags 0..=r, renormalized over the
    /// first `available` lags (fewer than r+1 at stream start).
    pub fn causal_weights(&self, available: usize) -> Vec<f64> {
        let n = available.clamp(1, self.truncation_radius + 1);
        let raw: Vec<f64> = (0..n)
            .map(|k| (-((k * k) as f64) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }
}

/// Offline paths use the symmetric kernel; the streaming path and its offline
/// twin use the trailing half-kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothingMode {
    #[default]
    Symmetric,
    Causal,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionSpec {
    /// `L` in the mask exponent `2 / L`.
    pub exponent_l: f64,
    pub floor: f64,
}

impl Default for ReconstructionSpec {
    fn default() -> Self {
        ReconstructionSpec {
            exponent_l: 2.0,
            floor: 0.0,
        }
    }
}

impl ReconstructionSpec {
    pub fn new(exponent_l: f64, floor: f64) -> Result<Self> {
        if !(exponent_l > 0.0 && exponent_l.is_finite()) || !(floor >= 0.0) {
            return Err(Error::param("reconstruction needs L > 0 and floor >= 0"));
        }
        Ok(ReconstructionSpec { exponent_l, floor })
    }
}

#[inline]
fn ratio_mask<T: Scalar>(target_energy: T, mix_energy: T, floor_sq: T) -> T {
    let den = target_energy + mix_energy;
    if den < floor_sq {
        T::zero()
    } else {
        (target_energy / den).sqrt()
    }
}

/// `clean = sqrt(S² / (S² + X²))`, `noise = sqrt(N² / (N² + X²))` per bin.
pub fn ideal_masks<T: Scalar>(
    clean: &Spectrogram<T>,
    noise: &Spectrogram<T>,
    mix: &Spectrogram<T>,
) -> Result<MaskPair<T>> {
    if !clean.same_layout(mix) || !noise.same_layout(mix) {
        return Err(Error::param(
            "clean, noise and mixture spectrograms must share shape and grid",
        ));
    }
    let (rows, cols) = mix.shape();
    let floor_sq = T::of(MASK_FLOOR * MASK_FLOOR);
    let mut cm = Matrix::zeros(rows, cols);
    let mut nm = Matrix::zeros(rows, cols);
    let bins = clean.bins().iter().zip(noise.bins()).zip(mix.bins());
    for (i, ((s, n), x)) in bins.enumerate() {
        let mix_energy = x.norm_sqr();
        cm.as_mut_slice()[i] = ratio_mask(s.norm_sqr(), mix_energy, floor_sq);
        nm.as_mut_slice()[i] = ratio_mask(n.norm_sqr(), mix_energy, floor_sq);
    }
    Ok(MaskPair {
        clean: cm,
        noise: nm,
    })
}

/// Reflect index into [0, n) using the half-sample symmetric rule (d c b a | a b c d).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Symmetric Gaussian smoothing along the frame axis, reflected edges.
pub fn smooth_mask<T: Scalar>(mask: &Matrix<T>, spec: &SmoothingSpec) -> Matrix<T> {
    let kernel: Vec<T> = spec.kernel().into_iter().map(T::of).collect();
    let r = spec.truncation_radius as isize;
    let (rows, cols) = mask.shape();
    let mut out = Matrix::zeros(rows, cols);
    for t in 0..rows {
        let dst = out.row_mut(t);
        for (j, &w) in kernel.iter().enumerate() {
            let src = mask.row(reflect(t as isize + j as isize - r, rows));
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
        clamp_unit(dst);
    }
    out
}

/// Trailing half-kernel smoothing: frame t mixes frames t, t-1, ..., t-r.
pub fn smooth_mask_causal<T: Scalar>(mask: &Matrix<T>, spec: &SmoothingSpec) -> Matrix<T> {
    let (rows, cols) = mask.shape();
    let tables: Vec<Vec<T>> = (1..=spec.truncation_radius + 1)
        .map(|n| spec.causal_weights(n).into_iter().map(T::of).collect())
        .collect();
    let mut out = Matrix::zeros(rows, cols);
    for t in 0..rows {
        let available = (t + 1).min(spec.truncation_radius + 1);
        let weights = &tables[available - 1];
        let dst = out.row_mut(t);
        for (lag, &w) in weights.iter().enumerate() {
            let src = mask.row(t - lag);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
        clamp_unit(dst);
    }
    out
}

// rounding can push a convex combination a hair outside [0, 1]
#[inline]
pub(crate) fn clamp_unit<T: Scalar>(row: &mut [T]) {
    for v in row.iter_mut() {
        *v = v.max(T::zero()).min(T::one());
    }
}

pub fn smooth<T: Scalar>(mask: &Matrix<T>, spec: &SmoothingSpec, mode: SmoothingMode) -> Matrix<T> {
    match mode {
        SmoothingMode::Symmetric => smooth_mask(mask, spec),
        SmoothingMode::Causal => smooth_mask_causal(mask, spec),
        SmoothingMode::None => mask.clone(),
    }
}

/// Per-bin enhanced magnitude `max(c^(2/L)·A − n^(2/L)·A, floor)` for one frame.
#[inline]
pub fn apply_masks_frame<T: Scalar>(
    magnitude: &[T],
    clean: &[T],
    noise: &[T],
    rec: &ReconstructionSpec,
    out: &mut [T],
) {
    let exponent = T::of(2.0 / rec.exponent_l);
    let unit = exponent == T::one();
    let floor = T::of(rec.floor);
    for i in 0..out.len() {
        let (c, n) = if unit {
            (clean[i], noise[i])
        } else {
            (clean[i].powf(exponent), noise[i].powf(exponent))
        };
        let a = magnitude[i];
        let p = c * a;
        let q = n * a;
        out[i] = (p - q).max(floor);
    }
}

/// Enhanced magnitude from the mixture magnitude and a (smoothed) mask pair.
pub fn apply_masks<T: Scalar>(
    mix: &Spectrogram<T>,
    masks: &MaskPair<T>,
    rec: &ReconstructionSpec,
) -> Result<Matrix<T>> {
    if masks.shape() != mix.shape() {
        return Err(Error::param(format!(
            "mask shape {:?} does not match spectrogram {:?}",
            masks.shape(),
            mix.shape()
        )));
    }
    let magnitude = mix.magnitude();
    let (rows, cols) = mix.shape();
    let mut out = Matrix::zeros(rows, cols);
    for t in 0..rows {
        apply_masks_frame(
            magnitude.row(t),
            masks.clean.row(t),
            masks.noise.row(t),
            rec,
            out.row_mut(t),
        );
    }
    Ok(out)
}

/// Enhanced magnitude combined with the mixture phase for one frame.
#[inline]
pub fn combine_with_phase<T: Scalar>(magnitude: &[T], mix: &[Complex<T>], out: &mut [Complex<T>]) {
    for ((o, &p), &x) in out.iter_mut().zip(magnitude).zip(mix) {
        let a = x.norm();
        *o = if a > T::zero() {
            x * (p / a)
        } else {
            Complex::new(p, T::zero())
        };
    }
}

/// Noisy-phase resynthesis followed by the output band-pass filter.
pub fn reconstruct<T: Scalar>(
    enhanced_magnitude: &Matrix<T>,
    mix: &Spectrogram<T>,
    band: BandSpec,
) -> Result<AudioSignal<T>> {
    if enhanced_magnitude.shape() != mix.shape() {
        return Err(Error::param(format!(
            "magnitude shape {:?} does not match spectrogram {:?}",
            enhanced_magnitude.shape(),
            mix.shape()
        )));
    }
    let mut bins = vec![Complex::new(T::zero(), T::zero()); mix.bins().len()];
    let nb = mix.n_bins();
    for t in 0..mix.n_frames() {
        combine_with_phase(
            enhanced_magnitude.row(t),
            mix.frame(t),
            &mut bins[t * nb..(t + 1) * nb],
        );
    }
    let spec = Spectrogram::from_bins(
        bins,
        mix.n_frames(),
        mix.grid().clone(),
        mix.sample_rate(),
        mix.signal_len(),
    )?;
    let mut out = istft(&spec)?;
    let mut filter = BandpassFilter::design(band, out.sample_rate())?;
    filter.process_in_place(out.samples_mut());
    Ok(out)
}
