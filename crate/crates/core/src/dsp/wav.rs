//! PCM-16 WAV reading and writing.

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn wav_err(path: &Path, source: hound::Error) -> Error {
    match source {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::Wav {
            path: path.to_path_buf(),
            source: other,
        },
    }
}

/// Reads a 16-bit PCM WAV. Multichannel files yield channel 0.
pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<AudioSignal<T>> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::data(format!(
            "{}: expected 16-bit PCM, found {:?} {}-bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels.max(1) as usize;
    if channels > 1 {
        log::warn!(
            "{}: {channels} channels, using channel 0 only",
            path.display()
        );
    }
    let scale = T::one() / T::of(32768.0);
    let mut samples = Vec::with_capacity(reader.len() as usize / channels);
    for (i, s) in reader.into_samples::<i16>().enumerate() {
        let s = s.map_err(|e| wav_err(path, e))?;
        if i % channels == 0 {
            samples.push(T::of(s as f64) * scale);
        }
    }
    AudioSignal::new(samples, spec.sample_rate)
}

fn to_pcm16<T: Scalar>(x: T) -> i16 {
    let v = (x.as_f64() * 32768.0).round();
    v.clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write_wav<T: Scalar>(path: impl AsRef<Path>, signal: &AudioSignal<T>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in signal.samples() {
        writer
            .write_sample(to_pcm16(s))
            .map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_round_trip_is_exact_on_grid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let s: Vec<f64> = (-50..50).map(|v| v as f64 * 300.0 / 32768.0).collect();
        let x = AudioSignal::new(s, 8000).unwrap();
        write_wav(&p, &x).unwrap();
        let y: AudioSignal<f64> = read_wav(&p).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn stereo_takes_channel_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for i in 0..10i16 {
            w.write_sample(i * 100).unwrap();
            w.write_sample(-1000).unwrap();
        }
        w.finalize().unwrap();
        let y: AudioSignal<f64> = read_wav(&p).unwrap();
        assert_eq!(y.len(), 10);
        assert_eq!(y.sample_rate(), 16000);
        assert_eq!(y.samples()[3], 300.0 / 32768.0);
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_wav::<f64>("/nonexistent/file.wav").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/file.wav"));
    }

    #[test]
    fn out_of_range_samples_clip() {
        assert_eq!(to_pcm16(2.0f64), i16::MAX);
        assert_eq!(to_pcm16(-2.0f64), i16::MIN);
    }
}
