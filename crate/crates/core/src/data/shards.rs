//! Flat binary example shards with a JSON sidecar describing their shape.
//!
//! Record layout (little endian): utterance:u32, frame:u32, then f32 values for
//! features `[T × n_bins]`, raw `[frame_length]`, clean and noise targets `[n_bins]`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::examples::TrainingExample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub n_examples: usize,
    pub context_frames: usize,
    pub n_bins: usize,
    pub frame_length: usize,
    pub record_bytes: usize,
}

impl ShardInfo {
    fn new(context_frames: usize, n_bins: usize, frame_length: usize, n_examples: usize) -> Self {
        let values = context_frames * n_bins + frame_length + 2 * n_bins;
        ShardInfo {
            n_examples,
            context_frames,
            n_bins,
            frame_length,
            record_bytes: 8 + 4 * values,
        }
    }
}

fn sidecar(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `path` (binary records) and `path` with a `.json` extension.
pub fn write_shard<T: Scalar>(path: impl AsRef<Path>, examples: &[TrainingExample<T>]) -> Result<ShardInfo> {
    let path = path.as_ref();
    let first = examples
        .first()
        .ok_or_else(|| Error::data("refusing to write an empty shard"))?;
    let nb = first.clean_target.len();
    let info = ShardInfo::new(first.features.len() / nb.max(1), nb, first.raw.len(), examples.len());
    let mut bytes = Vec::with_capacity(info.record_bytes * examples.len());
    for ex in examples {
        if ex.features.len() != info.context_frames * nb
            || ex.raw.len() != info.frame_length
            || ex.noise_target.len() != nb
            || ex.clean_target.len() != nb
        {
            return Err(Error::data("examples in one shard must share a shape"));
        }
        for id in [ex.utterance, ex.frame] {
            let id = u32::try_from(id).map_err(|_| Error::data("example index exceeds u32"))?;
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        for v in ex.features.iter().chain(&ex.raw).chain(&ex.clean_target).chain(&ex.noise_target) {
            bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    let json = serde_json::to_string_pretty(&info).expect("shard info serializes");
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(info)
}

pub fn read_shard<T: Scalar>(path: impl AsRef<Path>) -> Result<(ShardInfo, Vec<TrainingExample<T>>)> {
    let path = path.as_ref();
    let side = sidecar(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let info: ShardInfo = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: bad shard sidecar: {e}", side.display())))?;
    let expect = ShardInfo::new(info.context_frames, info.n_bins, info.frame_length, info.n_examples);
    if expect != info {
        return Err(Error::data(format!("{}: inconsistent record size", side.display())));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != info.record_bytes * info.n_examples {
        return Err(Error::data(format!(
            "{}: {} bytes, sidecar promises {} records of {}",
            path.display(),
            bytes.len(),
            info.n_examples,
            info.record_bytes
        )));
    }
    let (tf, nb, fl) = (info.context_frames, info.n_bins, info.frame_length);
    let examples = bytes
        .chunks_exact(info.record_bytes)
        .map(|rec| {
            let u = |i: usize| u32::from_le_bytes([rec[i], rec[i + 1], rec[i + 2], rec[i + 3]]) as usize;
            let vals: Vec<T> = rec[8..]
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            let (features, rest) = vals.split_at(tf * nb);
            let (raw, rest) = rest.split_at(fl);
            let (clean, noise) = rest.split_at(nb);
            TrainingExample {
                utterance: u(0),
                frame: u(4),
                features: features.to_vec(),
                raw: raw.to_vec(),
                clean_target: clean.to_vec(),
                noise_target: noise.to_vec(),
            }
        })
        .collect();
    Ok((info, examples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ex: Vec<TrainingExample<f32>> = (0..3)
            .map(|i| TrainingExample {
                utterance: i,
                frame: 10 + i,
                features: (0..6).map(|k| k as f32 * 0.5 - i as f32).collect(),
                raw: vec![0.25; 4],
                clean_target: vec![0.1, 0.2, 0.3],
                noise_target: vec![0.9, 0.8, 0.7],
            })
            .collect();
        let path = dir.path().join("train.bin");
        let info = write_shard(&path, &ex).unwrap();
        assert_eq!(info.context_frames, 2);
        let (back_info, back) = read_shard::<f32>(&path).unwrap();
        assert_eq!(back_info, info);
        assert_eq!(back, ex);
    }

    #[test]
    fn size_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ex = vec![TrainingExample {
            utterance: 0,
            frame: 0,
            features: vec![1.0f64; 2],
            raw: vec![0.0; 2],
            clean_target: vec![0.5],
            noise_target: vec![0.5],
        }];
        let path = dir.path().join("s.bin");
        write_shard(&path, &ex).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(read_shard::<f64>(&path).is_err());
    }
}
