//! Little-endian weight file:
//!
//! ```text
//! magic[8] version:u32
//! config: context_frames frame_length hop n_bins d_model n_layers n_heads ff_hidden
//!         (u32 each), n_mlp:u32, mlp_hidden[n_mlp]:u32,
//!         dropout_rate exponent_l smoothing_sigma (f64 each), smoothing_radius:u32
//! n_tensors:u32
//! per tensor: name_len:u32 name rank:u32 dims[rank]:u32 values:f32[prod(dims)]
//! n_bins:u32 norm_mean:f32[n_bins] norm_std:f32[n_bins]
//! crc32:u32 (of every preceding byte)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::weights::ModelWeights;
use crate::nn::params::{from_f32_le_bytes, to_f32_le_bytes};
use crate::nn::{ParamStore, Tensor};
use crate::scalar::Scalar;

pub const MAGIC: [u8; 8] = *b"DMASKWT\0";
pub const FORMAT_VERSION: u32 = 1;

const MAX_NAME_LEN: usize = 256;
const MAX_RANK: usize = 4;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::param(format!("value {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f32s<T: Scalar>(out: &mut Vec<u8>, values: &[T]) {
    for &v in values {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
}

/// Serializes weights into the binary layout above.
pub fn write_weights<T: Scalar>(weights: &ModelWeights<T>) -> Result<Vec<u8>> {
    weights.validate()?;
    let c = &weights.config;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [
        c.context_frames,
        c.frame_length,
        c.hop,
        c.n_bins,
        c.d_model,
        c.n_layers,
        c.n_heads,
        c.ff_hidden,
        c.mlp_hidden.len(),
    ] {
        put_u32(&mut out, v)?;
    }
    for &h in &c.mlp_hidden {
        put_u32(&mut out, h)?;
    }
    for v in [c.dropout_rate, c.exponent_l, c.smoothing_sigma] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_u32(&mut out, c.smoothing_radius)?;
    put_u32(&mut out, weights.params.len())?;
    for p in weights.params.iter() {
        put_u32(&mut out, p.name.len())?;
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, p.value.shape().len())?;
        for &dim in p.value.shape() {
            put_u32(&mut out, dim)?;
        }
        out.extend_from_slice(&to_f32_le_bytes(&p.value));
    }
    put_u32(&mut out, c.n_bins)?;
    put_f32s(&mut out, &weights.norm_mean);
    put_f32s(&mut out, &weights.norm_std);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str, tensor: Option<&str>) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => {
                let msg = format!("file truncated while reading {what} at byte {}", self.pos);
                Err(match tensor {
                    Some(t) => Error::format_in(t, msg),
                    None => Error::format(msg),
                })
            }
        }
    }

    fn u32(&mut self, what: &str, tensor: Option<&str>) -> Result<usize> {
        let b = self.take(4, what, tensor)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what, None)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }
}

fn read_config(r: &mut Reader<'_>) -> Result<ModelConfig> {
    let mut u = |what: &str| r.u32(what, None);
    let context_frames = u("context_frames")?;
    let frame_length = u("frame_length")?;
    let hop = u("hop")?;
    let n_bins = u("n_bins")?;
    let d_model = u("d_model")?;
    let n_layers = u("n_layers")?;
    let n_heads = u("n_heads")?;
    let ff_hidden = u("ff_hidden")?;
    let n_mlp = u("mlp depth")?;
    if n_mlp > 64 {
        return Err(Error::format(format!("implausible MLP depth {n_mlp}")));
    }
    let mlp_hidden = (0..n_mlp).map(|_| r.u32("mlp_hidden", None)).collect::<Result<_>>()?;
    let config = ModelConfig {
        context_frames,
        frame_length,
        hop,
        n_bins,
        d_model,
        n_layers,
        n_heads,
        ff_hidden,
        mlp_hidden,
        dropout_rate: r.f64("dropout_rate")?,
        exponent_l: r.f64("exponent_l")?,
        smoothing_sigma: r.f64("smoothing_sigma")?,
        smoothing_radius: r.u32("smoothing_radius", None)?,
    };
    config
        .validate()
        .map_err(|e| Error::format(format!("invalid config in header: {e}")))?;
    Ok(config)
}

/// Parses a weight file image. Any inconsistency rejects the whole file.
pub fn read_weights<T: Scalar>(file: &[u8]) -> Result<ModelWeights<T>> {
    // structural errors are reported before the checksum so truncation still names a tensor
    let (bytes, trailer) = file.split_at(file.len().saturating_sub(4));
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic", None)? != MAGIC {
        return Err(Error::format("bad magic: not a weight file"));
    }
    let version = r.u32("version", None)? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let config = read_config(&mut r)?;
    let reference = ModelWeights::<T>::init(&config, 0)?;
    let n_tensors = r.u32("tensor count", None)?;
    if n_tensors != reference.params.len() {
        return Err(Error::format(format!(
            "file holds {n_tensors} tensors, config implies {}",
            reference.params.len()
        )));
    }
    let mut params = ParamStore::new();
    for want in reference.params.iter() {
        let expected = Some(want.name.as_str());
        let name_len = r.u32("tensor name length", expected)?;
        if name_len > MAX_NAME_LEN {
            return Err(Error::format_in(want.name.clone(), format!("name length {name_len} too large")));
        }
        let name = std::str::from_utf8(r.take(name_len, "tensor name", expected)?)
            .map_err(|_| Error::format_in(want.name.clone(), "tensor name is not UTF-8"))?
            .to_string();
        if name != want.name {
            return Err(Error::format_in(name, format!("expected tensor `{}`", want.name)));
        }
        let here = Some(name.as_str());
        let rank = r.u32("tensor rank", here)?;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::format_in(name, format!("invalid rank {rank}")));
        }
        let shape = (0..rank).map(|_| r.u32("tensor dims", here)).collect::<Result<Vec<_>>>()?;
        if shape != want.value.shape() {
            return Err(Error::format_in(
                name,
                format!("shape {shape:?} does not match config shape {:?}", want.value.shape()),
            ));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4, "tensor values", here)?;
        let value: Tensor<T> = from_f32_le_bytes(shape, raw).map_err(|e| Error::format_in(name.clone(), e.to_string()))?;
        if !value.is_finite() {
            return Err(Error::format_in(name, "non-finite tensor values"));
        }
        params.insert(&name, value, want.trainable)?;
    }
    let n_bins = r.u32("normalization bin count", None)?;
    if n_bins != config.n_bins {
        return Err(Error::format(format!(
            "normalization covers {n_bins} bins, config has {}",
            config.n_bins
        )));
    }
    let mut stats = |what: &str| -> Result<Vec<T>> {
        let raw = r.take(n_bins * 4, what, None)?;
        Ok(from_f32_le_bytes::<T>(vec![n_bins], raw)?.into_data())
    };
    let norm_mean = stats("normalization mean")?;
    let norm_std = stats("normalization std")?;
    if r.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after weight data",
            bytes.len() - r.pos
        )));
    }
    if trailer.len() != 4 || crc32fast::hash(bytes).to_le_bytes() != trailer {
        return Err(Error::format("checksum mismatch: weight file is corrupted"));
    }
    let weights = ModelWeights {
        config,
        params,
        norm_mean,
        norm_std,
        format_version: version,
    };
    weights
        .validate()
        .map_err(|e| Error::format(format!("inconsistent weight file: {e}")))?;
    Ok(weights)
}

pub fn save_weights<T: Scalar>(weights: &ModelWeights<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_weights(weights)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelWeights<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_weights(&bytes)
}
