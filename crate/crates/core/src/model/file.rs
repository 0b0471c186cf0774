//! Binary model file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "KIAIMODL" (8) | version u32 = 1 | element width u32 (4 | 8)
//! hidden_size u32 | layers u32 | audio_context u32 | history_len u32
//! class_count u32 | bands u32 | seed u64
//! then for each tensor in order w_input, w_recurrent, b_gates, w_out, b_out:
//!   element count u64 | elements
//! ```

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::config::ModelConfig;
use super::params::ModelParams;
use super::ModelError;
use crate::ingest::BAND_COUNT;
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 8] = b"KIAIMODL";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("model file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a model file (bad magic)")]
    Magic,
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model stores {stored}-byte floats, expected {expected}")]
    Width { stored: u32, expected: usize },
    #[error("model file built for {stored} bands, expected {BAND_COUNT}")]
    Bands { stored: u32 },
    #[error("tensor {tensor}: header declares {declared} elements, config implies {expected}")]
    Shape {
        tensor: &'static str,
        declared: u64,
        expected: usize,
    },
    #[error("model file truncated")]
    Truncated,
    #[error("{0} trailing bytes after the last tensor")]
    Trailing(usize),
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self.pos.checked_add(n).ok_or(ModelFileError::Truncated)?;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or(ModelFileError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn write_model<T: Scalar>(model: &ModelParams<T>) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(64 + cfg.parameter_count() * T::WIDTH);
    out.extend_from_slice(MODEL_MAGIC);
    for v in [
        VERSION,
        T::WIDTH as u32,
        cfg.hidden_size as u32,
        cfg.layers as u32,
        cfg.audio_context as u32,
        cfg.history_len as u32,
        cfg.class_count as u32,
        BAND_COUNT as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&cfg.seed.to_le_bytes());
    for (_, tensor) in model.tensors() {
        out.extend_from_slice(&(tensor.len() as u64).to_le_bytes());
        for &v in tensor {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn read_model<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>, ModelFileError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| ModelFileError::Magic)? != MODEL_MAGIC {
        return Err(ModelFileError::Magic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelFileError::Version(version));
    }
    let width = r.u32()?;
    if width as usize != T::WIDTH {
        return Err(ModelFileError::Width {
            stored: width,
            expected: T::WIDTH,
        });
    }
    let hidden_size = r.u32()? as usize;
    let layers = r.u32()? as usize;
    let audio_context = r.u32()? as usize;
    let history_len = r.u32()? as usize;
    let class_count = r.u32()? as usize;
    let bands = r.u32()?;
    if bands as usize != BAND_COUNT {
        return Err(ModelFileError::Bands { stored: bands });
    }
    let seed = r.u64()?;
    let config = ModelConfig {
        hidden_size,
        layers,
        audio_context,
        history_len,
        class_count,
        seed,
    };
    config.validate()?;

    let mut tensors: [Vec<T>; 5] = Default::default();
    for ((name, rows, cols), slot) in config.tensor_shapes().into_iter().zip(tensors.iter_mut()) {
        let declared = r.u64()?;
        if declared != (rows * cols) as u64 {
            return Err(ModelFileError::Shape {
                tensor: name,
                declared,
                expected: rows * cols,
            });
        }
        let raw = r.take(rows * cols * T::WIDTH)?;
        *slot = raw.chunks_exact(T::WIDTH).map(T::read_le).collect();
    }
    if r.pos != bytes.len() {
        return Err(ModelFileError::Trailing(bytes.len() - r.pos));
    }
    Ok(ModelParams::from_tensors(config, tensors)?)
}

pub fn save_model<T: Scalar>(
    path: impl AsRef<Path>,
    model: &ModelParams<T>,
) -> Result<(), ModelFileError> {
    fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>, ModelFileError> {
    read_model(&fs::read(path)?)
}
