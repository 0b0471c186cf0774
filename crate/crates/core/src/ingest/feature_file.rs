//! Binary feature file.
//!
//! Little-endian layout:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `KIAIFEAT`                        |
//! | 8      | 4    | version (1)                             |
//! | 12     | 4    | element width in bytes (4 = f32, 8 = f64) |
//! | 16     | 4    | rows                                    |
//! | 20     | 4    | cols                                    |
//! | 24     | 4    | sample rate (Hz)                        |
//! | 28     | rows * cols * width | row-major payload        |

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::features::{FeatureError, FeatureMatrix};
use crate::scalar::Scalar;

pub const FEATURE_MAGIC: &[u8; 8] = b"KIAIFEAT";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

#[derive(Debug, Error)]
pub enum FeatureFileError {
    #[error("feature file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a feature file (bad magic)")]
    Magic,
    #[error("unsupported feature file version {0}")]
    Version(u32),
    #[error("unsupported element width {0}")]
    Width(u32),
    #[error("feature file header is truncated")]
    TruncatedHeader,
    #[error("payload holds {actual} bytes but the header declares {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("invalid feature values: {0}")]
    Values(#[from] FeatureError),
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn write_features<T: Scalar>(m: &FeatureMatrix<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data().len() * T::WIDTH);
    out.extend_from_slice(FEATURE_MAGIC);
    for field in [
        VERSION,
        T::WIDTH as u32,
        m.rows() as u32,
        m.cols() as u32,
        m.sample_rate_hz(),
    ] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for &v in m.data() {
        v.write_le(&mut out);
    }
    out
}

/// Decodes a feature file, converting the stored width to `T` if needed.
pub fn read_features<T: Scalar>(bytes: &[u8]) -> Result<FeatureMatrix<T>, FeatureFileError> {
    if bytes.len() < HEADER_LEN {
        return Err(if bytes.len() >= 8 && &bytes[..8] != FEATURE_MAGIC {
            FeatureFileError::Magic
        } else {
            FeatureFileError::TruncatedHeader
        });
    }
    if &bytes[..8] != FEATURE_MAGIC {
        return Err(FeatureFileError::Magic);
    }
    let version = u32_at(bytes, 8);
    if version != VERSION {
        return Err(FeatureFileError::Version(version));
    }
    let width = u32_at(bytes, 12);
    let rows = u32_at(bytes, 16) as usize;
    let cols = u32_at(bytes, 20) as usize;
    let sample_rate = u32_at(bytes, 24);
    let payload = &bytes[HEADER_LEN..];
    let expected = rows * cols * width as usize;
    let data: Vec<T> = match width {
        4 | 8 if payload.len() != expected => {
            return Err(FeatureFileError::PayloadLength {
                expected,
                actual: payload.len(),
            })
        }
        4 => payload
            .chunks_exact(4)
            .map(|c| T::lit(f32::read_le(c) as f64))
            .collect(),
        8 => payload
            .chunks_exact(8)
            .map(|c| T::lit(f64::read_le(c)))
            .collect(),
        other => return Err(FeatureFileError::Width(other)),
    };
    Ok(FeatureMatrix::new(rows, cols, data, sample_rate)?)
}

pub fn save_features<T: Scalar>(
    path: impl AsRef<Path>,
    m: &FeatureMatrix<T>,
) -> Result<(), FeatureFileError> {
    fs::write(path, write_features(m))?;
    Ok(())
}

pub fn load_features<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<FeatureMatrix<T>, FeatureFileError> {
    read_features(&fs::read(path)?)
}
