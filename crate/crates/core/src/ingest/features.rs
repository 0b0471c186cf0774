//! Per-frame log band energies.
//!
//! Frame `i` is centred on sample `round(i * 23ms * sr)`. Each frame takes a
//! Hann-windowed slice one frame wide (samples outside the signal read as
//! zero), zero-pads it to the next power of two at or above twice its
//! length, and sums the power spectrum into [`BAND_COUNT`] geometrically
//! spaced bands between [`MIN_BAND_HZ`] and Nyquist. Values are `ln(1 + x)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::chart::{frame_count, FRAME_MS};
use crate::scalar::Scalar;

pub const BAND_COUNT: usize = 40;
pub const MIN_BAND_HZ: f64 = 20.0;
const MIN_SAMPLE_RATE: u32 = 8000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("sample rate {0}Hz is below the {MIN_SAMPLE_RATE}Hz minimum")]
    SampleRate(u32),
    #[error("audio shorter than one 23ms frame ({0} samples)")]
    TooShort(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("feature matrix shape {rows}x{cols} does not match {len} values")]
    Shape {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("feature value at ({row}, {col}) is negative or non-finite")]
    InvalidValue { row: usize, col: usize },
}

/// Row-major audio features, one row per 23ms frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    sample_rate_hz: u32,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<T>,
        sample_rate_hz: u32,
    ) -> Result<Self, FeatureError> {
        if rows * cols != data.len() {
            return Err(FeatureError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(FeatureError::InvalidValue {
                row: i / cols.max(1),
                col: i % cols.max(1),
            });
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            data,
            sample_rate_hz,
        })
    }

    pub fn zeros(rows: usize, cols: usize, sample_rate_hz: u32) -> Self {
        FeatureMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
            sample_rate_hz,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Converts element type, e.g. f32 on disk to f64 for gradient checks.
    pub fn cast<U: Scalar>(&self) -> FeatureMatrix<U> {
        FeatureMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Band edges in Hz: `BAND_COUNT + 1` geometrically spaced values.
pub fn band_edges(sample_rate_hz: u32) -> Vec<f64> {
    let nyquist = sample_rate_hz as f64 / 2.0;
    let ratio = nyquist / MIN_BAND_HZ;
    (0..=BAND_COUNT)
        .map(|j| match j {
            BAND_COUNT => nyquist,
            _ => MIN_BAND_HZ * ratio.powf(j as f64 / BAND_COUNT as f64),
        })
        .collect()
}

fn band_of(freq: f64, edges: &[f64]) -> Option<usize> {
    if freq < edges[0] || freq > edges[BAND_COUNT] {
        return None;
    }
    // last band is closed at Nyquist
    Some(
        edges[1..]
            .partition_point(|&e| e <= freq)
            .min(BAND_COUNT - 1),
    )
}

pub fn extract_features<T: Scalar>(
    samples: &[T],
    sample_rate_hz: u32,
) -> Result<FeatureMatrix<T>, FeatureError> {
    if sample_rate_hz < MIN_SAMPLE_RATE {
        return Err(FeatureError::SampleRate(sample_rate_hz));
    }
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(FeatureError::NonFinite(i));
    }
    let sr = sample_rate_hz as u64;
    let frame_len = ((FRAME_MS * sr + 500) / 1000) as usize;
    if samples.len() < frame_len || samples.is_empty() {
        return Err(FeatureError::TooShort(samples.len()));
    }
    let duration_ms = (samples.len() as u64 * 1000).div_ceil(sr);
    let rows = frame_count(duration_ms);

    let fft_len = (2 * frame_len).next_power_of_two();
    let fft = FftPlanner::<T>::new().plan_fft_forward(fft_len);
    let two_pi = std::f64::consts::TAU;
    let window: Vec<T> = (0..frame_len)
        .map(|j| T::lit(0.5 - 0.5 * (two_pi * j as f64 / frame_len as f64).cos()))
        .collect();
    let window_sum: T = window.iter().copied().sum();
    let norm = T::lit(2.0) / window_sum;

    let edges = band_edges(sample_rate_hz);
    let bin_bands: Vec<Option<usize>> = (0..=fft_len / 2)
        .map(|k| band_of(k as f64 * sample_rate_hz as f64 / fft_len as f64, &edges))
        .collect();

    let mut data = Vec::with_capacity(rows * BAND_COUNT);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); fft_len];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    let mut bands = [T::zero(); BAND_COUNT];
    for row in 0..rows {
        let center = ((row as u64 * FRAME_MS * sr + 500) / 1000) as i64;
        let start = center - frame_len as i64 / 2;
        buf.iter_mut()
            .for_each(|c| *c = Complex::new(T::zero(), T::zero()));
        for (j, w) in window.iter().enumerate() {
            let idx = start + j as i64;
            if idx >= 0 && (idx as usize) < samples.len() {
                buf[j].re = samples[idx as usize] * *w;
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        bands.iter_mut().for_each(|b| *b = T::zero());
        for (k, band) in bin_bands.iter().enumerate() {
            if let Some(b) = band {
                let mag = buf[k].norm() * norm;
                bands[*b] = bands[*b] + mag * mag;
            }
        }
        data.extend(bands.iter().map(|&e| e.ln_1p()));
    }
    Ok(FeatureMatrix {
        rows,
        cols: BAND_COUNT,
        data,
        sample_rate_hz,
    })
}
