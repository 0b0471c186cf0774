//! Corpus directory: every `<name>.features` file paired with a chart named
//! `<name>.chart.json` (native) or `<name>.osu`.
//!
//! `.osu` charts take their duration from the feature file (`rows * 23` ms)
//! so the two always align.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::feature_file::{load_features, FeatureFileError};
use super::features::FeatureMatrix;
use super::native::{parse_chart, ChartFileError};
use super::osu::{OsuError, OsuTaikoBeatmap};
use crate::chart::{frame_count, Chart, ChartError, FRAME_MS};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Features {
        path: PathBuf,
        source: FeatureFileError,
    },
    #[error("{path}: {source}")]
    Native {
        path: PathBuf,
        source: ChartFileError,
    },
    #[error("{path}: {source}")]
    Osu { path: PathBuf, source: OsuError },
    #[error("{path}: {source}")]
    Chart { path: PathBuf, source: ChartError },
    #[error("{path}: no .chart.json or .osu chart next to it")]
    MissingChart { path: PathBuf },
    #[error("{path}: chart has {chart_frames} frames, features have {feature_rows} rows")]
    Misaligned {
        path: PathBuf,
        chart_frames: usize,
        feature_rows: usize,
    },
    #[error("{0}: no feature files")]
    Empty(PathBuf),
}

/// Loads the corpus in file-name order.
pub fn load_corpus<T: Scalar>(
    dir: impl AsRef<Path>,
) -> Result<Vec<(Chart, FeatureMatrix<T>)>, CorpusError> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut stems: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".features"))
                .map(str::to_string)
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(CorpusError::Empty(dir.to_path_buf()));
    }
    stems.iter().map(|stem| load_pair(dir, stem)).collect()
}

fn load_pair<T: Scalar>(dir: &Path, stem: &str) -> Result<(Chart, FeatureMatrix<T>), CorpusError> {
    let feat_path = dir.join(format!("{stem}.features"));
    let features = load_features(&feat_path).map_err(|source| CorpusError::Features {
        path: feat_path.clone(),
        source,
    })?;
    let read = |path: &Path| {
        fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    let native = dir.join(format!("{stem}.chart.json"));
    let osu = dir.join(format!("{stem}.osu"));
    let (chart, path) = if native.exists() {
        let chart = parse_chart(&read(&native)?).map_err(|source| CorpusError::Native {
            path: native.clone(),
            source,
        })?;
        (chart, native)
    } else if osu.exists() {
        let beatmap = OsuTaikoBeatmap::parse(&read(&osu)?).map_err(|source| CorpusError::Osu {
            path: osu.clone(),
            source,
        })?;
        let chart = beatmap
            .to_chart(Some(features.rows() as u64 * FRAME_MS))
            .map_err(|source| CorpusError::Chart {
                path: osu.clone(),
                source,
            })?;
        (chart, osu)
    } else {
        return Err(CorpusError::MissingChart { path: feat_path });
    };
    if frame_count(chart.duration_ms()) != features.rows() {
        return Err(CorpusError::Misaligned {
            path,
            chart_frames: chart.frame_count(),
            feature_rows: features.rows(),
        });
    }
    Ok((chart, features))
}
