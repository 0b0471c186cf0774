//! Corpus ingestion: community `.osu` Taiko charts, the native chart
//! document, per-frame audio features and the binary feature file.

mod corpus;
mod feature_file;
mod features;
mod native;
mod osu;

pub use corpus::{load_corpus, CorpusError};
pub use feature_file::{
    load_features, read_features, save_features, write_features, FeatureFileError, FEATURE_MAGIC,
};
pub use features::{
    band_edges, extract_features, FeatureError, FeatureMatrix, BAND_COUNT, MIN_BAND_HZ,
};
pub use native::{
    parse_chart, serialize_chart, ChartDocument, ChartFileError, NoteRecord, CHART_FORMAT,
    CHART_VERSION,
};
pub use osu::{parse_osu, OsuError, OsuErrorKind, OsuHitObject, OsuTaikoBeatmap, OSU_TAIL_MS};
