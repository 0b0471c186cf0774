//! Offline choice of the retraining threshold and training hyperparameters.
//!
//! Each designer chart is split at frame `delta`: the base model is fine-tuned
//! on the first `delta` instances and then completes the rest, which is scored
//! against what the designer actually wrote.

use std::fmt;
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart::{
    note_accuracy, notes_to_frame_sequence, overall_pattern_score, Chart, ChartError,
    FrameSequence, FRAME_MS,
};
use crate::ingest::FeatureMatrix;
use crate::model::{
    make_training_instances, predict_region, ModelConfig, ModelError, ModelParams, Region,
    SequenceModel, TrainConfig, Trained, TrainingInstance,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("grid list {0} is empty")]
    EmptyGrid(&'static str),
    #[error("grid list {0} contains a non-positive entry")]
    NonPositive(&'static str),
    #[error("chart {chart}: {source}")]
    Alignment { chart: String, source: ModelError },
    #[error("delta {delta} leaves no frames to evaluate in a {frames}-frame chart")]
    DeltaTooLarge { delta: usize, frames: usize },
    #[error("chart {chart} with {combination}: {source}")]
    Simulation {
        chart: String,
        combination: Combination,
        source: Box<CalibrationError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("result table: {0}")]
    Table(String),
    #[error("result table i/o: {0}")]
    Io(#[from] io::Error),
}

impl From<csv::Error> for CalibrationError {
    fn from(e: csv::Error) -> Self {
        CalibrationError::Table(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub delta_choices: Vec<usize>,
    pub alpha_choices: Vec<f64>,
    pub epoch_choices: Vec<usize>,
    pub batch_choices: Vec<usize>,
    /// Seed handed to every fine-tuning run.
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            delta_choices: vec![512, 1024, 2048, 4096],
            alpha_choices: vec![1e-2, 1e-3, 1e-4],
            epoch_choices: vec![5, 10],
            batch_choices: vec![4, 16],
            seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        fn check<V: PartialOrd + Default>(
            name: &'static str,
            v: &[V],
        ) -> Result<(), CalibrationError> {
            if v.is_empty() {
                return Err(CalibrationError::EmptyGrid(name));
            }
            if v.iter()
                .any(|x| x.partial_cmp(&V::default()) != Some(std::cmp::Ordering::Greater))
            {
                return Err(CalibrationError::NonPositive(name));
            }
            Ok(())
        }
        check("delta_choices", &self.delta_choices)?;
        check("alpha_choices", &self.alpha_choices)?;
        if self.alpha_choices.iter().any(|a| !a.is_finite()) {
            return Err(CalibrationError::NonPositive("alpha_choices"));
        }
        check("epoch_choices", &self.epoch_choices)?;
        check("batch_choices", &self.batch_choices)
    }

    /// Every combination, delta outermost, batch size innermost.
    pub fn combinations(&self) -> Vec<Combination> {
        let mut out = Vec::new();
        for &delta in &self.delta_choices {
            for &learning_rate in &self.alpha_choices {
                for &max_epochs in &self.epoch_choices {
                    for &batch_size in &self.batch_choices {
                        out.push(Combination {
                            delta,
                            learning_rate,
                            max_epochs,
                            batch_size,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.delta_choices.len()
            * self.alpha_choices.len()
            * self.epoch_choices.len()
            * self.batch_choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub delta: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
}

impl Combination {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            seed,
        }
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "delta={} learning_rate={} max_epochs={} batch_size={}",
            self.delta, self.learning_rate, self.max_epochs, self.batch_size
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simulation {
    pub note_accuracy: f64,
    pub pattern_score: f64,
    pub pattern_score_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub chart: String,
    pub combination: Combination,
    pub simulation: Simulation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationSummary {
    pub combination: Combination,
    pub mean_accuracy: f64,
    pub mean_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<CombinationSummary>,
    pub winner: Combination,
}

/// Instances from every chart in order, each attributed to its song.
pub fn corpus_instances<T: Scalar>(
    corpus: &[(Chart, FeatureMatrix<T>)],
    model_cfg: &ModelConfig,
) -> Result<Vec<TrainingInstance<T>>, CalibrationError> {
    let mut out = Vec::new();
    for (chart, features) in corpus {
        let instances = make_training_instances(
            model_cfg,
            chart,
            features,
            0..chart.frame_count(),
            chart.song_id(),
        )
        .map_err(|source| CalibrationError::Alignment {
            chart: chart.song_id().to_string(),
            source,
        })?;
        out.extend(instances);
    }
    Ok(out)
}

/// Trains a fresh model on whole charts.
pub fn pretrain<T: Scalar>(
    corpus: &[(Chart, FeatureMatrix<T>)],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<Trained<ModelParams<T>>, CalibrationError> {
    if corpus.is_empty() {
        return Err(CalibrationError::EmptyCorpus);
    }
    let data = corpus_instances(corpus, model_cfg)?;
    let init = ModelParams::init(*model_cfg)?;
    Ok(init.fit(&data, cfg)?)
}

/// Fine-tunes on the first `delta` frames and lets the model complete the rest.
///
/// The pattern score is taken over the whole completed chart (designer
/// prefix plus model remainder); the gap compares it with the designer's own chart.
pub fn simulate_designer<T: Scalar, M: SequenceModel<T>>(
    base: &M,
    chart: &Chart,
    features: &FeatureMatrix<T>,
    delta: usize,
    cfg: &TrainConfig,
) -> Result<Simulation, CalibrationError> {
    let frames = chart.frame_count();
    if delta == 0 || delta >= frames {
        return Err(CalibrationError::DeltaTooLarge { delta, frames });
    }
    let instances =
        make_training_instances(base.config(), chart, features, 0..delta, chart.song_id())?;
    let adapted = base.fit(&instances, cfg)?.model;
    let region = Region::new(delta as u64 * FRAME_MS, chart.duration_ms());
    let notes = predict_region(&adapted, features, chart, region, &chart.grid())?;

    let human = chart.to_frame_sequence();
    let predicted = notes_to_frame_sequence(&notes, chart.duration_ms())?;
    let remainder = |s: &FrameSequence| FrameSequence::new(s.labels()[delta..].to_vec());
    let accuracy = note_accuracy(&remainder(&predicted)?, &remainder(&human)?)?;

    let mut completed = human.labels()[..delta].to_vec();
    completed.extend_from_slice(&predicted.labels()[delta..]);
    let score = overall_pattern_score(&FrameSequence::new(completed)?)?;
    let human_score = overall_pattern_score(&human)?;
    Ok(Simulation {
        note_accuracy: accuracy,
        pattern_score: score,
        pattern_score_gap: (score - human_score).abs(),
    })
}

/// Means per combination in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<CombinationSummary> {
    let mut groups: Vec<(Combination, f64, f64, usize)> = Vec::new();
    for row in rows {
        let s = &row.simulation;
        match groups.iter_mut().find(|g| g.0 == row.combination) {
            Some(g) => {
                g.1 += s.note_accuracy;
                g.2 += s.pattern_score_gap;
                g.3 += 1;
            }
            None => groups.push((row.combination, s.note_accuracy, s.pattern_score_gap, 1)),
        }
    }
    groups
        .into_iter()
        .map(|(combination, acc, gap, n)| CombinationSummary {
            combination,
            mean_accuracy: acc / n as f64,
            mean_gap: gap / n as f64,
        })
        .collect()
}

/// Highest mean accuracy, then smallest mean gap, then smallest delta; earlier rows win exact ties.
pub fn select_winner(rows: &[ResultRow]) -> Option<Combination> {
    let summary = summarize(rows);
    let mut best: Option<&CombinationSummary> = None;
    for s in &summary {
        let better = match best {
            None => true,
            Some(b) => {
                s.mean_accuracy > b.mean_accuracy
                    || (s.mean_accuracy == b.mean_accuracy
                        && (s.mean_gap < b.mean_gap
                            || (s.mean_gap == b.mean_gap
                                && s.combination.delta < b.combination.delta)))
            }
        };
        if better {
            best = Some(s);
        }
    }
    best.map(|s| s.combination)
}

/// Runs every (chart, combination) simulation, in parallel, and picks the winner.
pub fn grid_search<T: Scalar, M: SequenceModel<T>>(
    base: &M,
    charts: &[(Chart, FeatureMatrix<T>)],
    grid: &GridSpec,
) -> Result<CalibrationResult, CalibrationError> {
    grid.validate()?;
    if charts.is_empty() {
        return Err(CalibrationError::EmptyCorpus);
    }
    let max_delta = *grid
        .delta_choices
        .iter()
        .max()
        .expect("validated non-empty");
    if let Some((chart, _)) = charts.iter().find(|(c, _)| c.frame_count() <= max_delta) {
        return Err(CalibrationError::Simulation {
            chart: chart.song_id().to_string(),
            combination: grid
                .combinations()
                .into_iter()
                .find(|c| c.delta == max_delta)
                .expect("max delta is in the grid"),
            source: Box::new(CalibrationError::DeltaTooLarge {
                delta: max_delta,
                frames: chart.frame_count(),
            }),
        });
    }
    let combos = grid.combinations();
    let jobs: Vec<(usize, Combination)> = (0..charts.len())
        .flat_map(|c| combos.iter().map(move |&k| (c, k)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(c, combination)| {
            let (chart, features) = &charts[c];
            simulate_designer(
                base,
                chart,
                features,
                combination.delta,
                &combination.train_config(grid.seed),
            )
            .map(|simulation| ResultRow {
                chart: chart.song_id().to_string(),
                combination,
                simulation,
            })
            .map_err(|e| CalibrationError::Simulation {
                chart: chart.song_id().to_string(),
                combination,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let winner = select_winner(&rows).expect("at least one row");
    Ok(CalibrationResult {
        summary: summarize(&rows),
        rows,
        winner,
    })
}

const HEADER: [&str; 8] = [
    "chart",
    "delta",
    "learning_rate",
    "max_epochs",
    "batch_size",
    "note_accuracy",
    "pattern_score",
    "pattern_score_gap",
];

/// Comma-separated table, one row per simulation, followed by a `# winner` footer line.
pub fn write_table<W: io::Write>(
    result: &CalibrationResult,
    out: W,
) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in &result.rows {
        let c = &row.combination;
        let s = &row.simulation;
        w.write_record([
            row.chart.clone(),
            c.delta.to_string(),
            c.learning_rate.to_string(),
            c.max_epochs.to_string(),
            c.batch_size.to_string(),
            s.note_accuracy.to_string(),
            s.pattern_score.to_string(),
            s.pattern_score_gap.to_string(),
        ])?;
    }
    let mut out = w
        .into_inner()
        .map_err(|e| CalibrationError::Table(e.to_string()))?;
    writeln!(out, "# winner {}", result.winner)?;
    Ok(())
}

/// Reads the rows of a table produced by [`write_table`]; the footer is skipped.
pub fn read_table<R: io::Read>(input: R) -> Result<Vec<ResultRow>, CalibrationError> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    if r.headers()?.iter().ne(HEADER) {
        return Err(CalibrationError::Table("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let field = |k: usize| {
            record
                .get(k)
                .ok_or_else(|| CalibrationError::Table(format!("row {i}: missing field {k}")))
        };
        fn num<V: std::str::FromStr>(s: &str, i: usize) -> Result<V, CalibrationError> {
            s.parse()
                .map_err(|_| CalibrationError::Table(format!("row {i}: bad number {s:?}")))
        }
        rows.push(ResultRow {
            chart: field(0)?.to_string(),
            combination: Combination {
                delta: num(field(1)?, i)?,
                learning_rate: num(field(2)?, i)?,
                max_epochs: num(field(3)?, i)?,
                batch_size: num(field(4)?, i)?,
            },
            simulation: Simulation {
                note_accuracy: num(field(5)?, i)?,
                pattern_score: num(field(6)?, i)?,
                pattern_score_gap: num(field(7)?, i)?,
            },
        });
    }
    Ok(rows)
}
