use std::fs::{self, File};
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kiai_core::calibration::{grid_search, pretrain, write_table, GridSpec};
use kiai_core::chart::FRAME_MS;
use kiai_core::ingest::{
    extract_features, load_corpus, save_features, serialize_chart, OsuTaikoBeatmap,
};
use kiai_core::model::{load_model, save_model, ModelConfig, TrainConfig};
use kiai_core::session::{
    compute_log_statistics, replay, Service, ServiceConfig, SessionLog, SongInfo, SongLibrary,
    StudyConfig, SystemClock,
};
use kiai_core::{Features, Model, Real};

#[derive(Parser)]
#[command(
    name = "kiai",
    version,
    about = "Co-creative Taiko chart design with designer adaptation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the session server.
    Serve {
        #[arg(long, env = "KIAI_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        base_model: PathBuf,
        /// Directory of `<id>.song.json` + `<id>.features` pairs.
        #[arg(long)]
        songs: PathBuf,
        /// JSON study configuration.
        #[arg(long)]
        study_config: PathBuf,
        /// Where session logs, charts and metrics go.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a base model from a corpus directory.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Grid-search the retraining threshold and training hyperparameters.
    Calibrate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        base: PathBuf,
        /// JSON grid file; missing keys take their defaults.
        #[arg(long)]
        grid: PathBuf,
        /// Result table (CSV with a `# winner` footer).
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the 40-band feature matrix from a WAV file.
    Features {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register a study song: writes `<id>.features` and `<id>.song.json` into DIR.
    Song {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        bpm: f64,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        offset_ms: i64,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Convert a Taiko `.osu` file to the native chart document.
    ConvertOsu {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Chart length; defaults to one second past the last object.
        #[arg(long)]
        duration_ms: Option<u64>,
    },
    /// Replay a session log and verify it reproduces.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        base_model: PathBuf,
        #[arg(long)]
        songs: PathBuf,
        /// Write the replayed chart here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the derived statistics of a session log as JSON.
    Stats {
        #[arg(long)]
        log: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 8)]
    context: usize,
    #[arg(long, default_value_t = 16)]
    history: usize,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Mono samples in [-1, 1] and the sample rate.
fn read_wav(path: &Path) -> Result<(Vec<Real>, u32)> {
    let mut reader =
        hound::WavReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<Real> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as Real;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as Real / scale))
                .collect::<Result<_, _>>()?
        }
    };
    let mono = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<Real>() / channels as Real)
        .collect();
    Ok((mono, spec.sample_rate))
}

fn wav_features(path: &Path) -> Result<(Features, u64)> {
    let (samples, rate) = read_wav(path)?;
    let features = extract_features(&samples, rate)
        .with_context(|| format!("extracting features from {}", path.display()))?;
    let duration_ms = (samples.len() as u64 * 1000).div_ceil(rate as u64);
    Ok((features, duration_ms))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Serve {
            port,
            host,
            base_model,
            songs,
            study_config,
            out,
        } => {
            let study: StudyConfig = read_json(&study_config)?;
            let library = SongLibrary::<Real>::load_dir(&songs)?;
            let service = Service::new(
                ServiceConfig {
                    base_model_path: base_model,
                    out_dir: out,
                    study,
                },
                library,
                Arc::new(SystemClock),
            )?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .context("bad --host/--port")?;
            eprintln!("listening on http://{addr}/v1/messages");
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(kiai_server::serve(addr, Arc::new(service)))?;
        }
        Cmd::Pretrain {
            corpus,
            out,
            model,
            train,
        } => {
            let corpus = load_corpus::<Real>(&corpus)?;
            let model_cfg = ModelConfig {
                hidden_size: model.hidden,
                audio_context: model.context,
                history_len: model.history,
                seed: model.model_seed,
                ..ModelConfig::default()
            };
            let train_cfg = TrainConfig {
                learning_rate: train.lr,
                max_epochs: train.epochs,
                batch_size: train.batch,
                seed: train.seed,
            };
            let trained = pretrain(&corpus, &train_cfg, &model_cfg)?;
            save_model(&out, &trained.model)?;
            for (e, loss) in trained.epoch_losses.iter().enumerate() {
                println!("epoch {e}: loss {loss:.6}");
            }
            println!("wrote {}", out.display());
        }
        Cmd::Calibrate {
            corpus,
            base,
            grid,
            out,
        } => {
            let corpus = load_corpus::<Real>(&corpus)?;
            let base: Model = load_model(&base)?;
            let grid: GridSpec = read_json(&grid)?;
            let result = grid_search(&base, &corpus, &grid)?;
            write_table(
                &result,
                File::create(&out).with_context(|| format!("creating {}", out.display()))?,
            )?;
            println!("winner: {}", result.winner);
            println!("wrote {} rows to {}", result.rows.len(), out.display());
        }
        Cmd::Features { wav, out } => {
            let (features, _) = wav_features(&wav)?;
            save_features(&out, &features)?;
            println!(
                "{} frames x {} bands -> {}",
                features.rows(),
                features.cols(),
                out.display()
            );
        }
        Cmd::Song {
            wav,
            id,
            bpm,
            offset_ms,
            dir,
        } => {
            let (features, duration_ms) = wav_features(&wav)?;
            fs::create_dir_all(&dir)?;
            save_features(dir.join(format!("{id}.features")), &features)?;
            let info = SongInfo {
                song_id: id.clone(),
                bpm,
                offset_ms,
                duration_ms,
            };
            fs::write(
                dir.join(format!("{id}.song.json")),
                serde_json::to_string_pretty(&info)? + "\n",
            )?;
            println!("song {id}: {duration_ms}ms, {} frames", features.rows());
        }
        Cmd::ConvertOsu {
            input,
            out,
            duration_ms,
        } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let beatmap =
                OsuTaikoBeatmap::parse(&text).with_context(|| input.display().to_string())?;
            let chart = beatmap.to_chart(duration_ms)?;
            fs::write(&out, serialize_chart(&chart))?;
            println!(
                "{} notes ({} non-circle objects skipped, {} collisions dropped), {} frames",
                chart.notes().len(),
                beatmap.skipped_objects,
                beatmap.dropped_collisions,
                chart.duration_ms().div_ceil(FRAME_MS)
            );
        }
        Cmd::Replay {
            log,
            base_model,
            songs,
            out,
        } => {
            let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let recorded = SessionLog::read_from(BufReader::new(file))?;
            let library = SongLibrary::<Real>::load_dir(&songs)?;
            let song = library.get(&recorded.header.song_id)?.clone();
            let base: Model = load_model(&base_model)?;
            let session = replay(&recorded, base, song)?;
            println!(
                "replayed {} events: {} notes, {} retrains",
                recorded.events.len(),
                session.chart().notes().len(),
                session.adaptation().retrain_count()
            );
            if let Some(out) = out {
                fs::write(&out, serialize_chart(session.chart()))?;
            }
        }
        Cmd::Stats { log } => {
            let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
            let recorded = SessionLog::read_from(BufReader::new(file))?;
            let stats = compute_log_statistics(&recorded.events)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
