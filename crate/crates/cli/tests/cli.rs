use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

use kiai_core::chart::Chart;
use kiai_core::ingest::{load_features, parse_chart, serialize_chart};
use serde_json::{json, Value};

fn kiai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kiai"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = kiai(args);
    assert!(
        out.status.success(),
        "kiai {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/osu")
        .join(name)
}

/// Clicks every 250ms over a low hum, 16-bit mono.
fn write_wav(path: &Path, seconds: f64, tone_hz: f64) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    let n = (seconds * 16_000.0) as usize;
    for i in 0..n {
        let t = i as f64 / 16_000.0;
        let click = if (i % 4000) < 160 { 0.8 } else { 0.0 };
        let v = 0.2 * (std::f64::consts::TAU * tone_hz * t).sin()
            + click * (std::f64::consts::TAU * 3000.0 * t).sin();
        w.write_sample((v * 16_000.0) as i16).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn convert_osu_writes_a_native_chart() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.chart.json");
    let stdout = ok(&[
        "convert-osu",
        "--input",
        s(&fixture("fixture-slow.osu")),
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("notes"), "{stdout}");
    let chart = parse_chart(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(chart.song_id(), "osu-1004");
    assert!(!chart.notes().is_empty());

    let bad = kiai(&[
        "convert-osu",
        "--input",
        s(&fixture("bad-time.osu")),
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 37"));
}

#[test]
fn features_and_song_registration() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("a.wav");
    write_wav(&wav, 1.0, 220.0);
    let feats = dir.path().join("a.features");
    ok(&["features", "--wav", s(&wav), "--out", s(&feats)]);
    let m = load_features::<f32>(&feats).unwrap();
    assert_eq!((m.rows(), m.cols()), (44, 40));

    let songs = dir.path().join("songs");
    ok(&[
        "song",
        "--wav",
        s(&wav),
        "--id",
        "a",
        "--bpm",
        "150",
        "--offset-ms",
        "-20",
        "--dir",
        s(&songs),
    ]);
    let info: Value =
        serde_json::from_str(&fs::read_to_string(songs.join("a.song.json")).unwrap()).unwrap();
    assert_eq!(
        info,
        json!({"song_id": "a", "bpm": 150.0, "offset_ms": -20, "duration_ms": 1000})
    );
    assert_eq!(
        fs::read(songs.join("a.features")).unwrap(),
        fs::read(&feats).unwrap()
    );
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn http(port: u16, request: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.write_all(request.as_bytes()).ok()?;
    let mut text = String::new();
    stream.read_to_string(&mut text).ok()?;
    let (head, body) = text.split_once("\r\n\r\n")?;
    head.starts_with("HTTP/1.1 200").then(|| body.to_string())
}

fn post(port: u16, message: &Value) -> Value {
    let body = message.to_string();
    let req = format!(
        "POST /v1/messages HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    serde_json::from_str(&http(port, &req).expect("server replied")).unwrap()
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn pretrain_calibrate_serve_stats_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // corpus of two tiny charts
    let corpus = d.join("corpus");
    fs::create_dir(&corpus).unwrap();
    for (i, stem) in ["one", "two"].iter().enumerate() {
        let wav = d.join(format!("{stem}.wav"));
        write_wav(&wav, 2.0, 200.0 + 50.0 * i as f64);
        let feats = corpus.join(format!("{stem}.features"));
        ok(&["features", "--wav", s(&wav), "--out", s(&feats)]);
        let rows = load_features::<f32>(&feats).unwrap().rows() as u64;
        let notes = (0..rows)
            .step_by(11)
            .map(|f| {
                kiai_core::chart::Note::new(
                    f * 23,
                    kiai_core::chart::NoteKind::Don,
                    kiai_core::chart::Provenance::Human,
                )
            })
            .collect();
        let chart = Chart::new(*stem, 120.0, 0, rows * 23, notes).unwrap();
        fs::write(
            corpus.join(format!("{stem}.chart.json")),
            serialize_chart(&chart),
        )
        .unwrap();
    }
    let base = d.join("base.model");
    let stdout = ok(&[
        "pretrain",
        "--corpus",
        s(&corpus),
        "--out",
        s(&base),
        "--hidden",
        "4",
        "--context",
        "1",
        "--history",
        "4",
        "--epochs",
        "2",
        "--lr",
        "0.05",
    ]);
    assert!(stdout.contains("epoch 1: loss"), "{stdout}");

    let grid = d.join("grid.json");
    fs::write(
        &grid,
        r#"{"delta_choices":[4,8],"alpha_choices":[0.05],"epoch_choices":[1],"batch_choices":[4]}"#,
    )
    .unwrap();
    let table = d.join("table.csv");
    ok(&[
        "calibrate",
        "--corpus",
        s(&corpus),
        "--base",
        s(&base),
        "--grid",
        s(&grid),
        "--out",
        s(&table),
    ]);
    let table = fs::read_to_string(&table).unwrap();
    assert_eq!(
        table.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 2 * 2
    );
    assert!(
        table.lines().last().unwrap().starts_with("# winner"),
        "{table}"
    );

    // study songs and server
    let songs = d.join("songs");
    for id in ["left", "right"] {
        let wav = d.join(format!("{id}.wav"));
        write_wav(&wav, 3.0, 300.0);
        ok(&[
            "song",
            "--wav",
            s(&wav),
            "--id",
            id,
            "--bpm",
            "120",
            "--dir",
            s(&songs),
        ]);
    }
    let study = d.join("study.json");
    fs::write(
        &study,
        r#"{"songs":["left","right"],"delta":4,"train":{"learning_rate":0.05,"max_epochs":1,"batch_size":4,"seed":0}}"#,
    )
    .unwrap();
    let out = d.join("out");
    let port = free_port();
    let _server = Server(
        Command::new(env!("CARGO_BIN_EXE_kiai"))
            .args([
                "serve",
                "--base-model",
                s(&base),
                "--songs",
                s(&songs),
                "--study-config",
                s(&study),
                "--out",
                s(&out),
            ])
            .env("KIAI_PORT", port.to_string())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let health = "GET /v1/health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n";
    let started = Instant::now();
    while http(port, health).as_deref() != Some("ok") {
        assert!(
            started.elapsed() < Duration::from_secs(30),
            "server did not come up"
        );
        sleep(Duration::from_millis(50));
    }

    let created = post(
        port,
        &json!({"version":1,"type":"create_session","payload":{"study_id":1,"leg":"first"}}),
    );
    assert_eq!(created["type"], "session_created", "{created}");
    assert_eq!(created["payload"]["song"]["song_id"], "right");
    let id = created["session_id"].as_str().unwrap().to_string();
    for (t, kind) in [(0, "don"), (250, "kat"), (500, "big_don"), (510, "don")] {
        let r = post(
            port,
            &json!({"version":1,"type":"place","session_id":id,"payload":{"time_ms":t,"kind":kind}}),
        );
        assert_eq!(r["type"], "edit_ack", "{r}");
    }
    let fill = post(
        port,
        &json!({"version":1,"type":"pass_to_ai","session_id":id,"payload":{"start_ms":600,"end_ms":2000}}),
    );
    assert_eq!(fill["type"], "ai_fill", "{fill}");
    let stale = post(
        port,
        &json!({"version":2,"type":"snapshot","session_id":id,"payload":{}}),
    );
    assert_eq!(stale["payload"]["code"], "unsupported_version");
    let done = post(
        port,
        &json!({"version":1,"type":"finish","session_id":id,"payload":{}}),
    );
    assert_eq!(done["type"], "finished", "{done}");
    let log_path = done["payload"]["log_path"].as_str().unwrap().to_string();
    let chart_path = done["payload"]["chart_path"].as_str().unwrap().to_string();

    let stats: Value = serde_json::from_str(&ok(&["stats", "--log", &log_path])).unwrap();
    assert_eq!(stats["end_turn_count"], 1);
    assert_eq!(stats["human_notes_placed"], 3);
    for (k, v) in stats.as_object().unwrap() {
        assert_eq!(&done["payload"]["metrics"][k], v, "{k}");
    }

    let replayed = d.join("replayed.chart.json");
    ok(&[
        "replay",
        "--log",
        &log_path,
        "--base-model",
        s(&base),
        "--songs",
        s(&songs),
        "--out",
        s(&replayed),
    ]);
    assert_eq!(fs::read(&replayed).unwrap(), fs::read(&chart_path).unwrap());
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = kiai(&["stats", "--log", "/nonexistent/log.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert!(!kiai(&["frobnicate"]).status.success());
}
