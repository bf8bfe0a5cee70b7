use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iets_core::analytics::ReductionCounts;
use iets_core::ingest::{self, PropheseeDat};
use iets_core::{Event, EventStream, FilterParams, Polarity, SensorGeometry};
use serde_json::Value;

fn iets(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iets"))
        .args(args)
        .env_remove("IETS_DATASET_ROOT")
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

/// Deterministic stream with same-pixel bursts and a few lone events.
fn sample_stream(seed: u64) -> EventStream {
    let g = SensorGeometry::new(16, 12).unwrap();
    let mut events = Vec::new();
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = |m: u64| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) % m
    };
    for _ in 0..60 {
        let (x, y, p) = (next(16) as u16, next(12) as u16, Polarity::from_bit(next(2) == 1));
        let mut t = next(90_000);
        for _ in 0..1 + next(4) {
            events.push(Event::new(x, y, t, p));
            t += 200 + next(3_000);
        }
    }
    EventStream::new(events, g).unwrap()
}

fn write_dat(path: &Path, stream: &EventStream) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    ingest::write_file(path, &PropheseeDat, stream).unwrap();
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn convert_dat_csv_dat_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let (dat, csv, back) = (dir.path().join("a.dat"), dir.path().join("a.csv"), dir.path().join("b.dat"));
    write_dat(&dat, &sample_stream(1));
    assert!(iets(&["convert", arg(&dat), arg(&csv)]).status.success());
    assert!(iets(&["convert", arg(&csv), arg(&back)]).status.success());
    assert_eq!(fs::read(&dat).unwrap(), fs::read(&back).unwrap());
    // explicit formats override extensions
    let txt = dir.path().join("a.txt");
    assert!(iets(&["convert", arg(&dat), arg(&txt), "--to", "csv"]).status.success());
    assert_eq!(fs::read(&txt).unwrap(), fs::read(&csv).unwrap());
}

#[test]
fn convert_reports_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.dat");
    let out = iets(&["convert", arg(&missing), arg(&dir.path().join("x.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.dat"));

    let truncated = dir.path().join("t.dat");
    fs::write(&truncated, [1, 2, 3, 4, 5]).unwrap();
    let out = iets(&["convert", arg(&truncated), arg(&dir.path().join("t.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset"));
}

#[test]
fn convert_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let (empty, csv) = (dir.path().join("empty.dat"), dir.path().join("empty.csv"));
    fs::write(&empty, b"").unwrap();
    let out = iets(&["convert", arg(&empty), arg(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
}

fn dataset(root: &Path) {
    write_dat(&root.join("cars/c0.dat"), &sample_stream(10));
    write_dat(&root.join("cars/c1.dat"), &sample_stream(11));
    write_dat(&root.join("background/b0.dat"), &sample_stream(12));
}

#[test]
fn surface_writes_one_frame_per_sample_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    dataset(&data);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let records = json(&iets(&["surface", arg(&data), "-o", arg(&a)]));
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 3);
    let frames = files_under(&a);
    assert_eq!(frames.len(), 3);
    assert!(frames[0].ends_with("background/b0__iets_t12000.png"), "{frames:?}");

    json(&iets(&["--workers", "1", "surface", arg(&data), "-o", arg(&b)]));
    for (x, y) in frames.iter().zip(files_under(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }

    // kept events agree with the reduction counts
    for rec in records {
        let sample = rec["sample"].as_str().unwrap();
        let path = data.join(format!("{sample}.dat"));
        let stream = ingest::read_file(&path, &PropheseeDat).unwrap().stream;
        let counts = ReductionCounts::measure(&stream, &FilterParams::default());
        assert_eq!(rec["kept_events"].as_u64().unwrap() as usize, counts.ie_count);
        assert_eq!(rec["events"].as_u64().unwrap() as usize, counts.raw_count);
        assert_eq!(rec["fallback_tracks"].as_u64().unwrap() as usize, counts.fallback_tracks);
    }
}

#[test]
fn surface_variants_and_raw_output() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("one.dat");
    write_dat(&file, &sample_stream(3));
    let out = dir.path().join("out");
    let records = json(&iets(&[
        "surface", arg(&file), "-o", arg(&out), "--variant", "raw_ts", "--variant", "fsae", "--variant", "iets",
        "--format", "raw_f32", "--tau", "5000",
    ]));
    let names: Vec<String> = files_under(&out).iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["one__fsae_t5000.f32", "one__iets_t5000.f32", "one__raw_ts_t5000.f32"]);
    assert_eq!(records.as_array().unwrap().len(), 3);
    let bytes = fs::read(out.join("one__iets_t5000.f32")).unwrap();
    assert_eq!(&bytes[..8], b"IETSF32\0");
}

#[test]
fn stats_on_isolated_events_reports_full_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("iso.dat");
    let g = SensorGeometry::new(8, 8).unwrap();
    let events = (0..64u16).map(|i| Event::new(i % 8, i / 8, 100 * i as u64, Polarity::Pos)).collect();
    write_dat(&file, &EventStream::new(events, g).unwrap());
    let report = json(&iets(&["stats", arg(&file)]));
    assert_eq!(report["aggregate"]["reduction_vs_raw"], 1.0);
    assert_eq!(report["aggregate"]["ie_count"], 0);
    assert_eq!(report["tau_minus_us"], 12000);
    assert_eq!(report["surrogate"], false);
}

#[test]
fn stats_lists_failures_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    dataset(&data);
    fs::write(data.join("cars/broken.dat"), [9, 9, 9]).unwrap();
    let out = iets(&["stats", arg(&data)]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken.dat"), "{stderr}");
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["samples"].as_array().unwrap().len(), 3);
}

#[test]
fn config_file_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    dataset(&data);
    let config = dir.path().join("iets.toml");
    fs::write(&config, "tau_minus_us = 3000\ntau_plus_us = 4000\n").unwrap();
    let report = json(&iets(&["--config", arg(&config), "stats", arg(&data), "--tau-plus", "9000"]));
    assert_eq!((report["tau_minus_us"].as_u64(), report["tau_plus_us"].as_u64()), (Some(3000), Some(9000)));

    let out = Command::new(env!("CARGO_BIN_EXE_iets"))
        .args(["stats"])
        .env("IETS_DATASET_ROOT", &data)
        .output()
        .unwrap();
    assert_eq!(json(&out)["samples"].as_array().unwrap().len(), 3);

    fs::write(&config, "tau = 5\n").unwrap();
    assert!(!iets(&["--config", arg(&config), "stats", arg(&data)]).status.success());
}

#[test]
fn synth_reproduces_checked_in_surrogate_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("surrogate");
    let status = iets(&["synth", "--kind", "surrogate", "--samples", "25", "--seed", "2024", "--format", "dat", "--no-labels", "-o", arg(&out)]);
    assert!(status.status.success());
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/surrogate");
    let (ours, theirs) = (files_under(&out), files_under(&fixture));
    assert_eq!(ours.len(), 50);
    assert_eq!(ours.len(), theirs.len());
    for (a, b) in ours.iter().zip(&theirs) {
        assert_eq!(a.strip_prefix(&out).unwrap(), b.strip_prefix(&fixture).unwrap());
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.display());
    }
}

#[test]
fn synth_csv_is_reproducible_with_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(iets(&["synth", "--samples", "2", "--seed", "5", "-o", arg(out)]).status.success());
    }
    let files = files_under(&a);
    assert_eq!(files.len(), 8);
    for (x, y) in files.iter().zip(files_under(&b)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let labels = fs::read_to_string(a.join("left/left_0000.labels")).unwrap();
    assert!(labels.starts_with("# t,x,y,p,label\n"));
    assert!(labels.contains(",inceptive"));

    let edge = dir.path().join("edge");
    assert!(iets(&["synth", "--kind", "edge", "--width", "8", "--height", "4", "-o", arg(&edge)]).status.success());
    assert!(edge.join("edge.csv").is_file() && edge.join("edge.labels").is_file());
}

#[test]
fn eval_learns_a_separable_toy_task() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    let g = SensorGeometry::new(16, 16).unwrap();
    for i in 0..12u16 {
        for (class, x0) in [("left", 0u16), ("right", 10)] {
            let mut events = Vec::new();
            for y in 0..16 {
                for dx in 0..6 {
                    let t = 1_000 * (dx as u64 + i as u64) + 10 * y as u64;
                    events.push(Event::new(x0 + dx, y, t, Polarity::Pos));
                    events.push(Event::new(x0 + dx, y, t + 500, Polarity::Pos));
                }
            }
            write_dat(&data.join(format!("{class}/{i}.dat")), &EventStream::new(events, g).unwrap());
        }
    }
    let models = dir.path().join("models");
    let summary = json(&iets(&["eval", arg(&data), "--seeds", "2", "--grid", "8", "--model-dir", arg(&models)]));
    assert_eq!(summary["classes"], serde_json::json!(["left", "right"]));
    let variants = summary["variants"].as_array().unwrap();
    assert_eq!(variants.len(), 3);
    for v in variants {
        assert_eq!(v["mean_accuracy"], 1.0, "{v}");
    }
    let model = fs::read(models.join("iets.linear")).unwrap();
    assert_eq!(&model[..8], b"IETSLIN\0");
}

#[test]
fn bench_reports_rates() {
    let report = json(&iets(&["bench", "--events", "20000", "--events-per-sample", "5000", "--repetitions", "2"]));
    assert_eq!(report["events_processed"].as_u64().unwrap() > 19_000, true);
    assert_eq!(report["workers"], 1);
    assert_eq!(report["stages"].as_array().unwrap().len(), 4);
    assert!(report["events_per_second"].as_f64().unwrap() > 0.0);
}
