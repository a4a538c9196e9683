use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn binscene(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binscene"))
        .current_dir(dir)
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const ROOMS: &str = r#"{"seed": 1, "rooms": 2, "distances": [1.0], "t60": [0.3, 0.5], "max_order": 6,
 "hrir": "synthetic", "head_radius": 0.07}"#;

const DATA: &str = r#"{"seed": 5, "counts": {"train": 12, "val": 3, "test": 4},
 "pair_weights": {"child_child": 1, "child_adult": 1, "adult_adult": 1},
 "snr_range_db": [0, 5], "babble_fraction": 0.5, "babble_snr_range_db": [-2.5, 15], "babble_sources": [3, 8],
 "distances": {"train": [1.0], "val": [1.0], "test": [1.0]},
 "corpus": ["corpus/manifest.csv"], "hrir": "synthetic"}"#;

const TRAIN: &str = r#"{"model": {"basis_size": 8, "tcn_channels": 8}, "train": {"epochs": 1, "batch_size": 4}}"#;

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("rooms.json"), ROOMS).unwrap();
    fs::write(d.join("data.json"), DATA).unwrap();
    fs::write(d.join("train.json"), TRAIN).unwrap();

    let o = binscene(d, &["rooms", "--config", "rooms.json", "--out", "cache", "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("144 jobs, 144 RIRs and 74 BRIRs written"));
    let brirs = fs::read_dir(d.join("cache/brir/room01/d1.0")).unwrap().count();
    assert_eq!(brirs, 2 * 37);
    let rir = binscene_core::signal::wav::read_channels(&d.join("cache/rir/room00/d1.0/az000.wav")).unwrap();
    assert_eq!(rir.len(), 7);

    let o = binscene(d, &["rooms", "--config", "rooms.json", "--out", "cache"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("0 RIRs and 0 BRIRs written, 144 already cached"));

    assert_eq!(code(&binscene(d, &["corpus", "--out", "corpus"])), 0);
    let o = binscene(d, &["synth", "--config", "data.json", "--cache", "cache", "--out", "data"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let hash = stdout(&o).lines().find(|l| l.starts_with("index hash")).unwrap().to_string();
    let o = binscene(d, &["synth", "--config", "data.json", "--cache", "cache", "--out", "data2", "--jobs", "3"]);
    assert!(stdout(&o).contains(&hash));
    assert_eq!(fs::read_dir(d.join("data/train")).unwrap().count(), 12);

    let o = binscene(d, &["train", "--config", "train.json", "--data", "data", "--strategy", "classroom", "--out", "full"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let full: usize = stdout(&o).split_whitespace().nth(1).unwrap().parse().unwrap();
    let history = fs::read_to_string(d.join("full/history.csv")).unwrap();
    assert!(history.starts_with("epoch,lr,trainLoss,valLoss\n0,"));

    let o = binscene(d, &["train", "--config", "train.json", "--data", "data", "--strategy", "finetune", "--out", "ft"]);
    assert_eq!(code(&o), 2);
    let o = binscene(
        d,
        &[
            "train", "--config", "train.json", "--data", "data", "--strategy", "finetune",
            "--checkpoint", "full/model.ckpt", "--finetune-fraction", "0.5", "--out", "ft",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let half: usize = stdout(&o).split_whitespace().nth(1).unwrap().parse().unwrap();
    assert_eq!(half, (full as f64 / 2.0).round() as usize);

    let o = binscene(d, &["eval", "--data", "data", "--baseline", "passthrough", "--out", "ev"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("mean SNRi 0.00 dB"));
    assert!(d.join("ev/plots/snri_by_condition.csv").exists());

    let o = binscene(d, &["eval", "--data", "data", "--checkpoint", "ft/model.ckpt", "--out", "ev_model"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("ev_model/estimates/test").is_dir());

    let o = binscene(d, &["report", "--metrics", "ev_model/metrics.csv", "--out", "rep"]);
    assert_eq!(code(&o), 0);
    assert!(d.join("rep/summary.json").exists());
    let header = fs::read_to_string(d.join("ev/metrics.csv")).unwrap().lines().next().unwrap().to_string();
    fs::write(d.join("empty.csv"), header + "\n").unwrap();
    let o = binscene(d, &["report", "--metrics", "empty.csv", "--out", "rep2"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no scored records"));
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.json"), ROOMS.replace("0.3, 0.5", "0.25")).unwrap();
    let o = binscene(d, &["rooms", "--config", "bad.json", "--out", "cache"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("t60"));

    fs::write(d.join("rooms.json"), ROOMS).unwrap();
    let o = binscene(d, &["rooms", "--config", "rooms.json", "--out", "cache", "--hrir", "missing-pack"]);
    assert_eq!(code(&o), 2);
    let o = binscene(d, &["rooms", "--config", "rooms.json", "--out", "cache", "--distance", "2.0"]);
    assert_eq!(code(&o), 2);
    let o = binscene(d, &["rooms", "--config", "rooms.json", "--out", "cache", "--jobs", "0"]);
    assert_eq!(code(&o), 2);
    let o = binscene(d, &["rooms", "--config", "absent.json", "--out", "cache"]);
    assert_eq!(code(&o), 3);
    let o = binscene(d, &["synth", "--config", "rooms.json", "--cache", "nocache", "--out", "x"]);
    assert_eq!(code(&o), 2);
}
