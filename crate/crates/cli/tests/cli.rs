use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use choirf0::audio::{write_wav, Audio};
use choirf0::nn::{build_model, save_checkpoint, Architecture};
use choirf0::HcqtParams;

fn choirf0(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_choirf0"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = choirf0(args);
    assert!(
        out.status.success(),
        "choirf0 {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// An untrained late/deep checkpoint whose output never reaches any threshold.
fn mute_checkpoint(path: &Path, threshold: f32) {
    let mut model = build_model(Architecture::LateDeep, &HcqtParams::default(), 0).unwrap();
    model.trunk.last_mut().unwrap().conv.bias.iter_mut().for_each(|b| *b = -40.0);
    model.threshold = Some(threshold);
    save_checkpoint(&model, path).unwrap();
}

#[test]
fn predict_on_silence_is_empty_and_echoes_stored_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("mute.ckpt");
    mute_checkpoint(&ckpt, 0.37);
    let wav = dir.path().join("silence.wav");
    write_wav(&wav, &Audio::new(vec![0.0; 22050], 22050)).unwrap();
    let out = dir.path().join("silence.txt");
    let png = dir.path().join("silence.png");
    let stdout = ok(&["predict", "--ckpt", s(&ckpt), "--audio", s(&wav), "--out", s(&out), "--plot", s(&png)]);
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["threshold"].as_f64().unwrap() as f32, 0.37);
    assert_eq!(summary["threshold_source"], "checkpoint");
    assert_eq!(summary["frames"], 87);
    assert_eq!(summary["f0_count"], 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 87);
    assert!(text.lines().all(|l| l.split_whitespace().count() == 1));
    assert!(png.exists());

    let stdout = ok(&["predict", "--ckpt", s(&ckpt), "--audio", s(&wav), "--out", s(&out), "--threshold", "0.8"]);
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["threshold_source"], "explicit");

    let bad = choirf0(&["predict", "--ckpt", s(&ckpt), "--audio", s(&wav), "--out", s(&out), "--threshold", "1.5"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("outside [0, 1]"));
}

#[test]
fn score_identical_annotations_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let quartet = dir.path().join("quartet");
    let spec = dir.path().join("spec.json");
    let q = choirf0::dataset::random_quartet_spec(3, 1.5);
    fs::write(&spec, serde_json::to_string(&q).unwrap()).unwrap();
    ok(&["synth", "--spec", s(&spec), "--out", s(&quartet)]);
    let reference = quartet.join("mix.txt");
    let report = dir.path().join("score.json");
    let table = ok(&[
        "score", "--ref", s(&reference), "--est", s(&reference), "--tolerance", "50", "--tolerance", "20", "--report",
        s(&report),
    ]);
    assert!(table.contains("| 50 c | 1 | 1.000 (0.000) | 1.000 (0.000) | 1.000 (0.000)"), "{table}");
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(eval["summary"].as_array().unwrap().len(), 2);
}

#[test]
fn forge_train_tune_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let stems = dir.path().join("stems");
    let corpus = dir.path().join("corpus");
    ok(&["synth", "--songs", "6", "--duration", "1.2", "--seed", "5", "--out", s(&stems)]);
    let forged = ok(&["forge", "--stems", s(&stems), "--out", s(&corpus), "--shifts", "-2,0", "--reverb", "synthetic:0.3"]);
    assert!(forged.contains("manifest written"), "{forged}");
    let manifest = corpus.join("manifest.jsonl");
    assert_eq!(fs::read_to_string(&manifest).unwrap().lines().count(), 24);

    let ckpt = dir.path().join("np.ckpt");
    let cache = dir.path().join("cache");
    ok(&[
        "train", "--no-phase", "--manifest", s(&manifest), "--out", s(&ckpt), "--epochs", "2", "--patience", "1",
        "--patch-frames", "25", "--batch-size", "8", "--cache-dir", s(&cache),
    ]);
    assert!(fs::read_dir(&cache).unwrap().count() > 0);
    let tuned = ok(&["tune-threshold", "--ckpt", s(&ckpt), "--manifest", s(&manifest), "--cache-dir", s(&cache)]);
    assert!(tuned.starts_with("threshold "), "{tuned}");
    let stored: f64 = tuned.split_whitespace().nth(1).unwrap().parse().unwrap();

    let first = fs::read_to_string(&manifest).unwrap();
    let entry: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    let wav = corpus.join(entry["audio_path"].as_str().unwrap());
    let out = dir.path().join("est.txt");
    let summary: serde_json::Value =
        serde_json::from_str(&ok(&["predict", "--ckpt", s(&ckpt), "--audio", s(&wav), "--out", s(&out)])).unwrap();
    assert!((summary["threshold"].as_f64().unwrap() - stored).abs() < 0.006);
    assert_eq!(summary["threshold_source"], "checkpoint");
    assert!(summary["training_fingerprint"].is_string());
}

#[test]
fn experiment_rejects_corpus_filter_without_matches() {
    let dir = tempfile::tempdir().unwrap();
    let stems = dir.path().join("stems");
    let corpus = dir.path().join("corpus");
    ok(&["synth", "--songs", "3", "--duration", "0.5", "--out", s(&stems)]);
    ok(&["forge", "--stems", s(&stems), "--out", s(&corpus)]);
    let config = dir.path().join("exp.toml");
    fs::write(
        &config,
        "experiment = \"comparative\"\nmanifest = \"corpus/manifest.jsonl\"\noutput_dir = \"run\"\n\n[filters]\nexclude_corpus = \"nonexistent\"\n",
    )
    .unwrap();
    let out = choirf0(&["experiment", "--config", s(&config)]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("matches no manifest entry"), "{stderr}");
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = choirf0(&["forge", "--stems", "/nonexistent", "--out", "/tmp/x", "--shifts", "3..1"]);
    assert!(!out.status.success());
    let out = choirf0(&["train", "--arch", "early_shallow", "--no-phase", "--manifest", "m.jsonl", "--out", "x.ckpt"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-phase"));
}
