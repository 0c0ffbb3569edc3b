use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-auditory"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&cli(&[])), 1);
    assert_eq!(code(&cli(&["no-such-command"])), 1);
    assert_eq!(code(&cli(&["config", "--preset", "nonexistent"])), 1);
    assert_eq!(code(&cli(&["--help"])), 0);
}

#[test]
fn missing_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = cli(&["run", "--preset", "mfcc-baseline", "--manifest", s(&missing), "--work-dir", s(dir.path())]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_echoes_presets() {
    let out = cli(&["config"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&text(&out)).unwrap();
    assert_eq!(v["name"], "sparse-exp2");
    assert_eq!(v["model"]["n_states"], 16);
    assert_eq!(v["model"]["n_components"], 8);
    let ks: Vec<u64> = v["system"]["hierarchy"]["levels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["k"].as_u64().unwrap())
        .collect();
    assert_eq!(ks, [64, 128, 256]);

    let out = cli(&["config", "--preset", "mfcc-baseline", "--seed", "9"]);
    let v: serde_json::Value = serde_json::from_str(&text(&out)).unwrap();
    assert_eq!(v["seed"], 9);
    assert_eq!(v["model"]["n_components"], 4);
}

#[test]
fn config_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = text(&cli(&["config", "--preset", "sparse-exp1"]));
    let path = dir.path().join("c.json");
    std::fs::write(&path, &first).unwrap();
    assert_eq!(text(&cli(&["config", "--config", s(&path)])), first);

    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(code(&cli(&["config", "--config", s(&path)])), 1);
}

#[test]
fn mfcc_workflow_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = cli(&[
        "synth-corpus",
        "--out",
        s(&corpus),
        "--classes",
        "3",
        "--speakers",
        "2",
        "--train-per-class",
        "4",
        "--test-per-class",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = corpus.join("manifest.json");

    let models = dir.path().join("models.whmm");
    let out = cli(&["train-model", "--preset", "mfcc-baseline", "--manifest", s(&manifest), "--out", s(&models)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let wav = corpus.join("test/w01_s1_001.wav");
    let out = cli(&["recognize", "--preset", "mfcc-baseline", "--models", s(&models), "--input", s(&wav)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(text(&out).lines().next().unwrap()).unwrap();
    assert!(v["word"].as_str().unwrap().starts_with('w'));

    let feats = dir.path().join("feats");
    let out = cli(&["extract", "--preset", "mfcc-baseline", "--input", s(&wav), "--out-dir", s(&feats)]);
    assert_eq!(code(&out), 0);
    assert!(feats.join("w01_s1_001.mfc").is_file());

    let report = dir.path().join("report.json");
    let out = cli(&[
        "evaluate",
        "--preset",
        "mfcc-baseline",
        "--models",
        s(&models),
        "--manifest",
        s(&manifest),
        "--noise",
        "white",
        "--snr",
        "-5,clean",
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v["rates"]["mfcc-baseline"]["white"]["-5"].is_number());
    assert!(v["rates"]["mfcc-baseline"]["white"]["clean"].is_number());

    let out = cli(&["profile", "--preset", "mfcc-baseline", "--models", s(&models), "--manifest", s(&manifest), "--limit", "2"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&text(&out)).unwrap();
    assert!(v["global"]["factor"].as_f64().unwrap() > 0.0);
    assert_eq!(v["stages"].as_array().unwrap().len(), 2);

    // Sparse configurations need a dictionary.
    let out = cli(&["recognize", "--models", s(&models), "--input", s(&wav)]);
    assert_eq!(code(&out), 0);
    let out = cli(&["extract", "--input", s(&wav), "--out-dir", s(&feats)]);
    assert_eq!(code(&out), 1);
}
