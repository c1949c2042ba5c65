use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covseg::data::{synthetic_volume, write_nifti_volume, DatasetManifest, Split};

const TINY: &[&str] = &[
    "network.levels=3",
    "network.base_filters=2",
    "network.input_size=16x16",
    "data.size=16",
    "train.max_epochs=2",
    "train.batch_size=2",
];

fn covseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covseg")).args(args).output().expect("binary runs")
}

fn with_tiny(mut args: Vec<&str>) -> Vec<&str> {
    for s in TINY {
        args.extend(["--set", s]);
    }
    args
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two synthetic sources, 12 slices in total: dataset1 keeps all 6, dataset2
/// keeps its 6 annotated slices out of 8.
fn prepare(dir: &Path) -> PathBuf {
    let mut args = vec!["prepare".to_string()];
    for (id, n, empty, seed) in [("dataset1", 6, vec![2], 0u64), ("dataset2", 8, vec![0, 7], 1)] {
        let (img, msk) = synthetic_volume(n, 24, 24, &empty, seed);
        let ip = dir.join(format!("{id}_ct.nii.gz"));
        let mp = dir.join(format!("{id}_mask.nii.gz"));
        write_nifti_volume(&ip, &img).unwrap();
        write_nifti_volume(&mp, &msk).unwrap();
        args.extend(["--source".into(), id.into(), "--image".into(), s(&ip).into(), "--mask".into(), s(&mp).into()]);
    }
    let out = dir.join("prepared");
    args.extend(["--set".into(), "data.size=16".into(), "--out".into(), s(&out).into()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let stdout = ok(&covseg(&refs));
    assert!(stdout.contains("dataset1: 6"), "{stdout}");
    assert!(stdout.contains("dataset2: 6"), "{stdout}");
    assert!(stdout.contains("12 samples (9 train / 3 test)"), "{stdout}");
    out.join("manifest.json")
}

#[test]
fn receptive_field_command() {
    for (d, rf) in [("1,2,4", 15), ("1,1,1", 7), ("2,4", 13)] {
        let out = ok(&covseg(&["rf", "--dilations", d]));
        assert!(out.contains(&format!("receptive field: {rf}x{rf}")), "{out}");
    }
}

#[test]
fn missing_input_fails_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.nii.gz");
    let out = covseg(&[
        "prepare", "--source", "dataset1", "--image", s(&missing), "--mask", s(&missing), "--out",
        s(&dir.path().join("o")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.nii.gz"));

    let out = covseg(&["train", "--manifest", s(&dir.path().join("none.json")), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("none.json"));
}

#[test]
fn bad_config_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = covseg(&[
        "train", "--manifest", s(&dir.path().join("m.json")), "--set", "train.nope=1", "--out", s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.nope"));
}

#[test]
fn prepare_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = prepare(dir.path());
    let first = std::fs::read(&manifest).unwrap();
    prepare(dir.path());
    assert_eq!(std::fs::read(&manifest).unwrap(), first);
}

#[test]
fn evaluate_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = prepare(dir.path());
    let manifest = DatasetManifest::load(&manifest_path).unwrap();
    let root = manifest_path.parent().unwrap();
    let preds = dir.path().join("preds");
    std::fs::create_dir_all(&preds).unwrap();
    for r in manifest.samples.iter().filter(|r| r.split == Some(Split::Test)) {
        let sample = covseg::data::read_sample(&root.join(&r.file), r).unwrap();
        covseg::training::write_probability_npy(&preds.join(format!("{}.npy", r.id())), &sample.mask).unwrap();
    }
    let out = dir.path().join("eval");
    let stdout = ok(&covseg(&[
        "evaluate", "--manifest", s(&manifest_path), "--predictions", s(&preds), "--out", s(&out),
    ]));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["mean_dice"], 1.0);
    assert_eq!(json["mean_sensitivity"], 1.0);
    assert_eq!(json["mean_specificity"], 1.0);
    assert!(out.join("metrics.txt").exists());
    assert!(!stdout.is_empty());
}

#[test]
fn train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = prepare(dir.path());
    let run = dir.path().join("run");
    ok(&covseg(&with_tiny(vec!["train", "--manifest", s(&manifest), "--out", s(&run)])));
    for f in ["best.safetensors", "final.safetensors", "epochs.jsonl", "state.json", "config.kv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(run.join("epochs.jsonl")).unwrap().lines().count(), 2);

    let ckpt = run.join("best.safetensors");
    let eval = dir.path().join("eval");
    ok(&covseg(&["evaluate", "--manifest", s(&manifest), "--checkpoint", s(&ckpt), "--out", s(&eval)]));
    assert!(eval.join("metrics.json").exists());

    let slices: Vec<PathBuf> = std::fs::read_dir(manifest.parent().unwrap().join("slices"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .take(2)
        .collect();
    let pred = dir.path().join("pred");
    let mut args = vec!["predict", "--checkpoint", s(&ckpt), "--out", s(&pred)];
    for p in &slices {
        args.extend(["--input", s(p)]);
    }
    ok(&covseg(&args));
    for p in &slices {
        let stem = p.file_stem().unwrap().to_str().unwrap();
        for suffix in ["_prob.npy", "_mask.png", "_overlay.png"] {
            assert!(pred.join(format!("{stem}{suffix}")).exists(), "{stem}{suffix}");
        }
    }
    let timing: serde_json::Value = serde_json::from_slice(&std::fs::read(pred.join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["slices"], 2);
}

#[test]
fn ablate_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = prepare(dir.path());
    let out = dir.path().join("ablation");
    let mut args = with_tiny(vec!["ablate", "--manifest", s(&manifest), "--out", s(&out)]);
    args.extend(["--set", "train.max_epochs=1"]);
    let stdout = ok(&covseg(&args));
    assert_eq!(stdout.lines().count(), 5, "{stdout}");
    for name in ["baseline+DL", "baseline+FTL", "ours+DL", "ours+FTL"] {
        assert!(stdout.contains(name));
    }
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 4);
    assert!(out.join("ablation.txt").exists());
}
