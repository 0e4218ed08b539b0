use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
layout = semi-frontal
pose.features.patch_size = 16
pose.features.scales = 1
pose.features.hog.cells = 1
pose.features.hog.bins = 8
pose.features.hog.signed = true
pose.features.lbp.bins = 59
pose.features.context = none
pose.augment.samples_per_image = 1
final.features.patch_size = 16
final.features.scales = 1
final.features.hog.cells = 1
final.features.lbp.bins = 59
final.features.context = none
final.augment.samples_per_image = 1
final.stages = 2
box.features.canonical = 32
box.features.hog.cells = 2
box.features.lbp.bins = 59
perturbation.count = 2
";

fn facecsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facecsr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.conf");
    fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = facecsr(&["synth", "--count", "50", "--seed", "7", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 101);
    assert!(fa == fb, "synth output differs between runs");

    let c = tmp.path().join("c");
    assert!(facecsr(&["synth", "--count", "50", "--seed", "8", "--out", path(&c)]).status.success());
    assert!(files(&c) != fa);
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(facecsr(&["synth", "--bogus"]).status.code(), Some(1));
    assert_eq!(facecsr(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(facecsr(&["synth", "--count", "3"]).status.code(), Some(1));

    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "final.stages = 2\nno_such_key = 1\n").unwrap();
    let o = facecsr(&["synth", "--config", path(&conf), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("bad.conf:2") && msg.contains("no_such_key"), "{msg}");

    assert_eq!(facecsr(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = tmp.path().join("o");
    let o = facecsr(&["train-final", "--data", path(&missing), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let data = tmp.path().join("data");
    assert!(facecsr(&["synth", "--count", "2", "--out", path(&data)]).status.success());
    fs::write(data.join("annotations/synth_00001.pts"), "version: 1\nn_points: 68\n{\n1 2\n}\n").unwrap();
    let o = facecsr(&["evaluate", "--pred", path(&data.join("annotations")), "--gt", path(&data), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("synth_00001.pts:4"), "{msg}");
}

#[test]
fn evaluating_ground_truth_against_itself_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("eval");
    assert!(facecsr(&["synth", "--count", "10", "--out", path(&data)]).status.success());
    let o = facecsr(&["evaluate", "--pred", path(&data.join("annotations")), "--gt", path(&data), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("auc.txt")).unwrap();
    assert!(summary.contains("auc all-68 1\n"), "{summary}");
    assert!(summary.contains("auc inner-51 1\n"), "{summary}");
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 21);
    assert!(errors.lines().skip(1).all(|l| l.ends_with(",0")));
    assert!(fs::read_to_string(out.join("ced.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn train_then_localize_with_an_empty_manifest_uses_the_fallback_regressor() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path());
    let conf = path(&conf);
    let train = tmp.path().join("train");
    let test = tmp.path().join("test");
    let models = tmp.path().join("models");
    let pred = tmp.path().join("pred");
    assert!(facecsr(&["synth", "--count", "40", "--seed", "1", "--config", conf, "--out", path(&train)]).status.success());
    assert!(facecsr(&["synth", "--count", "4", "--seed", "2", "--config", conf, "--out", path(&test)]).status.success());
    for cmd in ["train-pose", "train-final", "train-boxes"] {
        let o = facecsr(&[cmd, "--data", path(&train), "--config", conf, "--out", path(&models)]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let log = fs::read_to_string(models.join("train-final.log")).unwrap();
    assert!(log.contains("stage 2 rms_residual"), "{log}");
    for f in ["pose.csr", "final.csr", "box_regression.csr", "refiner_dlib.csr", "refiner_mtcnn.csr"] {
        assert!(models.join(f).is_file(), "{f}");
    }

    let empty = tmp.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let o = facecsr(&[
        "localize",
        "--data",
        path(&test),
        "--models",
        path(&models),
        "--manifest",
        path(&empty),
        "--config",
        conf,
        "--out",
        path(&pred),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let diag = fs::read_to_string(pred.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 5);
    assert!(diag.lines().skip(1).all(|l| l.contains(",ok,fallback-regression,")), "{diag}");
    assert!(pred.join("synth_00003.pts").is_file());

    // Without the fallback model the same images have no face.
    fs::remove_file(models.join("box_regression.csr")).unwrap();
    let o = facecsr(&[
        "localize", "--data", path(&test), "--models", path(&models), "--manifest", path(&empty), "--config", conf,
        "--out", path(&pred),
    ]);
    assert!(o.status.success());
    let diag = fs::read_to_string(pred.join("diagnostics.csv")).unwrap();
    assert!(diag.lines().skip(1).all(|l| l.contains(",no-face,")), "{diag}");

    let o = facecsr(&["localize", "--data", path(&test), "--models", path(&test), "--out", path(&pred)]);
    assert_eq!(o.status.code(), Some(2));
}
