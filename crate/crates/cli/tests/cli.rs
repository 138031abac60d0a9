use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use docbin::dataprep::read_manifest;
use docbin::io::{read_image, read_mask};
use docbin::metrics::evaluate;

const BIN: &str = env!("CARGO_BIN_EXE_docbin");

fn docbin(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn docbin")
}

fn ok(args: &[&str]) -> String {
    let out = docbin(args);
    assert!(
        out.status.success(),
        "docbin {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    docbin(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A network and schedule small enough to train in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.json");
    let json = r#"{
        "train": {
            "arch": {"stem_width": 4, "stages": [4], "instance_norm": true, "critic_widths": [4]},
            "optim": {"batch_size": 4, "epochs_local": 1, "epochs_global": 1, "seed": 3},
            "patch": 16
        },
        "fusion": {"r": 16, "patch": 16, "stride": 16}
    }"#;
    std::fs::write(&path, json).unwrap();
    path
}

fn synth(out: &Path, count: usize, w: usize, h: usize, extra: &[&str]) {
    let (c, w, h) = (count.to_string(), w.to_string(), h.to_string());
    let mut args = vec!["synth", "--out", s(out), "--count", &c, "--width", &w, "--height", &h];
    args.extend_from_slice(extra);
    ok(&args);
}

fn read_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn synth_zero_count_writes_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 0, 32, 32, &[]);
    assert!(read_manifest(&dir.path().join("manifest.json")).unwrap().is_empty());
}

#[test]
fn synth_is_deterministic_and_decodable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    synth(&a, 3, 40, 24, &["--seed", "5"]);
    synth(&b, 3, 40, 24, &["--seed", "5"]);
    synth(&c, 3, 40, 24, &["--seed", "6"]);
    assert_eq!(read_bytes(&a), read_bytes(&b));
    assert_ne!(read_bytes(&a), read_bytes(&c));
    let pairs = read_manifest(&a.join("manifest.json")).unwrap();
    assert_eq!(pairs.len(), 3);
    for p in &pairs {
        let img = read_image(&p.input_path).unwrap();
        let gt = read_mask(&p.gt_path).unwrap();
        assert_eq!(img.dims(), (40, 24));
        assert_eq!(gt.dims(), img.dims());
        assert_eq!(img.channels(), 3);
    }
}

#[test]
fn train_binarize_and_skip_global() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    synth(&data, 3, 32, 32, &[]);
    let manifest = data.join("manifest.json");
    let model = dir.path().join("model");
    let started = std::time::Instant::now();
    ok(&["train", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&model)]);
    assert!(started.elapsed().as_secs() < 120);
    for f in [
        "config.json",
        "stage1/g_r.params",
        "stage1/d.adam",
        "stage2/local/g.params",
        "stage2/global/g.params",
        "stage1_losses.csv",
        "stage2_local_losses.csv",
        "stage2_global_losses.csv",
    ] {
        assert!(model.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(model.join("stage1_losses.csv")).unwrap();
    assert!(header.starts_with("step,epoch,net,l_d,l_g,bce,gp\n"));

    let skip = dir.path().join("skip");
    ok(&["train", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&skip), "--skip-global"]);
    assert!(skip.join("stage2/local/g.params").exists());
    assert!(!skip.join("stage2/global").exists());
    assert!(!skip.join("stage2_global_losses.csv").exists());

    // pages of three shapes: square, aspect 5, aspect 7
    let pages = dir.path().join("pages");
    for (w, h) in [(32, 32), (80, 16), (16, 112)] {
        let d = pages.join(format!("{w}x{h}"));
        synth(&d, 1, w, h, &[]);
        std::fs::rename(d.join("doc0000.png"), pages.join(format!("p{w}x{h}.png"))).unwrap();
    }
    let inputs: Vec<PathBuf> = ["p32x32", "p80x16", "p16x112"].iter().map(|n| pages.join(format!("{n}.png"))).collect();
    let out = dir.path().join("masks");
    let mut args = vec!["binarize", "--model", s(&model), "--out", s(&out), "--debug"];
    args.extend(inputs.iter().map(|p| s(p)));
    let log = ok(&args);
    assert!(log.contains("p32x32: 32x32 global=direct_resize"), "{log}");
    assert!(log.contains("p80x16: 80x16 global=pad_then_resize"), "{log}");
    assert!(log.contains("p16x112: 16x112 global=skip"), "{log}");
    for (name, dims) in [("p32x32", (32, 32)), ("p80x16", (80, 16)), ("p16x112", (16, 112))] {
        assert_eq!(read_mask(out.join(format!("{name}.png"))).unwrap().dims(), dims);
        assert!(out.join(format!("{name}_enhanced.png")).exists());
        assert!(out.join(format!("{name}_local.png")).exists());
    }
    assert!(out.join("p32x32_global.png").exists());
    assert!(!out.join("p16x112_global.png").exists());

    // the local-only model never consults a global network
    let out_skip = dir.path().join("masks_skip");
    let log = ok(&["binarize", "--model", s(&skip), "--out", s(&out_skip), "--debug", s(&inputs[0])]);
    assert!(log.contains("p32x32"));
    assert_eq!(
        std::fs::read(out_skip.join("p32x32.png")).unwrap(),
        std::fs::read(out_skip.join("p32x32_local.png")).unwrap()
    );

    // repeated inference is byte-identical
    let again = dir.path().join("masks_again");
    let mut args = vec!["binarize", "--model", s(&model), "--out", s(&again), "--debug"];
    args.extend(inputs.iter().map(|p| s(p)));
    ok(&args);
    assert_eq!(read_bytes(&out), read_bytes(&again));

    // a directory without checkpoints is a data error
    assert_eq!(code(&["binarize", "--model", s(&data), "--out", s(&out), s(&inputs[0])]), 2);
}

#[test]
fn training_is_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    synth(&data, 2, 32, 32, &[]);
    let manifest = data.join("manifest.json");
    let run = |name: &str, epochs: &str| {
        let out = dir.path().join(name);
        ok(&["train", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&out), "--epochs-local", epochs]);
        out
    };
    let a = run("a", "2");
    let b = run("b", "2");
    for f in ["stage1_losses.csv", "stage2_local_losses.csv", "stage2_global_losses.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_bytes(&a.join("stage1")), read_bytes(&b.join("stage1")));

    // one epoch, then continue to two in the same directory
    let c = run("c", "1");
    run("c", "2");
    assert_eq!(
        std::fs::read(a.join("stage1_losses.csv")).unwrap(),
        std::fs::read(c.join("stage1_losses.csv")).unwrap()
    );
    assert_eq!(read_bytes(&a.join("stage1")), read_bytes(&c.join("stage1")));
}

#[test]
fn evaluate_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 4, 32, 24, &[]);
    let manifest = data.join("manifest.json");
    let pred = dir.path().join("pred");
    std::fs::create_dir(&pred).unwrap();
    for p in read_manifest(&manifest).unwrap() {
        std::fs::copy(&p.gt_path, pred.join(format!("{}.png", p.id))).unwrap();
    }
    let report = dir.path().join("report");
    ok(&["evaluate", "--manifest", s(&manifest), "--pred", s(&pred), "--out", s(&report)]);
    let rows = csv_rows(&report.join("report.csv"));
    assert_eq!(rows[0].join(","), "id,fm,pfm,psnr,drd,lev");
    assert_eq!(rows.len(), 1 + 4 + 1);
    for row in &rows[1..] {
        assert_eq!(row[1], "100");
        assert_eq!(row[2], "100");
        assert_eq!(row[3], "inf");
        assert_eq!(row[4], "0");
        assert_eq!(row[5], "");
    }
    assert_eq!(rows[5][0], "mean");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["images"].as_array().unwrap().len(), 4);
}

#[test]
fn evaluate_means_and_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 3, 32, 24, &[]);
    let manifest = data.join("manifest.json");
    let pairs = read_manifest(&manifest).unwrap();
    let pred = dir.path().join("pred");
    ok(&["baseline", "--method", "otsu", "--out", s(&pred), s(&pairs[0].input_path), s(&pairs[1].input_path), s(&pairs[2].input_path)]);
    let transcripts = dir.path().join("t.json");
    std::fs::write(&transcripts, r#"{"doc0001": {"pred": "kitten", "gt": "sitting"}}"#).unwrap();
    let report = dir.path().join("report");
    ok(&["evaluate", "--manifest", s(&manifest), "--pred", s(&pred), "--out", s(&report), "--transcripts", s(&transcripts)]);
    let rows = csv_rows(&report.join("report.csv"));
    assert_eq!(rows.len(), 5);

    // hand average of independently computed per-image scores
    let mut fm = Vec::new();
    for (p, row) in pairs.iter().zip(&rows[1..4]) {
        assert_eq!(row[0], p.id);
        let r = evaluate(&read_mask(pred.join(format!("{}.png", p.id))).unwrap(), &read_mask(&p.gt_path).unwrap()).unwrap();
        assert_eq!(row[1].parse::<f64>().unwrap(), r.fm);
        fm.push(r.fm);
    }
    let mean: f64 = fm.iter().sum::<f64>() / 3.0;
    assert!((rows[4][1].parse::<f64>().unwrap() - mean).abs() < 1e-9);
    assert!((rows[2][5].parse::<f64>().unwrap() - 57.142857).abs() < 1e-6);
    assert_eq!(rows[1][5], "");

    // an id without a prediction is a data error
    std::fs::remove_file(pred.join("doc0002.png")).unwrap();
    assert_eq!(code(&["evaluate", "--manifest", s(&manifest), "--pred", s(&pred), "--out", s(&report)]), 2);
}

#[test]
fn five_fold_protocol_writes_fold_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let data = dir.path().join("data");
    synth(&data, 5, 32, 32, &[]);
    let out = dir.path().join("cv");
    ok(&["evaluate", "--config", s(&cfg), "--manifest", s(&data.join("manifest.json")), "--out", s(&out), "--folds", "5"]);
    let folds = csv_rows(&out.join("folds.csv"));
    assert_eq!(folds[0].join(","), "fold,images,fm,pfm,psnr,drd");
    assert_eq!(folds.len(), 1 + 5 + 1);
    assert!(folds[1..6].iter().all(|r| r[1] == "1"));
    assert_eq!(folds[6][0], "mean");
    assert_eq!(csv_rows(&out.join("report.csv")).len(), 5 + 2);
    for f in 0..5 {
        assert!(out.join(format!("fold{f}/report.csv")).exists());
        assert!(out.join(format!("fold{f}/model/stage1/g_gray.params")).exists());
    }
}

#[test]
fn otsu_baseline_on_noiseless_pages() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 3, 48, 32, &["--noiseless"]);
    let pairs = read_manifest(&data.join("manifest.json")).unwrap();
    let inputs: Vec<&str> = pairs.iter().map(|p| s(&p.input_path)).collect();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["baseline", "--method", "otsu", "--out", s(&out)];
        args.extend(&inputs);
        ok(&args);
        out
    };
    let a = run("a");
    for p in &pairs {
        let pred = read_mask(a.join(format!("{}.png", p.id))).unwrap();
        assert_eq!(evaluate(&pred, &read_mask(&p.gt_path).unwrap()).unwrap().fm, 100.0);
    }
    assert_eq!(read_bytes(&a), read_bytes(&run("b")));
    for method in ["niblack", "sauvola"] {
        ok(&["baseline", "--method", method, "--out", s(&dir.path().join(method)), inputs[0]]);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, 2, 32, 32, &[]);
    let manifest = data.join("manifest.json");
    let img = data.join("doc0000.png");

    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["baseline", "--method", "median", "--out", s(dir.path()), s(&img)]), 1);
    assert_eq!(code(&["train", "--manifest", s(&dir.path().join("missing.json")), "--out", s(dir.path())]), 1);
    assert_eq!(code(&["train", "--manifest", s(&manifest), "--out", s(dir.path()), "--omega", "1.5"]), 1);
    assert_eq!(code(&["evaluate", "--manifest", s(&manifest), "--out", s(dir.path())]), 1);

    assert_eq!(code(&["baseline", "--method", "otsu", "--out", s(dir.path()), s(&dir.path().join("none.png"))]), 2);
    std::fs::write(dir.path().join("broken.json"), "[{").unwrap();
    assert_eq!(code(&["train", "--manifest", s(&dir.path().join("broken.json")), "--out", s(dir.path())]), 2);

    let cfg = tiny_config(dir.path());
    let out = docbin(&[
        "train", "--config", s(&cfg), "--manifest", s(&manifest), "--out", s(&dir.path().join("nan")),
        "--learning-rate", "1e30",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}
