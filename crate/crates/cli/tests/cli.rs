//! End-to-end checks of the `lst2d` binary via real process invocations.
//! Workflow tests need the MNIST files and skip loudly when they are absent.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lst2d_core::{init_params, save_model, ModelSpec};

fn lst2d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lst2d"))
        .args(args)
        .output()
        .expect("failed to launch lst2d")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// MNIST location: `LST2D_DATA_DIR` env var, falling back to the workspace
/// `data/` directory.
fn data_dir() -> Option<PathBuf> {
    let dir = match std::env::var_os("LST2D_DATA_DIR") {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"),
    };
    dir.join("train-images-idx3-ubyte").exists().then_some(dir)
}

fn skip_no_data(test: &str) {
    eprintln!("SKIP {test}: MNIST files not found (set LST2D_DATA_DIR or populate data/)");
}

#[test]
fn paramcount_reports_model_sizes() {
    for (model, expected) in [
        ("lst1", "9474"),
        ("lst2", "11098"),
        ("reslst3", "12722"),
        ("ffnn:784-12-10", "9550"),
        ("ffnn:784-40-40-40-10", "35090"),
    ] {
        let out = lst2d(&["paramcount", "--model", model]);
        assert!(out.status.success());
        assert_eq!(stdout_of(&out).trim(), expected, "model {model}");
    }
}

#[test]
fn zero_epochs_is_a_usage_error() {
    let out = lst2d(&["train", "--model", "lst1", "--epochs", "0"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("--epochs"));
}

#[test]
fn unknown_model_name_fails() {
    let out = lst2d(&["paramcount", "--model", "lst9"]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("unknown model"));
}

#[test]
fn corrupted_model_file_reports_checksum_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.lst");
    let spec = ModelSpec::lst1();
    let params = init_params::<f64>(&spec, 3).unwrap();
    save_model(&spec, &params, &path).unwrap();

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[1000] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();

    let out = lst2d(&["eval", "--model-path", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        stderr_of(&out).contains("checksum mismatch"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn quantize_rejects_models_outside_the_datapath() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two-block.lst");
    let spec = ModelSpec::lst2();
    let params = init_params::<f64>(&spec, 4).unwrap();
    save_model(&spec, &params, &path).unwrap();

    let out = lst2d(&["quantize", "--model-path", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        stderr_of(&out).contains("unsupported spec"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn predict_rejects_wrong_size_raw_input() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("short.raw");
    std::fs::write(&img, [0u8; 100]).unwrap();
    let model = dir.path().join("m.lst");
    let spec = ModelSpec::lst1();
    save_model(&spec, &init_params::<f64>(&spec, 5).unwrap(), &model).unwrap();

    let out = lst2d(&[
        "predict",
        "--model-path",
        model.to_str().unwrap(),
        img.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("784"));
}

#[test]
fn gradcheck_reports_max_relative_error() {
    let out = lst2d(&["gradcheck", "--model", "ffnn:16-10", "--seed", "11"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("max relative error"));
}

#[test]
fn end_to_end_workflow_train_eval_quantize_export_predict() {
    let Some(data) = data_dir() else {
        skip_no_data("end_to_end_workflow_train_eval_quantize_export_predict");
        return;
    };
    let data = data.to_str().unwrap().to_owned();
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().to_str().unwrap().to_owned();

    let out = lst2d(&[
        "train",
        "--model",
        "lst1",
        "--epochs",
        "1",
        "--data-dir",
        &data,
        "--out-dir",
        &run,
    ]);
    assert!(out.status.success(), "train: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("final test accuracy"));
    let model_path = dir.path().join("lst1.lst");
    let csv_path = dir.path().join("lst1_history.csv");
    assert!(model_path.exists() && csv_path.exists());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("epoch,mean_train_loss,test_accuracy\n"));
    assert_eq!(csv.lines().count(), 2); // header + 1 epoch

    let out = lst2d(&[
        "eval",
        "--model-path",
        model_path.to_str().unwrap(),
        "--data-dir",
        &data,
    ]);
    assert!(out.status.success(), "eval: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(
        text.contains("test accuracy:") && text.contains("params: 9474"),
        "{text}"
    );

    let out = lst2d(&[
        "quantize",
        "--model-path",
        model_path.to_str().unwrap(),
        "--data-dir",
        &data,
        "--out-dir",
        &run,
    ]);
    assert!(out.status.success(), "quantize: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("delta:"));
    let q_path = dir.path().join("lst1_q57.lsq");
    assert!(q_path.exists());

    let out = lst2d(&[
        "eval",
        "--model-path",
        q_path.to_str().unwrap(),
        "--data-dir",
        &data,
        "--quantized",
    ]);
    assert!(out.status.success(), "quantized eval: {}", stderr_of(&out));
    assert!(stdout_of(&out).contains("params: 9474"));

    let rom = dir.path().join("rom");
    let out = lst2d(&[
        "export-rom",
        "--model-path",
        q_path.to_str().unwrap(),
        "--data-dir",
        &data,
        "--out-dir",
        rom.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "export-rom: {}", stderr_of(&out));
    let hex_files = std::fs::read_dir(&rom)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "hex")
        })
        .count();
    assert_eq!(hex_files, 66);
    let vectors = std::fs::read_to_string(rom.join("test_vectors.txt")).unwrap();
    assert_eq!(vectors.lines().count(), 100);
    // 784 input words + 10 output words + 1 digit per line
    assert!(vectors.lines().all(|l| l.split_whitespace().count() == 795));

    // classify the first test image both ways; it is a 7 in the official set
    let image_bytes = std::fs::read(Path::new(&data).join("t10k-images-idx3-ubyte")).unwrap();
    let raw = dir.path().join("digit.raw");
    std::fs::write(&raw, &image_bytes[16..16 + 784]).unwrap();
    let out = lst2d(&[
        "predict",
        "--model-path",
        model_path.to_str().unwrap(),
        raw.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "predict: {}", stderr_of(&out));
    let float_digit = stdout_of(&out).trim().to_owned();
    let out = lst2d(&[
        "predict",
        "--model-path",
        q_path.to_str().unwrap(),
        "--quantized",
        raw.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "quantized predict: {}",
        stderr_of(&out)
    );
    assert_eq!(stdout_of(&out).trim(), float_digit);
    assert_eq!(float_digit, "7");
}

#[test]
fn same_seed_training_writes_byte_identical_models() {
    let Some(data) = data_dir() else {
        skip_no_data("same_seed_training_writes_byte_identical_models");
        return;
    };
    let data = data.to_str().unwrap().to_owned();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = lst2d(&[
            "train",
            "--model",
            "lst1",
            "--epochs",
            "1",
            "--seed",
            "21",
            "--data-dir",
            &data,
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "train: {}", stderr_of(&out));
    }
    let a = std::fs::read(dir_a.path().join("lst1.lst")).unwrap();
    let b = std::fs::read(dir_b.path().join("lst1.lst")).unwrap();
    assert_eq!(a, b);
}
