//! Command-line contract tests: help surfaces, exit codes, output
//! determinism, and the ablation sweep.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_spectformer")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spectformer_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Micro training budget reused across CLI smoke tests.
fn micro_sets() -> Vec<&'static str> {
    vec![
        "--set",
        "data.n_train=128",
        "--set",
        "data.n_test=64",
        "--set",
        "train.total_epochs=2",
        "--set",
        "train.warmup_epochs=1",
        "--set",
        "train.batch_size=32",
    ]
}

#[test]
fn help_exits_zero_for_every_command() {
    for cmd in ["train", "eval", "count", "ablate", "dump-filters", "predict"] {
        let out = run(&[cmd, "--help"]);
        assert!(out.status.success(), "{cmd} --help failed");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--help"), "{cmd} help missing flags");
    }
    assert!(run(&["--help"]).status.success());
}

#[test]
fn invalid_alpha_exits_two_with_message() {
    let out = run(&[
        "train",
        "--model",
        "spectformer-tiny-toy",
        "--data",
        "synth",
        "--set",
        "model.alpha=99",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha out of range"), "{err}");
}

#[test]
fn unknown_config_name_exits_two() {
    let out = run(&["count", "--model", "spectformer-xxl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("valid names"));
}

#[test]
fn count_all_lists_seven_published_configs() {
    let out = run(&["count", "--all"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("spectformer-"))
        .collect();
    assert_eq!(rows.len(), 7, "{text}");
}

#[test]
fn count_json_and_table_carry_identical_numbers() {
    let json_out = run(&["count", "--all", "--format", "json"]);
    assert!(json_out.status.success());
    let entries: serde_json::Value =
        serde_json::from_slice(&json_out.stdout).expect("count --format json must be valid JSON");
    let table_out = run(&["count", "--all"]);
    let table = String::from_utf8_lossy(&table_out.stdout);
    for entry in entries.as_array().unwrap() {
        let name = entry["name"].as_str().unwrap();
        let params = entry["params"].as_u64().unwrap();
        let flops = entry["flops"].as_u64().unwrap();
        let row = table
            .lines()
            .find(|l| l.starts_with(name))
            .unwrap_or_else(|| panic!("{name} missing from table"));
        assert!(row.contains(&params.to_string()), "{name}: params differ");
        assert!(row.contains(&flops.to_string()), "{name}: flops differ");
    }
}

#[test]
fn train_writes_deterministic_artifacts_and_eval_reads_them() {
    let dir = temp_dir("train_artifacts");
    let mut args = vec![
        "train",
        "--model",
        "spectformer-tiny-toy",
        "--data",
        "synth",
        "--seed",
        "7",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend(micro_sets());
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("summary.json").exists());
    assert!(dir.join("report.jsonl").exists());
    assert!(dir.join("ckpt-final.spfm").exists());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["final_top1"].is_number());

    // one epoch record per line
    let report = std::fs::read_to_string(dir.join("report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 2);

    // eval on the written checkpoint agrees with the summary
    let ck = dir.join("ckpt-final.spfm");
    let eval_out = run(&[
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        "synth",
        "--seed",
        "7",
        "--set",
        "data.n_train=128",
        "--set",
        "data.n_test=64",
    ]);
    assert!(eval_out.status.success(), "{}", String::from_utf8_lossy(&eval_out.stderr));
    let eval: serde_json::Value = serde_json::from_slice(&eval_out.stdout).unwrap();
    let diff = (eval["top1"].as_f64().unwrap() - summary["final_top1"].as_f64().unwrap()).abs();
    assert!(diff < 1e-9, "eval/summary top1 mismatch {diff}");
}

#[test]
fn ablate_sweep_is_deterministic_and_params_decrease_with_alpha() {
    let run_sweep = |tag: &str| -> (String, serde_json::Value) {
        let dir = temp_dir(tag);
        let mut args = vec![
            "ablate",
            "--model",
            "spectformer-tiny-toy",
            "--data",
            "synth",
            "--seed",
            "3",
            "--alphas",
            "0,2,4",
            "--inverse",
            "--out",
            dir.to_str().unwrap(),
        ];
        args.extend(micro_sets());
        let out = run(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let json = std::fs::read(dir.join("ablate.json")).unwrap();
        (
            String::from_utf8_lossy(&out.stdout).to_string(),
            serde_json::from_slice(&json).unwrap(),
        )
    };
    let (stdout_a, rows_a) = run_sweep("ablate_a");
    let (stdout_b, rows_b) = run_sweep("ablate_b");
    let table = |s: &str| -> String {
        s.lines().filter(|l| !l.starts_with("wrote ")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(table(&stdout_a), table(&stdout_b), "ablate table must be reproducible");
    assert_eq!(rows_a, rows_b);

    // params strictly decrease as alpha grows (spectral-first rows)
    let rows = rows_a.as_array().unwrap();
    let mut by_alpha: Vec<(u64, u64)> = rows
        .iter()
        .filter(|r| r["order"] == "spectral-first")
        .map(|r| (r["alpha"].as_u64().unwrap(), r["params"].as_u64().unwrap()))
        .collect();
    by_alpha.sort();
    assert_eq!(by_alpha.len(), 3);
    assert!(by_alpha[0].1 > by_alpha[1].1 && by_alpha[1].1 > by_alpha[2].1);

    // the inverse-ordering row is present and parameter-neutral
    let inverse: Vec<_> = rows
        .iter()
        .filter(|r| r["order"] == "attention-first")
        .collect();
    assert_eq!(inverse.len(), 1);
    let base_alpha = inverse[0]["alpha"].as_u64().unwrap();
    let matching = by_alpha.iter().find(|(a, _)| *a == base_alpha).unwrap();
    assert_eq!(inverse[0]["params"].as_u64().unwrap(), matching.1);
}

#[test]
fn predict_reports_capped_descending_probabilities() {
    // train a 2-class micro model, then classify a crafted PGM
    let dir = temp_dir("predict");
    let mut args = vec![
        "train",
        "--model",
        "spectformer-tiny-toy",
        "--data",
        "synth",
        "--seed",
        "2",
        "--out",
        dir.to_str().unwrap(),
        "--set",
        "model.num_classes=2",
        "--set",
        "data.classes=2",
    ];
    args.extend(micro_sets());
    assert!(run(&args).status.success());

    // a vertical-stripe digit-free image, mid-gray background
    let img_path = dir.join("probe.pgm");
    let mut pixels = vec![128u8; 32 * 32];
    for y in 0..32 {
        for x in 0..32 {
            if x % 2 == 0 {
                pixels[y * 32 + x] = 220;
            }
        }
    }
    spectformer_core::io::pnm::write_pgm(&img_path, 32, 32, &pixels).unwrap();

    let out = run(&[
        "predict",
        "--checkpoint",
        dir.join("ckpt-final.spfm").to_str().unwrap(),
        "--image",
        img_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let probs: Vec<f64> = text
        .lines()
        .filter_map(|l| l.rsplit_once(": ").map(|(_, p)| p.parse::<f64>().unwrap()))
        .collect();
    // a 2-class head caps the report at 2 entries, in nonincreasing order
    assert_eq!(probs.len(), 2, "{text}");
    assert!(probs[0] >= probs[1]);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn commands_do_not_mutate_input_files() {
    let dir = temp_dir("immutability");
    let mut args = vec![
        "train",
        "--model",
        "spectformer-tiny-toy",
        "--data",
        "synth",
        "--seed",
        "4",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend(micro_sets());
    assert!(run(&args).status.success());
    let ck = dir.join("ckpt-final.spfm");
    let before = std::fs::read(&ck).unwrap();
    let filters = temp_dir("immutability_filters");
    assert!(run(&[
        "dump-filters",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        filters.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(before, std::fs::read(&ck).unwrap());
}
