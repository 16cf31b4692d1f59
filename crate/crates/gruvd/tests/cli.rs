//! End-to-end tests of the `gruvd` binary: every subcommand, exit-code
//! contract, and the determinism guarantees users rely on.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn gruvd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gruvd"))
}

/// Fresh scratch directory under the target tree, emptied per run.
fn scratch(name: &str) -> PathBuf {
    let base = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).unwrap();
    base
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("stdout is UTF-8")
}

fn run_err(cmd: &mut Command, expected_code: i32) -> String {
    let out: Output = cmd.output().expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(expected_code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn sorted_file_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn assert_dirs_byte_identical(a: &Path, b: &Path) {
    let names_a = sorted_file_names(a);
    let names_b = sorted_file_names(b);
    assert_eq!(names_a, names_b, "{} vs {}", a.display(), b.display());
    for name in &names_a {
        assert_eq!(
            read_bytes(&a.join(name)),
            read_bytes(&b.join(name)),
            "file {name} differs between {} and {}",
            a.display(),
            b.display()
        );
    }
}

/// Dataset + trained checkpoint shared by the read-only tests below.
struct Fixture {
    data: PathBuf,
    ckpt: PathBuf,
    train_log: String,
}

fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let root = scratch("fixture");
        let data = root.join("data");
        let ckpt = root.join("ckpt");
        run_ok(gruvd().args([
            "synth",
            "--out",
            data.to_str().unwrap(),
            "--kind",
            "drifting_texture",
            "--count",
            "2",
            "--frames",
            "6",
            "--size",
            "24",
            "--seed",
            "11",
            "--noise-a",
            "0",
            "--noise-b",
            "1e-4",
        ]));
        let train_log = run_ok(gruvd().args([
            "train",
            "--dataset",
            data.to_str().unwrap(),
            "--out",
            ckpt.to_str().unwrap(),
            "--max-epochs",
            "6",
            "--patch",
            "12",
            "--seq-len",
            "3",
            "--batch",
            "2",
            "--hidden",
            "4",
            "--blocks",
            "1",
            "--checkpoint-every",
            "0",
        ]));
        Fixture {
            data,
            ckpt,
            train_log,
        }
    })
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[test]
fn synth_is_deterministic_and_writes_one_entry_by_default() {
    let root = scratch("synth-determinism");
    let (a, b) = (root.join("a"), root.join("b"));
    for dir in [&a, &b] {
        run_ok(gruvd().args([
            "synth",
            "--kind",
            "drifting_texture",
            "--frames",
            "8",
            "--size",
            "64",
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ]));
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&read_bytes(&a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 1);
    assert!(a.join("scene_000.gvsq").is_file());
    assert_dirs_byte_identical(&a, &b);
}

#[test]
fn synth_rejects_zero_frames_with_a_config_exit() {
    let root = scratch("synth-zero-frames");
    let stderr = run_err(
        gruvd().args([
            "synth",
            "--frames",
            "0",
            "--out",
            root.join("x").to_str().unwrap(),
        ]),
        2,
    );
    assert!(stderr.contains("frame"), "stderr: {stderr}");
    assert!(
        !root.join("x").exists(),
        "validation must run before anything is written"
    );
}

#[test]
fn synth_defaults_under_the_output_root_env() {
    let root = scratch("synth-env-root");
    run_ok(
        gruvd()
            .args(["synth", "--frames", "2", "--size", "16"])
            .env("GRUVD_OUT_ROOT", &root),
    );
    assert!(root.join("data").join("synth").join("manifest.json").is_file());
}

#[test]
fn unknown_flags_are_rejected() {
    run_err(gruvd().args(["synth", "--bogus-flag", "1"]), 2);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[test]
fn train_reports_missing_dataset_as_an_io_error() {
    let root = scratch("train-missing-dataset");
    run_err(
        gruvd().args([
            "train",
            "--dataset",
            root.join("nowhere").to_str().unwrap(),
            "--out",
            root.join("run").to_str().unwrap(),
            "--max-epochs",
            "1",
        ]),
        3,
    );
}

#[test]
fn train_writes_checkpoint_report_and_per_epoch_lines() {
    let fix = fixture();
    for file in [
        "model.json",
        "train_config.json",
        "state.json",
        "params.gvt",
        "optim.gvt",
        "train_report.csv",
    ] {
        assert!(fix.ckpt.join(file).is_file(), "missing {file}");
    }
    let epoch_lines: Vec<&str> = fix
        .train_log
        .lines()
        .filter(|l| l.starts_with("epoch"))
        .collect();
    assert_eq!(epoch_lines.len(), 6, "one loss line per epoch:\n{}", fix.train_log);
    assert!(epoch_lines[0].contains("loss"), "{}", epoch_lines[0]);
    let csv = std::fs::read_to_string(fix.ckpt.join("train_report.csv")).unwrap();
    assert!(csv.starts_with("epoch,loss,loss_fusion,loss_init,lr,seconds"));
    assert_eq!(csv.lines().count(), 1 + 6);
}

#[test]
fn resumed_training_matches_the_uninterrupted_run_byte_for_byte() {
    let fix = fixture();
    let root = scratch("train-resume");
    let (full, half) = (root.join("full"), root.join("half"));
    let base = |out: &Path, epochs: &str| {
        vec![
            "train".to_string(),
            "--dataset".to_string(),
            fix.data.to_str().unwrap().to_string(),
            "--out".to_string(),
            out.to_str().unwrap().to_string(),
            "--max-epochs".to_string(),
            epochs.to_string(),
            "--patch".to_string(),
            "12".to_string(),
            "--seq-len".to_string(),
            "3".to_string(),
            "--batch".to_string(),
            "2".to_string(),
            "--hidden".to_string(),
            "4".to_string(),
            "--blocks".to_string(),
            "1".to_string(),
            "--checkpoint-every".to_string(),
            "0".to_string(),
        ]
    };
    run_ok(gruvd().args(base(&full, "10")));
    run_ok(gruvd().args(base(&half, "5")));
    // Extending a finished run: only --max-epochs may change.
    run_ok(gruvd().args([
        "train",
        "--dataset",
        fix.data.to_str().unwrap(),
        "--out",
        half.to_str().unwrap(),
        "--resume",
        "--max-epochs",
        "10",
    ]));
    for file in ["params.gvt", "optim.gvt", "state.json"] {
        assert_eq!(
            read_bytes(&full.join(file)),
            read_bytes(&half.join(file)),
            "{file} differs after resume"
        );
    }
}

#[test]
fn resume_rejects_flags_the_checkpoint_already_fixes() {
    let fix = fixture();
    let stderr = run_err(
        gruvd().args([
            "train",
            "--dataset",
            fix.data.to_str().unwrap(),
            "--out",
            fix.ckpt.to_str().unwrap(),
            "--resume",
            "--lr0",
            "0.1",
        ]),
        2,
    );
    assert!(stderr.contains("--lr0"), "stderr: {stderr}");
}

#[test]
fn train_rejects_config_files_with_unknown_keys() {
    let fix = fixture();
    let root = scratch("train-bad-config");
    let config = root.join("settings.json");
    std::fs::write(&config, r#"{"learning_rate": 0.1}"#).unwrap();
    let stderr = run_err(
        gruvd().args([
            "train",
            "--dataset",
            fix.data.to_str().unwrap(),
            "--out",
            root.join("run").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
        ]),
        2,
    );
    assert!(stderr.contains("learning_rate"), "stderr: {stderr}");
}

// ---------------------------------------------------------------------------
// denoise
// ---------------------------------------------------------------------------

#[test]
fn denoise_preserves_frame_count_and_dumps_three_maps_per_frame() {
    let fix = fixture();
    let root = scratch("denoise-gates");
    let out = root.join("frames");
    run_ok(gruvd().args([
        "denoise",
        "--checkpoint",
        fix.ckpt.to_str().unwrap(),
        "--input",
        fix.data.join("scene_000.gvsq").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--noise-a",
        "0",
        "--noise-b",
        "1e-4",
        "--dump-gates",
    ]));
    let frames = sorted_file_names(&out);
    assert_eq!(frames.len(), 6, "input had 6 frames: {frames:?}");
    assert!(frames.iter().all(|f| f.ends_with(".pgm")));
    let gates = sorted_file_names(&out.join("gates"));
    assert_eq!(gates.len(), 3 * 6, "r, f, s per frame: {gates:?}");
    for tag in ["_r.pgm", "_f.pgm", "_s.pgm"] {
        assert_eq!(gates.iter().filter(|g| g.ends_with(tag)).count(), 6);
    }
}

#[test]
fn denoise_rejects_channel_mismatch() {
    let fix = fixture();
    let root = scratch("denoise-channels");
    let color = root.join("color");
    run_ok(gruvd().args([
        "synth",
        "--out",
        color.to_str().unwrap(),
        "--channels",
        "3",
        "--frames",
        "2",
        "--size",
        "16",
    ]));
    let stderr = run_err(
        gruvd().args([
            "denoise",
            "--checkpoint",
            fix.ckpt.to_str().unwrap(),
            "--input",
            color.join("scene_000.gvsq").to_str().unwrap(),
            "--out",
            root.join("out").to_str().unwrap(),
            "--iso",
            "6400",
        ]),
        2,
    );
    assert!(stderr.contains("channel"), "stderr: {stderr}");
}

#[test]
fn denoise_requires_a_noise_source() {
    let fix = fixture();
    let root = scratch("denoise-no-noise");
    let stderr = run_err(
        gruvd().args([
            "denoise",
            "--checkpoint",
            fix.ckpt.to_str().unwrap(),
            "--input",
            fix.data.join("scene_000.gvsq").to_str().unwrap(),
            "--out",
            root.join("out").to_str().unwrap(),
        ]),
        2,
    );
    assert!(stderr.contains("--iso"), "stderr: {stderr}");
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[test]
fn eval_always_includes_noisy_and_accepts_the_s_only_alias() {
    let fix = fixture();
    let root = scratch("eval-variants");
    let csv_path = root.join("report.csv");
    let stdout = run_ok(gruvd().args([
        "eval",
        "--checkpoint",
        fix.ckpt.to_str().unwrap(),
        "--dataset",
        fix.data.to_str().unwrap(),
        "--variants",
        "fused,s_only",
        "--out",
        csv_path.to_str().unwrap(),
    ]));
    for label in ["noisy", "fused", "initial_estimate"] {
        assert!(stdout.contains(label), "missing {label} in:\n{stdout}");
    }
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let variants: BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        variants,
        BTreeSet::from(["noisy", "fused", "initial_estimate"]),
        "exactly three variants"
    );
    assert_eq!(
        csv.lines().filter(|l| l.contains(",all,mean,")).count(),
        3,
        "one overall mean row per variant"
    );
}

#[test]
fn eval_report_is_identical_across_thread_counts() {
    let fix = fixture();
    let root = scratch("eval-threads");
    let mut reports = Vec::new();
    for (name, threads) in [("one.csv", "1"), ("many.csv", "4")] {
        let path = root.join(name);
        run_ok(gruvd().args([
            "eval",
            "--checkpoint",
            fix.ckpt.to_str().unwrap(),
            "--dataset",
            fix.data.to_str().unwrap(),
            "--threads",
            threads,
            "--out",
            path.to_str().unwrap(),
        ]));
        reports.push(read_bytes(&path));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn eval_without_checkpoint_scores_only_the_noisy_floor() {
    let fix = fixture();
    let stdout = run_ok(gruvd().args([
        "eval",
        "--dataset",
        fix.data.to_str().unwrap(),
    ]));
    assert!(stdout.contains("noisy"), "{stdout}");
    assert!(!stdout.contains("fused"), "{stdout}");
}

#[test]
fn eval_rejects_fused_without_a_checkpoint() {
    let fix = fixture();
    run_err(
        gruvd().args([
            "eval",
            "--dataset",
            fix.data.to_str().unwrap(),
            "--variants",
            "fused",
        ]),
        2,
    );
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

#[test]
fn gradcheck_passes_on_the_default_tiny_model() {
    let stdout = run_ok(gruvd().args(["gradcheck"]));
    for param in [
        "reset_gate.head.w",
        "initial_denoise.head.w",
        "update_gate.tail.b",
    ] {
        assert!(stdout.contains(param), "missing {param} in:\n{stdout}");
    }
    assert!(stdout.contains("PASS"), "{stdout}");
}

#[test]
fn gradcheck_exits_nonzero_when_a_gradient_is_corrupted() {
    let stderr = run_err(
        gruvd().args(["gradcheck", "--inject-gradient-fault"]),
        4,
    );
    assert!(stderr.contains("gradient check failed"), "stderr: {stderr}");
}
