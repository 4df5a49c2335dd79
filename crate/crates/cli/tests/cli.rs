//! End-to-end tests of the `milbench` binary: every subcommand, the file
//! formats it emits, exit codes, and rerun determinism at a small scale.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn milbench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_milbench"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("milbench-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(
        &path,
        r#"
sizes = [30, 60]
test_size = 50
seeds = [0, 1]
data_seed = 99

[generator]
m = 12
k = 1
s_low = 5
s_high = 10
r = 3
delta = 1.5

[grid]
lrs = [0.05]
reg_strengths = [0.0]

[[methods]]
pooling = "mean"
epochs = 8
batch_size = 8

[[methods]]
pooling = "abmil"
epochs = 8
batch_size = 8
attention_hidden = 4
"#,
    )
    .unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn generate_writes_deterministic_files() {
    let dir = tmp_dir("generate");
    let config = small_config(&dir);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        run_ok(milbench()
            .args(["generate", "--binary", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out));
    }
    for name in [
        "test.bin",
        "train_seed0.bin",
        "val_seed0.bin",
        "train_seed1.bin",
        "val_seed1.bin",
        "dataset_manifest.json",
    ] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical generations");
    }
    // The manifest records the generator constants.
    let manifest = std::fs::read_to_string(out_a.join("dataset_manifest.json")).unwrap();
    assert!(manifest.contains("\"r\": 3"));
    assert!(manifest.contains("\"m\": 12"));
    // Text encoding loads back identically to binary.
    run_ok(milbench()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("txt")));
    assert!(dir.join("txt/test.txt").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn generate_default_manifest_records_benchmark_constants() {
    let dir = tmp_dir("gen-defaults");
    // Only shrink the expensive knobs; generator constants stay default.
    let config = dir.join("config.toml");
    std::fs::write(&config, "sizes = [10]\ntest_size = 5\nseeds = [0]\n").unwrap();
    run_ok(milbench()
        .args(["generate", "--binary", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out")));
    let manifest = std::fs::read_to_string(dir.join("out/dataset_manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    let g = &parsed["generator"];
    assert_eq!(g["q_pos"], 0.5);
    assert_eq!(g["s_low"], 20);
    assert_eq!(g["s_high"], 60);
    assert_eq!(g["r"], 12);
    assert_eq!(g["delta"], 0.5);
    assert_eq!(g["m"], 768);
    assert_eq!(g["k"], 1);
    assert_eq!(parsed["test_size"], 5);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bayes_near_chance_without_signal() {
    let dir = tmp_dir("bayes-null");
    let config = dir.join("config.toml");
    std::fs::write(
        &config,
        r#"
test_size = 400
seeds = [0]

[generator]
m = 8
k = 1
s_low = 5
s_high = 9
r = 2
delta = 0.0
"#,
    )
    .unwrap();
    let output = run_ok(milbench().args(["bayes", "--config"]).arg(&config));
    let stdout = String::from_utf8_lossy(&output.stdout);
    let auroc: f64 = stdout
        .split("AUROC ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    // Delta = 0 carries no signal; the posterior is exactly the prior for
    // every bag, so AUROC sits at chance.
    assert!((auroc - 0.5).abs() < 0.05, "AUROC {auroc}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bayes_reads_dataset_files_and_appends_rows() {
    let dir = tmp_dir("bayes-файл");
    let config = small_config(&dir);
    run_ok(milbench()
        .args(["generate", "--binary", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("data")));
    let results = dir.join("results.csv");
    let output = run_ok(milbench()
        .args(["bayes", "--config"])
        .arg(&config)
        .arg("--data")
        .arg(dir.join("data/test.bin"))
        .arg("--results")
        .arg(&results));
    let stdout = String::from_utf8_lossy(&output.stdout);
    // delta = 1.5 over R = 3 instances is strong signal.
    let auroc: f64 = stdout
        .split("AUROC ")
        .nth(1)
        .and_then(|s| s.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(auroc > 0.9, "AUROC {auroc}");
    let text = std::fs::read_to_string(&results).unwrap();
    assert!(text.lines().count() == 2);
    assert!(text.lines().nth(1).unwrap().starts_with("bayes,oracle,0,99,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_writes_checkpoint_and_log() {
    let dir = tmp_dir("train");
    let config = small_config(&dir);
    let output = run_ok(milbench()
        .args(["train", "--method", "abmil", "--size", "30", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("run")));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("test AUROC"));
    let ckpt = dir.join("run/abmil_size30_seed0.ckpt");
    assert!(ckpt.exists());
    assert!(dir
        .join("run/abmil_size30_seed0.ckpt.manifest.txt")
        .exists());
    let log = std::fs::read_to_string(dir.join("run/abmil_size30_seed0.train_log.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next().unwrap(), "epoch,train_loss,train_auroc,val_auroc");
    assert!(log.lines().count() >= 2);

    // The checkpoint feeds attention evaluation.
    let output = run_ok(milbench()
        .args(["eval-attention", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--report")
        .arg(dir.join("run/attention")));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("correctness"));
    let csv = std::fs::read_to_string(dir.join("run/attention.csv")).unwrap();
    assert!(csv.starts_with("method,ordering,split,seed,auroc,auprc,attention_correctness"));
    assert!(dir.join("run/attention.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_attention_rejects_plain_mean_checkpoint() {
    let dir = tmp_dir("eval-reject");
    let config = small_config(&dir);
    run_ok(milbench()
        .args(["train", "--method", "mean", "--size", "30", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("run")));
    let status = milbench()
        .args(["eval-attention", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(dir.join("run/mean_size30_seed0.ckpt"))
        .status()
        .unwrap();
    // Mean pooling under embedding-aggregation defines no attention:
    // data/config mismatch exit code.
    assert_eq!(status.code(), Some(3));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_attention_baseline_runs_without_checkpoint() {
    let dir = tmp_dir("eval-baseline");
    let config = small_config(&dir);
    let output = run_ok(milbench()
        .args(["eval-attention", "--baseline", "--rel-width", "0.3", "--config"])
        .arg(&config)
        .arg("--report")
        .arg(dir.join("baseline_report")));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("centered-gaussian"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn centered_gaussian_is_uninformative_when_segments_are_positionally_uniform() {
    // With R = 1 every instance position is equally likely to be the
    // positive one, so position-only attention scores at chance.
    let dir = tmp_dir("eval-uniform");
    let config = dir.join("config.toml");
    std::fs::write(
        &config,
        r#"
test_size = 600
seeds = [0]

[generator]
m = 4
k = 1
s_low = 6
s_high = 12
r = 1
delta = 0.5
"#,
    )
    .unwrap();
    let output = run_ok(milbench()
        .args(["eval-attention", "--baseline", "--config"])
        .arg(&config)
        .arg("--report")
        .arg(dir.join("rep")));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("rep.json")).unwrap()).unwrap();
    let auroc = json["instance"]["instance_auroc"].as_f64().unwrap();
    assert!((auroc - 0.5).abs() < 0.05, "instance AUROC {auroc}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_writes_rows_resumes_and_reports() {
    let dir = tmp_dir("sweep");
    let config = small_config(&dir);
    let out = dir.join("runs");
    let output = run_ok(milbench()
        .args(["sweep", "--threads", "2", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("sweep complete"));

    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    // 2 methods x 2 sizes x 2 seeds = 8 rows plus header.
    assert_eq!(lines.len(), 9);
    assert_eq!(
        lines[0],
        "method,ordering,train_size,seed,test_auroc,test_auprc,wall_time_s,best_lr,best_reg"
    );
    assert!(out.join("manifest.json").exists());
    assert!(out.join("curve_mean.tsv").exists());
    assert!(out.join("curve_abmil.tsv").exists());
    assert!(out.join("checkpoints/mean_size30_seed0.ckpt").exists());

    // Rerunning without --resume refuses to touch existing results.
    let status = milbench()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // Resume is a no-op when everything is done: byte-identical results.
    let before = std::fs::read(out.join("results.csv")).unwrap();
    run_ok(milbench()
        .args(["sweep", "--resume", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out));
    let after = std::fs::read(out.join("results.csv")).unwrap();
    assert_eq!(before, after);

    // Report regenerates curves and the summary from the rows.
    let output = run_ok(milbench()
        .args(["report", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mean"));
    assert!(out.join("summary.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_resume_completes_missing_rows() {
    let dir = tmp_dir("sweep-resume");
    let config = small_config(&dir);
    let full = dir.join("full");
    run_ok(milbench()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&full));
    let full_rows = std::fs::read_to_string(full.join("results.csv")).unwrap();

    // Build a partial directory: same manifest, truncated results.
    let partial = dir.join("partial");
    std::fs::create_dir_all(&partial).unwrap();
    std::fs::copy(full.join("manifest.json"), partial.join("manifest.json")).unwrap();
    let lines: Vec<&str> = full_rows.lines().collect();
    let truncated = format!("{}\n{}\n{}\n", lines[0], lines[1], lines[2]);
    std::fs::write(partial.join("results.csv"), &truncated).unwrap();

    run_ok(milbench()
        .args(["sweep", "--resume", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&partial));
    let resumed = std::fs::read_to_string(partial.join("results.csv")).unwrap();
    assert_eq!(resumed.lines().count(), full_rows.lines().count());
    // Every full row appears (order may differ for the re-run tail).
    let mut a: Vec<&str> = resumed.lines().skip(1).collect();
    let mut b: Vec<&str> = full_rows.lines().skip(1).collect();
    let strip_wall = |line: &&str| {
        let f: Vec<&str> = line.split(',').collect();
        format!("{},{},{},{},{},{},{},{}", f[0], f[1], f[2], f[3], f[4], f[5], f[7], f[8])
    };
    let mut a: Vec<String> = a.iter().map(strip_wall).collect();
    let mut b: Vec<String> = b.iter().map(strip_wall).collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors_exit_one() {
    let status = milbench().arg("no-such-command").status().unwrap();
    assert_eq!(status.code(), Some(1));
    let status = milbench().args(["train", "--method", "mean"]).status().unwrap();
    assert_eq!(status.code(), Some(1)); // missing required --size
}

#[test]
fn io_errors_exit_two() {
    let dir = tmp_dir("io-err");
    let config = small_config(&dir);
    let status = milbench()
        .args(["bayes", "--config"])
        .arg(&config)
        .arg("--data")
        .arg(dir.join("nope.bin"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_mismatch_exits_three() {
    let dir = tmp_dir("mismatch");
    let config = small_config(&dir);
    // Dataset generated with 12 features, evaluated with a 8-feature config.
    run_ok(milbench()
        .args(["generate", "--binary", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("data")));
    let other = dir.join("other.toml");
    std::fs::write(
        &other,
        "[generator]\nm = 8\nk = 1\ns_low = 5\ns_high = 10\nr = 3\n",
    )
    .unwrap();
    let status = milbench()
        .args(["bayes", "--config"])
        .arg(&other)
        .arg("--data")
        .arg(dir.join("data/test.bin"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
    std::fs::remove_dir_all(&dir).ok();
}
