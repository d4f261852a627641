use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ebcomplete"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = "\
batch_size = 2
checkpoint_every = 0
[model]
num_points = 24
latent_dim = 6
encoder_hidden = [8]
decoder_hidden = [8]
energy_hidden = [8]
disc_point_hidden = [8]
disc_head_hidden = [4]
[data]
instances_per_family = 4
heldout_per_family = 1
partial_views = 1
heldout_views = 1
num_points = 24
";

/// Corpus plus a two-iteration checkpoint in `dir`.
fn prepare(dir: &Path) {
    let cfg = dir.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    ok(&["gen-data", "--config", p(&cfg), "--out", p(&dir.join("data"))]);
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&dir.join("data")),
        "--out",
        p(&dir.join("run")),
        "--iterations",
        "2",
    ]);
}

fn some_partial(dir: &Path) -> std::path::PathBuf {
    let held = dir.join("data").join("heldout");
    let mut files: Vec<_> = fs::read_dir(&held)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|f| f.to_string_lossy().contains("partial"))
        .collect();
    files.sort();
    files.remove(0)
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["train"]).status.code(), Some(1));
    assert_eq!(run(&["eval", "--data", "x"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eval", "--identity", "--data", p(&dir.path().join("nowhere"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn bad_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("manifest.json"), "{\"format\": \"nope\"}").unwrap();
    let out = run(&["eval", "--oracle", "--data", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reference_completers_on_a_generated_corpus() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let data = dir.path().join("data");
    let report = dir.path().join("oracle.csv");
    let s = ok(&["eval", "--oracle", "--data", p(&data), "--report", p(&report)]);
    assert!(s.contains("resolved config:"));
    let csv = fs::read_to_string(&report).unwrap();
    let overall = csv.lines().last().unwrap();
    assert!(overall.starts_with("average,"), "{csv}");
    let cd: f64 = overall.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(cd, 0.0);
    ok(&["eval", "--identity", "--data", p(&data)]);
}

#[test]
fn completion_is_reproducible_and_reports_chain_defaults() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let ck = dir.path().join("run").join("final.json");
    let input = some_partial(dir.path());
    let (a, b, c) = (dir.path().join("a.xyz"), dir.path().join("b.xyz"), dir.path().join("c.xyz"));
    let s = ok(&["complete", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(&a)]);
    assert!(s.contains("\"steps\": 8"), "{s}");
    assert!(s.contains("\"step_size_sq\": 0.05"), "{s}");
    ok(&["complete", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(&b)]);
    ok(&["complete", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(&c), "--seed", "3"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 24);
}

#[test]
fn uncertainty_writes_four_columns_and_needs_two_runs() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let ck = dir.path().join("run").join("final.json");
    let input = some_partial(dir.path());
    let out = dir.path().join("u.xyz");
    ok(&["uncertainty", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(&out), "--runs", "3"]);
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 4));

    let bad = run(&["uncertainty", "--checkpoint", p(&ck), "--in", p(&input), "--out", p(&out), "--runs", "1"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn training_is_deterministic_and_zero_iterations_work() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let cfg = dir.path().join("small.toml");
    let data = dir.path().join("data");
    let again = dir.path().join("again");
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&again), "--iterations", "2"]);
    assert_eq!(
        fs::read(dir.path().join("run").join("final.json")).unwrap(),
        fs::read(again.join("final.json")).unwrap()
    );
    let zero = dir.path().join("zero");
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&zero), "--iterations", "0"]);
    assert!(zero.join("final.json").exists());
    let log = fs::read_to_string(zero.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[test]
fn gradcheck_passes_and_catches_an_injected_fault() {
    let s = ok(&["gradcheck", "--instances", "4"]);
    assert!(s.contains("cases passed"));
    let out = run(&["gradcheck", "--instances", "4", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
