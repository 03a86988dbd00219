use std::path::Path;
use std::process::{Command, Output};

fn sclab(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sclab"));
    cmd.args(args).env_remove("SCLAB_SEED");
    if let Some(s) = seed_env {
        cmd.env("SCLAB_SEED", s);
    }
    cmd.output().unwrap()
}

fn small_generate(out: &Path, extra: &[&str], seed_env: Option<&str>) -> Output {
    let config = out.with_extension("toml");
    std::fs::write(&config, "[scenario]\nsteps = 30\n").unwrap();
    let mut args = vec!["generate", "--config", config.to_str().unwrap(), "-o", out.to_str().unwrap()];
    args.extend(extra);
    sclab(&args, seed_env)
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(sclab(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(sclab(&["train"], None).status.code(), Some(2));
    assert_eq!(sclab(&["generate", "--scenario", "calm"], None).status.code(), Some(2));
}

#[test]
fn invalid_config_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[prodgen]\nn_tier = 0\n").unwrap();
    let out = sclab(&["generate", "--config", config.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    std::fs::write(&config, "no_such_key = 3\n").unwrap();
    let out = sclab(&["generate", "--config", config.to_str().unwrap(), "-o", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_file_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = sclab(&["stats", "--data", missing.to_str().unwrap(), "-o", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn env_seed_matches_flag_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| std::fs::read(dir.path().join(name).join("transactions.csv")).unwrap();
    assert!(small_generate(&dir.path().join("flag"), &["--seed", "5"], None).status.success());
    assert!(small_generate(&dir.path().join("env"), &[], Some("5")).status.success());
    assert!(small_generate(&dir.path().join("both"), &["--seed", "5"], Some("6")).status.success());
    assert!(small_generate(&dir.path().join("other"), &[], Some("6")).status.success());
    assert_eq!(read("flag"), read("env"));
    assert_eq!(read("flag"), read("both"));
    assert_ne!(read("flag"), read("other"));
}

#[test]
fn generate_writes_the_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    assert!(small_generate(&out, &["--scenario", "missing", "--seed", "2"], None).status.success());
    for name in ["prodgraph", "firms.txt", "transactions.csv", "shocks.csv", "dropped_firms.txt", "summary.txt", "generate.manifest.toml"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let manifest = std::fs::read_to_string(out.join("generate.manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"generate\""));
    assert!(manifest.contains("steps = 30"));
}
