use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ad_agent(cwd: &Path, args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ad-agent"));
    cmd.current_dir(cwd).arg("--data-root").arg(root().join("fixtures/data")).args(["--cache-path", "cache.json"]).args(args);
    cmd
}

fn text(out: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
}

#[test]
fn bench_then_select_eval_then_refresh() {
    let work = tempfile::tempdir().unwrap();
    let out = ad_agent(
        work.path(),
        &["--llm-backend", "simulated", "bench", "--library", "pyod", "--datasets", "cardio", "--evaluate", "--parallel", "2"],
    )
    .output()
    .unwrap();
    assert!(out.status.success(), "{}", text(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("pyod: 10 of 10 pairs succeeded (100.0%)"), "{stdout}");
    let csv = work.path().join("benchmark/benchmark_pyod.csv");
    assert!(csv.is_file() && work.path().join("benchmark/benchmark_pyod.json").is_file());
    assert!(work.path().join("benchmark/logs/VAE_cardio.log").is_file());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 11);

    let out =
        ad_agent(work.path(), &["--llm-backend", "simulated", "select-eval", "--library", "pyod", "--metrics", csv.to_str().unwrap()])
            .output()
            .unwrap();
    assert!(out.status.success(), "{}", text(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("VAE, VAE, AE1SVM"), "{stdout}");
    assert!(work.path().join("selection_pyod.json").is_file());

    let out = ad_agent(work.path(), &["--llm-backend", "simulated", "refresh-cache", "--all"]).output().unwrap();
    assert!(out.status.success(), "{}", text(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("10 of 10 entries refreshed, 10 web searches"));
}

#[test]
fn instruction_from_stdin() {
    let work = tempfile::tempdir().unwrap();
    let mut child =
        ad_agent(work.path(), &["--llm-backend", "simulated", "run"]).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(b"Run VAE on cardio.mat\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert!(work.path().join("generated_scripts/VAE_cardio.py").is_file());
}

#[test]
fn failed_session_exits_one_and_bad_arguments_exit_two() {
    let work = tempfile::tempdir().unwrap();
    let out = ad_agent(work.path(), &["--llm-backend", "simulated", "run", "Run VAE on missing.mat"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("=== [Processor] Failed: dataset not found"));

    let out = ad_agent(work.path(), &["--llm-backend", "replay", "run", "Run VAE on cardio.mat"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("--transcript is required"));

    let out = ad_agent(work.path(), &["--llm-backend", "simulated", "bench", "--library", "pyod", "--models", "GAAN"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("GAAN is not in the pyod roster"), "{}", text(&out));
}
