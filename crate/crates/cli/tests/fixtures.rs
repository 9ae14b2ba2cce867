//! The bundled transcript must match what the simulated backend records
//! today. Set `AD_AGENT_REGENERATE_FIXTURES=1` to rewrite it.

use std::path::{Path, PathBuf};
use std::process::Command;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

#[test]
fn bundled_vae_cardio_transcript_is_current() {
    let work = tempfile::tempdir().unwrap();
    let fresh = work.path().join("t.jsonl");
    let status = Command::new(env!("CARGO_BIN_EXE_ad-agent"))
        .current_dir(work.path())
        .args(["--llm-backend", "record", "--record-source", "simulated", "--transcript"])
        .arg(&fresh)
        .arg("--data-root")
        .arg(root().join("fixtures/data"))
        .args(["--cache-path", "cache.json", "run", "--python-stubs", "Run VAE on cardio.mat"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stdout));

    let bundled = root().join("fixtures/transcripts/vae_cardio.jsonl");
    let fresh = std::fs::read_to_string(&fresh).unwrap();
    if std::env::var_os("AD_AGENT_REGENERATE_FIXTURES").is_some() {
        std::fs::write(&bundled, &fresh).unwrap();
    }
    let current = std::fs::read_to_string(&bundled).unwrap();
    assert!(current == fresh, "{} is out of date; rerun with AD_AGENT_REGENERATE_FIXTURES=1", bundled.display());
}
