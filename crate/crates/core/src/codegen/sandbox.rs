//! Isolated execution of generated scripts.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::preamble::{DATA_OVERRIDE_ENV, PARAMS_OVERRIDE_ENV, RESULT_PATH_ENV, TEST_OVERRIDE_ENV, TRAIN_OVERRIDE_ENV};

/// Extra time a timed-out child gets between the kill and reaping.
pub const KILL_GRACE: Duration = Duration::from_secs(5);
pub const DEFAULT_INTERPRETER: &str = "python3";
pub const DEFAULT_DRY_RUN_TIMEOUT: Duration = Duration::from_secs(300);

/// Placeholder for the sandbox directory in captured output.
pub const SANDBOX_PLACEHOLDER: &str = "<sandbox>";

const POLL: Duration = Duration::from_millis(10);

/// Interpreter command line; extra words become leading arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpreter {
    pub program: String,
    pub args: Vec<String>,
}

impl Interpreter {
    pub fn parse(command: &str) -> Option<Self> {
        let mut words = command.split_whitespace().map(str::to_string);
        let program = words.next()?;
        Some(Interpreter { program, args: words.collect() })
    }
}

impl Default for Interpreter {
    fn default() -> Self {
        Interpreter::parse(DEFAULT_INTERPRETER).expect("non-empty")
    }
}

#[derive(Debug, Clone)]
pub struct SandboxConfig {
    pub interpreter: Interpreter,
    pub timeout: Duration,
    /// Set on every child, e.g. `PYTHONPATH`.
    pub env: Vec<(String, String)>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig { interpreter: Interpreter::default(), timeout: DEFAULT_DRY_RUN_TIMEOUT, env: Vec::new() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxFailure {
    #[error("could not launch `{program}`: {source}")]
    Launch {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sandbox setup failed: {0}")]
    Setup(#[from] std::io::Error),
}

/// Contents of the result file a script writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptResult {
    pub scores: Vec<f64>,
    pub labels_pred: Vec<u8>,
    #[serde(default)]
    pub metrics: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Code(i32),
    Signal,
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub exit: ExitKind,
    pub stdout: String,
    /// Sandbox paths replaced by [`SANDBOX_PLACEHOLDER`].
    pub stderr: String,
    pub duration: f64,
    /// Parsed result file, or why it is unusable.
    pub result: Result<ScriptResult, String>,
}

impl Execution {
    pub fn succeeded(&self) -> bool {
        self.exit == ExitKind::Code(0) && self.result.is_ok()
    }
}

/// Where the script reads its data.
#[derive(Debug, Clone)]
pub enum DataBinding {
    /// One path for both train and test (dry runs).
    Override(PathBuf),
    /// Separate real paths (final runs).
    Real { train: PathBuf, test: Option<PathBuf> },
}

fn absolute(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    std::env::current_dir().map_or_else(|_| path.to_path_buf(), |cwd| cwd.join(path))
}

fn read_pipe<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        buf
    })
}

#[cfg(unix)]
fn isolate(command: &mut Command) {
    use std::os::unix::process::CommandExt;
    command.process_group(0);
}

#[cfg(not(unix))]
fn isolate(_command: &mut Command) {}

#[cfg(unix)]
fn kill_tree(child: &mut Child) {
    // The child leads its own process group, so this reaches grandchildren.
    let pgid = child.id() as libc::pid_t;
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut Child) {
    let _ = child.kill();
}

fn wait_bounded(child: &mut Child, limit: Duration) -> std::io::Result<Option<ExitStatus>> {
    let deadline = Instant::now() + limit;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if Instant::now() >= deadline {
            return Ok(None);
        }
        thread::sleep(POLL);
    }
}

fn read_result(path: &Path, expected_len: Option<usize>) -> Result<ScriptResult, String> {
    let text = std::fs::read_to_string(path).map_err(|_| "the script did not write a result file".to_string())?;
    let result: ScriptResult = serde_json::from_str(&text).map_err(|e| format!("malformed result file: {e}"))?;
    if result.scores.len() != result.labels_pred.len() {
        return Err(format!("malformed result file: {} scores but {} predictions", result.scores.len(), result.labels_pred.len()));
    }
    if let Some(n) = expected_len {
        if result.scores.len() != n {
            return Err(format!("malformed result file: {} scores for {n} samples", result.scores.len()));
        }
    }
    if let Some(i) = result.scores.iter().position(|s| !s.is_finite()) {
        return Err(format!("malformed result file: score {i} is not finite"));
    }
    if let Some(i) = result.labels_pred.iter().position(|&l| l > 1) {
        return Err(format!("malformed result file: prediction {i} is not 0 or 1"));
    }
    Ok(result)
}

/// Runs `source` in a fresh temp directory and collects its output and
/// result file. The child never outlives `timeout` + [`KILL_GRACE`].
pub fn execute(
    config: &SandboxConfig,
    source: &str,
    data: &DataBinding,
    params_override: Option<&serde_json::Value>,
    expected_len: Option<usize>,
) -> Result<Execution, SandboxFailure> {
    let dir = tempfile::Builder::new().prefix("ad-agent-sandbox-").tempdir()?;
    let script = dir.path().join("script.py");
    let result_path = dir.path().join("result.json");
    std::fs::write(&script, source)?;

    let mut command = Command::new(&config.interpreter.program);
    command
        .args(&config.interpreter.args)
        .arg(&script)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for var in [DATA_OVERRIDE_ENV, TRAIN_OVERRIDE_ENV, TEST_OVERRIDE_ENV, PARAMS_OVERRIDE_ENV] {
        command.env_remove(var);
    }
    command.env("PYTHONDONTWRITEBYTECODE", "1").env(RESULT_PATH_ENV, &result_path);
    match data {
        DataBinding::Override(path) => {
            command.env(DATA_OVERRIDE_ENV, absolute(path));
        }
        DataBinding::Real { train, test } => {
            command.env(TRAIN_OVERRIDE_ENV, absolute(train));
            if let Some(test) = test {
                command.env(TEST_OVERRIDE_ENV, absolute(test));
            }
        }
    }
    if let Some(params) = params_override {
        command.env(PARAMS_OVERRIDE_ENV, params.to_string());
    }
    command.envs(config.env.iter().map(|(k, v)| (k, v)));
    isolate(&mut command);

    let started = Instant::now();
    let mut child = command.spawn().map_err(|source| SandboxFailure::Launch { program: config.interpreter.program.clone(), source })?;
    let stdout = read_pipe(child.stdout.take());
    let stderr = read_pipe(child.stderr.take());

    let exit = match wait_bounded(&mut child, config.timeout)? {
        Some(status) => match status.code() {
            Some(code) => ExitKind::Code(code),
            None => ExitKind::Signal,
        },
        None => {
            kill_tree(&mut child);
            if wait_bounded(&mut child, KILL_GRACE)?.is_none() {
                log::warn!("sandbox child {} survived SIGKILL", child.id());
            }
            ExitKind::TimedOut
        }
    };
    let duration = started.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&stdout.join().unwrap_or_default()).into_owned();
    let stderr = String::from_utf8_lossy(&stderr.join().unwrap_or_default()).into_owned();
    let stderr = scrub_paths(&stderr, dir.path());
    let result = read_result(&result_path, expected_len);
    Ok(Execution { exit, stdout, stderr, duration, result })
}

fn scrub_paths(text: &str, dir: &Path) -> String {
    let mut out = text.to_string();
    let mut forms = vec![dir.to_string_lossy().into_owned()];
    if let Ok(real) = dir.canonicalize() {
        forms.push(real.to_string_lossy().into_owned());
    }
    forms.sort_by_key(|f| std::cmp::Reverse(f.len()));
    for form in forms {
        out = out.replace(&form, SANDBOX_PLACEHOLDER);
    }
    out
}
