//! Rule-based classification of dry-run failures.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::sandbox::{Execution, ExitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    ImportError,
    MissingOrBadArgument,
    RuntimeError,
    DataConstraintViolation,
    Timeout,
    None,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::ImportError => "import_error",
            ErrorCategory::MissingOrBadArgument => "missing_or_bad_argument",
            ErrorCategory::RuntimeError => "runtime_error",
            ErrorCategory::DataConstraintViolation => "data_constraint_violation",
            ErrorCategory::Timeout => "timeout",
            ErrorCategory::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewResult {
    pub verdict: Verdict,
    pub error_category: ErrorCategory,
    pub stderr_excerpt: String,
    /// Repair instruction from the reviewer model; empty on pass.
    pub fix_hint: String,
    pub duration: f64,
    /// Revision of the script this review judged.
    pub revision: u32,
}

impl ReviewResult {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

const EXCERPT_LINES: usize = 40;
const EXCERPT_CHARS: usize = 4000;

/// Tail of `stderr`, bounded in lines and characters.
pub fn excerpt(stderr: &str) -> String {
    let lines: Vec<&str> = stderr.trim_end().lines().collect();
    let tail = lines[lines.len().saturating_sub(EXCERPT_LINES)..].join("\n");
    if tail.chars().count() <= EXCERPT_CHARS {
        return tail;
    }
    let skip = tail.chars().count() - EXCERPT_CHARS;
    tail.chars().skip(skip).collect()
}

fn exception_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([A-Za-z_][\w.]*(?:Error|Exception|Interrupt))\s*(?::\s*(.*))?$").unwrap())
}

fn data_constraint() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)binary|target|size mismatch|shape|dimension").unwrap())
}

/// The last exception raised in `stderr`: (class name, message).
pub fn last_exception(stderr: &str) -> Option<(String, String)> {
    stderr.lines().rev().find_map(|line| {
        let caps = exception_line().captures(line.trim_end())?;
        let class = caps[1].rsplit('.').next().unwrap_or(&caps[1]).to_string();
        Some((class, caps.get(2).map_or("", |m| m.as_str()).to_string()))
    })
}

/// Maps stderr text to a category by exception class and message.
pub fn classify_stderr(stderr: &str) -> ErrorCategory {
    let Some((class, message)) = last_exception(stderr) else {
        return ErrorCategory::RuntimeError;
    };
    match class.as_str() {
        "ImportError" | "ModuleNotFoundError" => ErrorCategory::ImportError,
        "TypeError" => ErrorCategory::MissingOrBadArgument,
        "ValueError" | "RuntimeError" | "AssertionError" | "IndexError" if data_constraint().is_match(&message) => {
            ErrorCategory::DataConstraintViolation
        }
        _ => ErrorCategory::RuntimeError,
    }
}

/// Classifies one execution; `fix_hint` is left empty.
pub fn review_execution(exec: &Execution, revision: u32) -> ReviewResult {
    let (category, detail) = match (&exec.exit, &exec.result) {
        (ExitKind::TimedOut, _) => (ErrorCategory::Timeout, "the dry run exceeded its time limit".to_string()),
        (ExitKind::Code(0), Ok(_)) => (ErrorCategory::None, String::new()),
        (ExitKind::Code(0), Err(reason)) => (ErrorCategory::RuntimeError, reason.clone()),
        _ => (classify_stderr(&exec.stderr), String::new()),
    };
    let mut stderr_excerpt = excerpt(&exec.stderr);
    if !detail.is_empty() {
        if !stderr_excerpt.is_empty() {
            stderr_excerpt.push('\n');
        }
        stderr_excerpt.push_str(&detail);
    }
    ReviewResult {
        verdict: if category == ErrorCategory::None { Verdict::Pass } else { Verdict::Fail },
        error_category: category,
        stderr_excerpt,
        fix_hint: String::new(),
        duration: exec.duration,
        revision,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TYPE_ERROR: &str = "Traceback (most recent call last):\n  File \"<sandbox>/script.py\", line 12, in <module>\n    model = DeepSVDD(**PARAMS)\nTypeError: DeepSVDD.__init__() missing 1 required positional argument: 'n_features'\n";

    #[test]
    fn categories_follow_exception_classes() {
        assert_eq!(classify_stderr(TYPE_ERROR), ErrorCategory::MissingOrBadArgument);
        assert_eq!(classify_stderr("ModuleNotFoundError: No module named 'pyod.models.vae2'"), ErrorCategory::ImportError);
        assert_eq!(classify_stderr("ImportError: cannot import name 'Vae' from 'pyod.models.vae'"), ErrorCategory::ImportError);
        assert_eq!(classify_stderr("ValueError: GAAN expects binary targets, found 3 classes"), ErrorCategory::DataConstraintViolation);
        assert_eq!(
            classify_stderr("RuntimeError: size mismatch between input (24) and window (96)"),
            ErrorCategory::DataConstraintViolation
        );
        assert_eq!(classify_stderr("ValueError: bad learning rate"), ErrorCategory::RuntimeError);
        assert_eq!(classify_stderr("ZeroDivisionError: division by zero"), ErrorCategory::RuntimeError);
        assert_eq!(classify_stderr("Segmentation fault"), ErrorCategory::RuntimeError);
    }

    #[test]
    fn last_exception_wins_and_module_prefix_is_dropped() {
        let text = "KeyError: 'x'\n\nDuring handling of the above exception, another exception occurred:\n\ntorch.TypeError: nope";
        assert_eq!(last_exception(text), Some(("TypeError".into(), "nope".into())));
    }

    #[test]
    fn excerpt_is_bounded() {
        let long: String = (0..100).map(|i| format!("line {i}\n")).collect();
        let e = excerpt(&long);
        assert_eq!(e.lines().count(), EXCERPT_LINES);
        assert!(e.ends_with("line 99"));
        let wide = "x".repeat(10_000);
        assert_eq!(excerpt(&wide).len(), EXCERPT_CHARS);
    }

    fn exec(exit: ExitKind, stderr: &str, result: Result<(), &str>) -> Execution {
        Execution {
            exit,
            stdout: String::new(),
            stderr: stderr.into(),
            duration: 0.5,
            result: result
                .map(|_| super::super::sandbox::ScriptResult { scores: vec![], labels_pred: vec![], metrics: Default::default() })
                .map_err(str::to_string),
        }
    }

    #[test]
    fn pass_iff_category_none() {
        let cases = [
            exec(ExitKind::Code(0), "", Ok(())),
            exec(ExitKind::Code(0), "", Err("the script did not write a result file")),
            exec(ExitKind::Code(1), TYPE_ERROR, Err("x")),
            exec(ExitKind::TimedOut, "", Err("x")),
            exec(ExitKind::Signal, "", Err("x")),
        ];
        let categories: Vec<_> = cases.iter().map(|e| review_execution(e, 0)).collect();
        for r in &categories {
            assert_eq!(r.passed(), r.error_category == ErrorCategory::None);
        }
        assert_eq!(categories[1].error_category, ErrorCategory::RuntimeError);
        assert!(categories[1].stderr_excerpt.contains("did not write"));
        assert_eq!(categories[2].error_category, ErrorCategory::MissingOrBadArgument);
        assert!(categories[2].stderr_excerpt.contains("n_features"));
        assert_eq!(categories[3].error_category, ErrorCategory::Timeout);
        assert_eq!(categories[4].error_category, ErrorCategory::RuntimeError);
    }
}
