//! Per-test execution records, limits and output comparison.
//!
//! The subprocess side lives in [`process`] (feature `process`); the types
//! and the comparison rules here are pure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[cfg(feature = "process")]
mod process;
#[cfg(feature = "process")]
pub use process::{run_captured, Captured, ExecError, Executor};

/// Maximum amount a timed-out run may overshoot `wall_ms`.
pub const SCHEDULER_SLACK_MS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionLimits {
    pub wall_ms: u64,
    pub mem_bytes: u64,
    pub max_output_bytes: usize,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            wall_ms: 5_000,
            mem_bytes: 256 * 1024 * 1024,
            max_output_bytes: 1024 * 1024,
        }
    }
}

impl ExecutionLimits {
    pub fn new(wall_ms: u64, mem_bytes: u64, max_output_bytes: usize) -> Result<Self, String> {
        let limits = Self {
            wall_ms,
            mem_bytes,
            max_output_bytes,
        };
        limits.validate()?;
        Ok(limits)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.wall_ms == 0 || self.mem_bytes == 0 || self.max_output_bytes == 0 {
            return Err(format!("execution limits must be strictly positive: {self:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    ExitedZero,
    ExitedNonzero,
    KilledTimeout,
    KilledMemory,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ExitedZero => "exited_zero",
            Self::ExitedNonzero => "exited_nonzero",
            Self::KilledTimeout => "killed_timeout",
            Self::KilledMemory => "killed_memory",
        })
    }
}

/// Raw record of one candidate run against one test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestExecution {
    pub test_index: usize,
    pub stdout: String,
    pub stderr: String,
    #[serde(default)]
    pub stdout_truncated: bool,
    pub status: RunStatus,
    #[serde(default)]
    pub exit_code: Option<i32>,
    pub duration_ms: u64,
    pub matched: bool,
    /// Scratch directory the run used; removed once the run finishes.
    #[serde(skip)]
    pub scratch_dir: Option<std::path::PathBuf>,
}

impl TestExecution {
    /// True when the run completed and printed something a judge can read.
    pub fn has_output(&self) -> bool {
        self.status == RunStatus::ExitedZero && has_output(&self.stdout)
    }

    pub fn summary(&self) -> TestSummary {
        TestSummary {
            test_index: self.test_index,
            status: self.status,
            matched: self.matched,
            duration_ms: self.duration_ms,
            stdout_truncated: self.stdout_truncated,
        }
    }
}

/// The part of a [`TestExecution`] worth sending over the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub test_index: usize,
    pub status: RunStatus,
    pub matched: bool,
    pub duration_ms: u64,
    pub stdout_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxReport {
    pub valid: bool,
    pub diagnostic: String,
}

impl SyntaxReport {
    pub fn valid() -> Self {
        Self {
            valid: true,
            diagnostic: String::new(),
        }
    }

    /// An invalid report always carries a non-empty diagnostic.
    pub fn invalid(diagnostic: impl Into<String>) -> Self {
        let mut diagnostic = diagnostic.into();
        if diagnostic.trim().is_empty() {
            diagnostic = "syntax check failed".to_owned();
        }
        Self {
            valid: false,
            diagnostic,
        }
    }
}

/// How an interpreter is driven: one argv to compile-check source read from
/// stdin, one argv (plus the source path) to run it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toolchain {
    pub interpreter: String,
    pub syntax_args: Vec<String>,
    pub run_args: Vec<String>,
    pub source_name: String,
}

const PYTHON_SYNTAX_CHECK: &str = "\
import sys
src = sys.stdin.buffer.read()
try:
    compile(src, '<candidate>', 'exec')
except (SyntaxError, ValueError) as e:
    line = getattr(e, 'lineno', None)
    where = ' (line %d)' % line if line else ''
    sys.stderr.write('%s: %s%s\\n' % (type(e).__name__, getattr(e, 'msg', None) or e, where))
    sys.exit(1)
";

impl Default for Toolchain {
    fn default() -> Self {
        Self::python("python3")
    }
}

impl Toolchain {
    pub fn python(interpreter: impl Into<String>) -> Self {
        Self {
            interpreter: interpreter.into(),
            // -I: ignore PYTHON* variables and the user site; -S: skip `site`
            syntax_args: vec!["-I".into(), "-S".into(), "-c".into(), PYTHON_SYNTAX_CHECK.into()],
            run_args: vec!["-I".into(), "-S".into()],
            source_name: "main.py".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparePolicy {
    #[default]
    Strict,
    Token,
}

impl FromStr for ComparePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Self::Strict),
            "token" => Ok(Self::Token),
            other => Err(format!("unknown comparison policy `{other}` (strict|token)")),
        }
    }
}

/// Strips trailing whitespace from every line and drops trailing blank lines.
pub fn normalize_output(text: &str) -> String {
    let mut lines: Vec<&str> = text.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// Whether `stdout` carries anything once whitespace is normalized away.
pub fn has_output(stdout: &str) -> bool {
    !stdout.trim().is_empty()
}

pub fn compare_output(actual: &str, expected: &str, policy: ComparePolicy) -> bool {
    match policy {
        ComparePolicy::Strict => normalize_output(actual) == normalize_output(expected),
        ComparePolicy::Token => actual.split_whitespace().eq(expected.split_whitespace()),
    }
}

/// The match rule shared by every run: a test only passes when the program
/// exited cleanly, printed something, and the output compares equal.
pub fn judge_match(status: RunStatus, stdout: &str, expected: &str, policy: ComparePolicy) -> bool {
    status == RunStatus::ExitedZero && has_output(stdout) && compare_output(stdout, expected, policy)
}
