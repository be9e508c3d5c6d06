//! Adapter for an external analyzer invoked as `<tool> -f json <file>`.

use std::io;
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::external_report::{parse_report, AdapterTable, ReportError};
use super::SecurityFinding;
use crate::executor::run_captured;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalAnalyzer {
    pub command: String,
    /// Arguments placed before the scanned file.
    pub args: Vec<String>,
    pub timeout_ms: u64,
    pub adapter: AdapterTable,
}

impl Default for ExternalAnalyzer {
    fn default() -> Self {
        Self {
            command: "bandit".into(),
            args: vec!["-q".into(), "-f".into(), "json".into()],
            timeout_ms: 60_000,
            adapter: AdapterTable::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SecurityError {
    #[error("external analyzer `{0}` is not installed or not on PATH")]
    ToolMissing(String),
    #[error("external analyzer `{tool}` timed out")]
    Timeout { tool: String },
    #[error("external analyzer failed to start: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExternalScan {
    pub findings: Vec<SecurityFinding>,
    /// Problems the tool reported about the file itself (e.g. unparseable source).
    pub tool_errors: Vec<String>,
}

/// Writes `source` to a temporary file and runs the analyzer on it.
///
/// A missing tool and an unreadable report are errors, never "no findings".
pub fn scan_external(source: &str, analyzer: &ExternalAnalyzer) -> Result<ExternalScan, SecurityError> {
    let dir = tempfile::Builder::new().prefix("ladder-scan-").tempdir()?;
    let file = dir.path().join("candidate.py");
    std::fs::write(&file, source)?;

    let mut cmd = Command::new(&analyzer.command);
    cmd.args(&analyzer.args).arg(&file).current_dir(dir.path());
    let captured = run_captured(
        cmd,
        b"",
        Duration::from_millis(analyzer.timeout_ms),
        64 * 1024 * 1024,
    )
    .map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => SecurityError::ToolMissing(analyzer.command.clone()),
        _ => SecurityError::Io(e),
    })?;
    if captured.timed_out {
        return Err(SecurityError::Timeout {
            tool: analyzer.command.clone(),
        });
    }
    let stdout = String::from_utf8_lossy(&captured.stdout);
    let parsed = parse_report(&stdout, &analyzer.adapter).map_err(|mut e| {
        if e.raw.trim().is_empty() {
            e.raw = String::from_utf8_lossy(&captured.stderr).into_owned();
        }
        e
    })?;
    Ok(ExternalScan {
        findings: parsed.findings,
        tool_errors: parsed.tool_errors,
    })
}
