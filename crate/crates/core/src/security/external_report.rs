//! Parsing of Bandit-style JSON reports into [`SecurityFinding`]s.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{Origin, SecurityFinding, Severity};

/// How tool severities map onto ours. Per-test-id overrides come first, so
/// tool rules that correspond to a builtin rule carry the builtin severity;
/// anything else keeps the tool's own level (`UNDEFINED` counts as low).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterTable {
    pub overrides: BTreeMap<String, Severity>,
}

impl Default for AdapterTable {
    fn default() -> Self {
        let overrides = [
            ("B307", Severity::High),   // eval
            ("B102", Severity::High),   // exec
            ("B602", Severity::High),   // subprocess with shell=True
            ("B605", Severity::High),   // os.system / popen with a shell
            ("B301", Severity::High),   // pickle and friends
            ("B302", Severity::High),   // marshal
            ("B324", Severity::Medium), // md5/sha1 via hashlib
            ("B303", Severity::Medium), // md5/sha1 via other modules
            ("B506", Severity::Medium), // yaml.load
            ("B306", Severity::Medium), // mktemp
            ("B101", Severity::Low),    // assert
        ]
        .into_iter()
        .map(|(id, s)| (id.to_owned(), s))
        .collect();
        Self { overrides }
    }
}

impl AdapterTable {
    pub fn map(&self, test_id: &str, tool_severity: &str) -> Severity {
        if let Some(&s) = self.overrides.get(test_id) {
            return s;
        }
        match tool_severity.to_ascii_uppercase().as_str() {
            "HIGH" => Severity::High,
            "MEDIUM" => Severity::Medium,
            _ => Severity::Low,
        }
    }
}

#[derive(Debug, Error)]
#[error("unparseable analyzer report: {message}")]
pub struct ReportError {
    pub message: String,
    pub raw: String,
}

/// Findings plus any per-file errors the tool reported.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedReport {
    pub findings: Vec<SecurityFinding>,
    pub tool_errors: Vec<String>,
}

#[derive(Deserialize)]
struct RawResult {
    test_id: String,
    issue_severity: String,
    #[serde(default)]
    issue_text: String,
    line_number: usize,
}

/// Parses the tool's JSON output. Results are sorted by (line, test id).
pub fn parse_report(raw: &str, table: &AdapterTable) -> Result<ParsedReport, ReportError> {
    let fail = |message: String| ReportError {
        message,
        raw: raw.to_owned(),
    };
    let value: Value = serde_json::from_str(raw.trim()).map_err(|e| fail(e.to_string()))?;
    let results = value
        .get("results")
        .and_then(Value::as_array)
        .ok_or_else(|| fail("missing `results` array".into()))?;

    let mut findings = Vec::with_capacity(results.len());
    for r in results {
        let r: RawResult = serde_json::from_value(r.clone()).map_err(|e| fail(e.to_string()))?;
        findings.push(SecurityFinding {
            severity: table.map(&r.test_id, &r.issue_severity),
            line: r.line_number.max(1),
            message: r.issue_text,
            origin: Origin::External,
            rule_id: r.test_id,
        });
    }
    findings.sort_by(|a, b| (a.line, &a.rule_id).cmp(&(b.line, &b.rule_id)));

    let tool_errors = value
        .get("errors")
        .and_then(Value::as_array)
        .map(|errs| {
            errs.iter()
                .map(|e| {
                    e.get("reason")
                        .and_then(Value::as_str)
                        .map(str::to_owned)
                        .unwrap_or_else(|| e.to_string())
                })
                .collect()
        })
        .unwrap_or_default();

    Ok(ParsedReport {
        findings,
        tool_errors,
    })
}
