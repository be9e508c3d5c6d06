//! Problem and generation ingestion.
//!
//! Two problem layouts are understood: the canonical one-record-per-line
//! layout and the APPS+ release layout. Generations come either as a
//! directory of `<problem_id>.txt` files or as a record-per-line file with
//! `{problem_id, raw}` records.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::executor::normalize_output;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected: String,
}

impl TestCase {
    pub fn new(input: impl Into<String>, expected: impl Into<String>) -> Self {
        Self {
            input: input.into(),
            expected: expected.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub tests: Vec<TestCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
}

impl Problem {
    /// Checks the per-problem invariants: at least one test, and at least one
    /// test whose expected output is non-empty after normalization.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.tests.is_empty() {
            return Err("no tests".into());
        }
        if self
            .tests
            .iter()
            .all(|t| normalize_output(&t.expected).is_empty())
        {
            return Err("every expected output is empty after normalization".into());
        }
        Ok(())
    }
}

/// A model generation attributed to a problem, with runnable code extracted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateProgram {
    pub problem_id: String,
    pub raw: String,
    pub source: String,
}

impl CandidateProgram {
    pub fn from_raw(problem_id: impl Into<String>, raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let source = extract_code(&raw).to_owned();
        Self {
            problem_id: problem_id.into(),
            raw,
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemFormat {
    AppsPlus,
    Canonical,
}

impl FromStr for ProblemFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "appsplus" | "apps+" | "apps" => Ok(Self::AppsPlus),
            "canonical" | "jsonl" => Ok(Self::Canonical),
            other => Err(format!("unknown problem format `{other}`")),
        }
    }
}

impl fmt::Display for ProblemFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AppsPlus => "appsplus",
            Self::Canonical => "canonical",
        })
    }
}

/// A non-fatal note produced while loading (a skipped record, an empty input).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub skipped: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Loaded<T> {
    fn new() -> Self {
        Self {
            items: Vec::new(),
            skipped: 0,
            diagnostics: Vec::new(),
        }
    }

    fn skip(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.skipped += 1;
        self.note(location, message);
    }

    fn note(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            location: location.into(),
            message: message.into(),
        });
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: malformed input: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })
}

fn malformed(path: &Path, line: usize, column: usize, message: impl Into<String>) -> DatasetError {
    DatasetError::Malformed {
        path: path.to_owned(),
        line,
        column,
        message: message.into(),
    }
}

/// Parses one JSON value per non-blank line. A line that is not valid JSON is
/// structural damage and aborts the load.
fn parse_lines(path: &Path, text: &str) -> Result<Vec<(usize, Value)>, DatasetError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| malformed(path, idx + 1, e.column(), e.to_string()))?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

pub fn load_problems(path: &Path, format: ProblemFormat) -> Result<Loaded<Problem>, DatasetError> {
    let text = read_text(path)?;
    parse_problems(path, &text, format)
}

/// Same as [`load_problems`] but over already-read text; `path` is only used
/// for diagnostics.
pub fn parse_problems(
    path: &Path,
    text: &str,
    format: ProblemFormat,
) -> Result<Loaded<Problem>, DatasetError> {
    let mut loaded = Loaded::new();
    let mut seen = HashSet::new();
    let records = match format {
        ProblemFormat::Canonical => parse_lines(path, text)?
            .into_iter()
            .map(|(line, v)| (format!("line {line}"), canonical_record(v)))
            .collect::<Vec<_>>(),
        ProblemFormat::AppsPlus => apps_records(path, text)?,
    };
    for (location, record) in records {
        let problem = match record {
            Ok(p) => p,
            Err(msg) => {
                loaded.skip(location, msg);
                continue;
            }
        };
        if let Err(msg) = problem.validate() {
            loaded.skip(location, format!("problem `{}`: {msg}", problem.id));
            continue;
        }
        if !seen.insert(problem.id.clone()) {
            loaded.skip(location, format!("duplicate problem id `{}`", problem.id));
            continue;
        }
        loaded.items.push(problem);
    }
    Ok(loaded)
}

fn canonical_record(value: Value) -> Result<Problem, String> {
    if !value.is_object() {
        return Err("record is not an object".into());
    }
    let id = match value.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err("missing id".into()),
    };
    let statement = value
        .get("statement")
        .and_then(Value::as_str)
        .ok_or_else(|| format!("problem `{id}`: missing statement"))?
        .to_owned();
    let tests: Vec<TestCase> = match value.get("tests") {
        Some(t @ Value::Array(_)) => serde_json::from_value(t.clone())
            .map_err(|e| format!("problem `{id}`: bad tests: {e}"))?,
        _ => return Err(format!("problem `{id}`: missing tests")),
    };
    let difficulty = value
        .get("difficulty")
        .and_then(|d| match d {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        });
    Ok(Problem {
        id,
        statement,
        tests,
        difficulty,
    })
}

/// A record's location (for diagnostics) and the parsed problem or the reason it was skipped.
type LocatedRecord = (String, Result<Problem, String>);

/// Splits an APPS+ file into records. The release ships a single JSON array;
/// an id-keyed object and one-record-per-line files are accepted too.
fn apps_records(
    path: &Path,
    text: &str,
) -> Result<Vec<LocatedRecord>, DatasetError> {
    let trimmed = text.trim_start();
    let top: Vec<(String, Value)> = if trimmed.starts_with('[') || trimmed.starts_with('{') {
        match serde_json::from_str::<Value>(text) {
            Ok(Value::Array(items)) => items
                .into_iter()
                .enumerate()
                .map(|(i, v)| (format!("record {i}"), v))
                .collect(),
            Ok(Value::Object(map)) if looks_like_apps_record(&map) => {
                vec![("record 0".to_owned(), Value::Object(map))]
            }
            Ok(Value::Object(map)) => map
                .into_iter()
                .map(|(k, mut v)| {
                    if let Value::Object(inner) = &mut v {
                        inner
                            .entry("problem_id")
                            .or_insert_with(|| Value::String(k.clone()));
                    }
                    (format!("record `{k}`"), v)
                })
                .collect(),
            Ok(_) => return Err(malformed(path, 1, 1, "top level is not an array or object")),
            Err(e) if trimmed.starts_with('{') && e.is_syntax() && e.line() > 1 => {
                // more than one top-level object: treat as one record per line
                parse_lines(path, text)?
                    .into_iter()
                    .map(|(line, v)| (format!("line {line}"), v))
                    .collect()
            }
            Err(e) => return Err(malformed(path, e.line(), e.column(), e.to_string())),
        }
    } else if trimmed.is_empty() {
        Vec::new()
    } else {
        return Err(malformed(path, 1, 1, "expected a JSON array or object"));
    };

    Ok(top
        .into_iter()
        .enumerate()
        .map(|(i, (loc, v))| (loc, apps_record(i, v)))
        .collect())
}

fn looks_like_apps_record(map: &serde_json::Map<String, Value>) -> bool {
    map.contains_key("question") || map.contains_key("input_output")
}

fn apps_record(index: usize, value: Value) -> Result<Problem, String> {
    let Value::Object(map) = value else {
        return Err("record is not an object".into());
    };
    let id = ["problem_id", "id", "task_id", "name"]
        .iter()
        .find_map(|k| match map.get(*k) {
            Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            _ => None,
        })
        .unwrap_or_else(|| index.to_string());
    let statement = map
        .get("question")
        .or_else(|| map.get("statement"))
        .and_then(Value::as_str)
        .filter(|s| !s.trim().is_empty())
        .ok_or_else(|| format!("problem `{id}`: missing question"))?
        .to_owned();

    let io = match map.get("input_output") {
        Some(Value::String(s)) if s.trim().is_empty() => {
            return Err(format!("problem `{id}`: empty input_output"))
        }
        Some(Value::String(s)) => serde_json::from_str::<Value>(s)
            .map_err(|e| format!("problem `{id}`: input_output is not valid JSON: {e}"))?,
        Some(v @ Value::Object(_)) => v.clone(),
        Some(_) => return Err(format!("problem `{id}`: input_output has unexpected type")),
        None => return Err(format!("problem `{id}`: missing input_output")),
    };
    let inputs = io.get("inputs").and_then(Value::as_array);
    let outputs = io.get("outputs").and_then(Value::as_array);
    let (Some(inputs), Some(outputs)) = (inputs, outputs) else {
        return Err(format!("problem `{id}`: input_output lacks inputs/outputs"));
    };

    let tests: Vec<TestCase> = inputs
        .iter()
        .zip(outputs)
        .filter_map(|(i, o)| Some(TestCase::new(apps_text(i)?, apps_text(o)?)))
        .collect();
    if tests.is_empty() {
        return Err(format!("problem `{id}`: missing tests"));
    }

    let difficulty = match map.get("difficulty") {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    };
    Ok(Problem {
        id,
        statement,
        tests,
        difficulty,
    })
}

/// APPS stores stdin/stdout as strings, occasionally as a list of lines.
/// Anything else (call-based argument lists) is not stdin-style text.
fn apps_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Array(items) => {
            let lines: Option<Vec<&str>> = items.iter().map(Value::as_str).collect();
            lines.map(|l| {
                let mut s = l.join("\n");
                s.push('\n');
                s
            })
        }
        _ => None,
    }
}

/// Loads generations and resolves them against `problems`. Records whose
/// problem id is unknown are skipped with a diagnostic.
pub fn load_generations(
    path: &Path,
    problems: &[Problem],
) -> Result<Loaded<CandidateProgram>, DatasetError> {
    let known: HashSet<&str> = problems.iter().map(|p| p.id.as_str()).collect();
    let meta = fs::metadata(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut loaded = Loaded::new();

    if meta.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|source| DatasetError::Io {
                path: path.to_owned(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        if files.is_empty() {
            loaded.note(path.display().to_string(), "no generation files found");
        }
        for file in files {
            let id = file
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let location = file.display().to_string();
            if !known.contains(id.as_str()) {
                loaded.skip(location, format!("unknown problem id `{id}`"));
                continue;
            }
            let raw = read_text(&file)?;
            loaded.items.push(CandidateProgram::from_raw(id, raw));
        }
    } else {
        let text = read_text(path)?;
        for (line, value) in parse_lines(path, &text)? {
            let location = format!("line {line}");
            let id = match value.get("problem_id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => {
                    loaded.skip(location, "missing problem_id");
                    continue;
                }
            };
            let Some(raw) = value.get("raw").and_then(Value::as_str) else {
                loaded.skip(location, format!("record for `{id}` has no raw text"));
                continue;
            };
            if !known.contains(id.as_str()) {
                loaded.skip(location, format!("unknown problem id `{id}`"));
                continue;
            }
            loaded.items.push(CandidateProgram::from_raw(id, raw));
        }
        if loaded.items.is_empty() && loaded.skipped == 0 {
            loaded.note(path.display().to_string(), "no generation records found");
        }
    }
    Ok(loaded)
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Returns the body of the longest ``` fenced block in `raw`, or `raw` itself
/// when there is no fence.
///
/// Fence lines pair up in order (open, close); an unclosed final fence runs
/// to the end of the text. Because a body never contains a fence line the
/// function is idempotent. Ties keep the earliest block.
pub fn extract_code(raw: &str) -> &str {
    // (byte offset of the fence line, its length including the newline)
    let mut fences = Vec::new();
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if is_fence(line) {
            fences.push((offset, line.len()));
        }
        offset += line.len();
    }
    if fences.is_empty() {
        return raw;
    }

    let mut best: Option<&str> = None;
    for pair in fences.chunks(2) {
        let (open_at, open_len) = pair[0];
        let body_start = open_at + open_len;
        let body_end = pair.get(1).map_or(raw.len(), |&(close_at, _)| close_at);
        let body = raw.get(body_start..body_end).unwrap_or("");
        let body = body
            .strip_suffix('\n')
            .map(|b| b.strip_suffix('\r').unwrap_or(b))
            .unwrap_or(body);
        if best.is_none_or(|b| body.len() > b.len()) {
            best = Some(body);
        }
    }
    best.unwrap_or(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extracts_single_fence() {
        assert_eq!(extract_code("here is code:\n```\nprint(1)\n```"), "print(1)");
    }

    #[test]
    fn no_fence_is_identity() {
        assert_eq!(extract_code("print(1)"), "print(1)");
        assert_eq!(extract_code(""), "");
    }

    #[test]
    fn longest_fence_wins() {
        let raw = "try:\n```python\nx\n```\nfull:\n```py\nn = int(input())\nprint(n * 2)\n```\nbye";
        assert_eq!(extract_code(raw), "n = int(input())\nprint(n * 2)");
    }

    #[test]
    fn language_tag_and_crlf() {
        let raw = "```python\r\nprint(1)\r\n```\r\n";
        assert_eq!(extract_code(raw), "print(1)");
    }

    #[test]
    fn unclosed_fence_runs_to_end() {
        assert_eq!(extract_code("```\nprint(1)\nprint(2)"), "print(1)\nprint(2)");
    }

    #[test]
    fn canonical_parse_skips_record_without_tests() {
        let text = r#"{"id":"a","statement":"s","tests":[{"input":"1","expected":"2"}]}
{"id":"b","statement":"s"}
"#;
        let loaded = parse_problems(Path::new("f"), text, ProblemFormat::Canonical).unwrap();
        assert_eq!(loaded.items.len(), 1);
        assert_eq!(loaded.skipped, 1);
    }

    #[test]
    fn canonical_rejects_all_empty_expected_and_duplicates() {
        let text = r#"{"id":"a","statement":"s","tests":[{"input":"1","expected":"  \n"}]}
{"id":"b","statement":"s","tests":[{"input":"1","expected":"x"}]}
{"id":"b","statement":"s","tests":[{"input":"1","expected":"y"}]}
"#;
        let loaded = parse_problems(Path::new("f"), text, ProblemFormat::Canonical).unwrap();
        assert_eq!(loaded.items.len(), 1);
        assert_eq!(loaded.skipped, 2);
        assert_eq!(loaded.items[0].tests[0].expected, "x");
    }

    #[test]
    fn canonical_bad_json_is_fatal_with_position() {
        let text = "{\"id\":\"a\"}\n{not json\n";
        let err = parse_problems(Path::new("f"), text, ProblemFormat::Canonical).unwrap_err();
        match err {
            DatasetError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn apps_adapter_handles_string_and_object_io() {
        let text = r#"[
 {"problem_id": 7, "question": "double it", "difficulty": "introductory",
  "input_output": "{\"inputs\": [\"3\\n\", \"5\\n\"], \"outputs\": [\"6\\n\", \"10\\n\"]}"},
 {"id": "x", "question": "q", "input_output": {"inputs": [["1", "2"]], "outputs": [["3"]]}},
 {"problem_id": 9, "question": "q", "input_output": ""},
 {"problem_id": 10, "question": "call based", "input_output": {"inputs": [[1, 2]], "outputs": [3]}}
]"#;
        let loaded = parse_problems(Path::new("d.json"), text, ProblemFormat::AppsPlus).unwrap();
        assert_eq!(loaded.items.len(), 2);
        assert_eq!(loaded.skipped, 2);
        let p = &loaded.items[0];
        assert_eq!(p.id, "7");
        assert_eq!(p.difficulty.as_deref(), Some("introductory"));
        assert_eq!(p.tests[1], TestCase::new("5\n", "10\n"));
        assert_eq!(loaded.items[1].tests[0], TestCase::new("1\n2\n", "3\n"));
    }

    #[test]
    fn apps_adapter_accepts_keyed_object_and_lines() {
        let keyed = r#"{"12": {"question": "q", "input_output": {"inputs": ["1"], "outputs": ["1"]}}}"#;
        let loaded = parse_problems(Path::new("d"), keyed, ProblemFormat::AppsPlus).unwrap();
        assert_eq!(loaded.items[0].id, "12");

        let lines = "{\"problem_id\": 1, \"question\": \"q\", \"input_output\": {\"inputs\": [\"1\"], \"outputs\": [\"1\"]}}\n{\"problem_id\": 2, \"question\": \"q\", \"input_output\": {\"inputs\": [\"2\"], \"outputs\": [\"2\"]}}\n";
        let loaded = parse_problems(Path::new("d"), lines, ProblemFormat::AppsPlus).unwrap();
        assert_eq!(loaded.items.len(), 2);
    }

    #[test]
    fn apps_adapter_truncated_array_is_fatal() {
        let err = parse_problems(Path::new("d"), "[{\"question\": \"q\"", ProblemFormat::AppsPlus)
            .unwrap_err();
        assert!(matches!(err, DatasetError::Malformed { .. }));
    }

    proptest! {
        #[test]
        fn extract_code_is_idempotent(parts in proptest::collection::vec(
            prop_oneof![
                Just("```".to_owned()),
                Just("```python".to_owned()),
                Just("  ```".to_owned()),
                "[a-z ()=]{0,12}",
            ], 0..12)) {
            let raw = parts.join("\n");
            let once = extract_code(&raw);
            prop_assert_eq!(extract_code(once), once);
            prop_assert!(raw.contains(once));
        }
    }
}
