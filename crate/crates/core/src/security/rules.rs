use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use super::lexer::mask_source;
use super::{Origin, SecurityFinding, Severity};

pub const BUILTIN_RULES_VERSION: &str = "builtin-v1";

#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub description: String,
    pub severity: Severity,
    pub pattern: Regex,
    /// A line matching this is exempt (e.g. `usedforsecurity=False`).
    pub unless: Option<Regex>,
}

#[derive(Debug, Clone)]
pub struct RuleTable {
    pub version: String,
    rules: Vec<Rule>,
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("cannot read rules file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid rules file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rule `{id}`: bad pattern: {source}")]
    Pattern {
        id: String,
        #[source]
        source: regex::Error,
    },
    #[error("rule `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error("duplicate rule id `{0}`")]
    Duplicate(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    version: String,
    #[serde(rename = "rule", default)]
    rules: Vec<RuleRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    id: String,
    pattern: String,
    severity: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    unless: Option<String>,
}

// (id, severity, pattern, unless, description)
const BUILTIN: &[(&str, Severity, &str, Option<&str>, &str)] = &[
    (
        "eval",
        Severity::High,
        r"(?:^|[^\w.])eval\s*\(",
        None,
        "call to eval() on dynamic input",
    ),
    (
        "exec",
        Severity::High,
        r"(?:^|[^\w.])exec\s*\(",
        None,
        "call to exec() on dynamic input",
    ),
    (
        "shell",
        Severity::High,
        r"\bshell\s*=\s*True\b|\bos\s*\.\s*(?:system|popen)\s*\(|\bsubprocess\s*\.\s*(?:getoutput|getstatusoutput)\s*\(",
        None,
        "process started through a shell string",
    ),
    (
        "pickle",
        Severity::High,
        r"\b(?:c?[Pp]ickle|_pickle|dill|marshal)\s*\.\s*(?:loads?|Unpickler)\b|\bshelve\s*\.\s*open\s*\(",
        None,
        "deserialization of untrusted pickled data",
    ),
    (
        "weak_hash",
        Severity::Medium,
        r"\bhashlib\s*\.\s*(?:md5|sha1)\s*\(",
        Some(r"usedforsecurity\s*=\s*False"),
        "md5/sha1 used where a strong hash is expected",
    ),
    (
        "yaml_load",
        Severity::Medium,
        r"\byaml\s*\.\s*(?:load|load_all|unsafe_load|full_load)\s*\(",
        Some(r"\bC?SafeLoader\b"),
        "YAML loaded without the safe loader",
    ),
    (
        "mktemp",
        Severity::Medium,
        r"(?:^|[^\w])(?:mktemp|tempnam|tmpnam)\s*\(",
        None,
        "predictable temporary file name",
    ),
    (
        "assert_access",
        Severity::Low,
        r"^\s*assert\b.*(?:admin|auth|permission|staff|superuser|role|privilege|logged_in|access|owner|token|password)",
        None,
        "assert used for an access-control check (stripped under -O)",
    ),
];

impl RuleTable {
    /// The v1 builtin table; compiled once per process.
    pub fn builtin() -> &'static RuleTable {
        static TABLE: OnceLock<RuleTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            let rules = BUILTIN
                .iter()
                .map(|&(id, severity, pattern, unless, description)| Rule {
                    id: id.to_owned(),
                    description: description.to_owned(),
                    severity,
                    pattern: Regex::new(pattern).expect("builtin pattern"),
                    unless: unless.map(|u| Regex::new(u).expect("builtin pattern")),
                })
                .collect();
            RuleTable {
                version: BUILTIN_RULES_VERSION.to_owned(),
                rules,
            }
        })
    }

    pub fn new(version: impl Into<String>, rules: Vec<Rule>) -> Result<Self, RulesError> {
        let mut seen = HashSet::new();
        for rule in &rules {
            if !seen.insert(rule.id.as_str()) {
                return Err(RulesError::Duplicate(rule.id.clone()));
            }
        }
        Ok(Self {
            version: version.into(),
            rules,
        })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Parses a declarative TOML rules file:
    ///
    /// ```toml
    /// version = "site-rules-3"
    /// [[rule]]
    /// id = "eval"
    /// pattern = '(?:^|[^\w.])eval\s*\('
    /// severity = "high"
    /// ```
    pub fn from_toml(text: &str) -> Result<Self, RulesError> {
        let file: RulesFile = toml::from_str(text)?;
        let compile = |id: &str, p: &str| {
            Regex::new(p).map_err(|source| RulesError::Pattern {
                id: id.to_owned(),
                source,
            })
        };
        let mut rules = Vec::with_capacity(file.rules.len());
        for r in file.rules {
            let severity = r.severity.parse().map_err(|message| RulesError::Invalid {
                id: r.id.clone(),
                message,
            })?;
            rules.push(Rule {
                pattern: compile(&r.id, &r.pattern)?,
                unless: r.unless.as_deref().map(|u| compile(&r.id, u)).transpose()?,
                description: if r.description.is_empty() {
                    r.id.clone()
                } else {
                    r.description
                },
                severity,
                id: r.id,
            });
        }
        Self::new(file.version, rules)
    }

    pub fn load(path: &Path) -> Result<Self, RulesError> {
        let text = std::fs::read_to_string(path).map_err(|source| RulesError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// One finding per pattern match, in ascending (line, column) order.
    pub fn scan(&self, source: &str) -> Vec<SecurityFinding> {
        let masked = mask_source(source);
        let mut hits: Vec<(usize, usize, usize)> = Vec::new();
        for (line_idx, line) in masked.lines().enumerate() {
            for (rule_idx, rule) in self.rules.iter().enumerate() {
                if rule.unless.as_ref().is_some_and(|u| u.is_match(line)) {
                    continue;
                }
                hits.extend(
                    rule.pattern
                        .find_iter(line)
                        .map(|m| (line_idx + 1, m.start(), rule_idx)),
                );
            }
        }
        hits.sort_unstable();
        hits.into_iter()
            .map(|(line, _, rule_idx)| {
                let rule = &self.rules[rule_idx];
                SecurityFinding {
                    rule_id: rule.id.clone(),
                    severity: rule.severity,
                    line,
                    message: rule.description.clone(),
                    origin: Origin::Builtin,
                }
            })
            .collect()
    }
}
