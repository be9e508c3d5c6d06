//! Security findings and the `R_sec` penalty score.
//!
//! Findings come from two places: the builtin line-oriented rule table and,
//! optionally, an external analyzer (Bandit-compatible JSON reports).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

mod lexer;
mod rules;

#[cfg(feature = "process")]
mod external;
#[cfg(feature = "process")]
pub use external::{scan_external, ExternalAnalyzer, ExternalScan, SecurityError};

pub use external_report::{parse_report, AdapterTable, ParsedReport, ReportError};
pub use lexer::mask_source;
pub use rules::{Rule, RuleTable, RulesError, BUILTIN_RULES_VERSION};

mod external_report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            other => Err(format!("unknown severity `{other}`")),
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Low => "low",
            Self::Medium => "medium",
            Self::High => "high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Builtin,
    External,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Builtin => "builtin",
            Self::External => "external",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityFinding {
    pub rule_id: String,
    pub severity: Severity,
    /// 1-based.
    pub line: usize,
    pub message: String,
    pub origin: Origin,
}

/// Penalty per finding, by severity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeverityWeights {
    pub high: f64,
    pub medium: f64,
    pub low: f64,
}

impl Default for SeverityWeights {
    fn default() -> Self {
        Self {
            high: 0.6,
            medium: 0.3,
            low: 0.1,
        }
    }
}

impl SeverityWeights {
    pub fn weight(&self, severity: Severity) -> f64 {
        match severity {
            Severity::High => self.high,
            Severity::Medium => self.medium,
            Severity::Low => self.low,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, w) in [("high", self.high), ("medium", self.medium), ("low", self.low)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(format!("severity weight `{name}` must be a non-negative number, got {w}"));
            }
        }
        Ok(())
    }
}

/// `R_sec = max(0, 1 - sum of severity weights)` with the default weights.
pub fn score_security(findings: &[SecurityFinding]) -> f64 {
    score_security_with(findings, &SeverityWeights::default())
}

pub fn score_security_with(findings: &[SecurityFinding], weights: &SeverityWeights) -> f64 {
    let penalty: f64 = findings.iter().map(|f| weights.weight(f.severity)).sum();
    (1.0 - penalty).clamp(0.0, 1.0)
}

/// Scans with the builtin rule table.
pub fn scan_builtin(source: &str) -> Vec<SecurityFinding> {
    RuleTable::builtin().scan(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn finding(severity: Severity) -> SecurityFinding {
        SecurityFinding {
            rule_id: "x".into(),
            severity,
            line: 1,
            message: String::new(),
            origin: Origin::Builtin,
        }
    }

    #[test]
    fn clean_is_exactly_one() {
        assert_eq!(score_security(&[]), 1.0);
    }

    #[test]
    fn one_high_leaves_point_four() {
        assert!((score_security(&[finding(Severity::High)]) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn two_high_one_medium_clamps_to_zero() {
        let f = [finding(Severity::High), finding(Severity::High), finding(Severity::Medium)];
        assert_eq!(score_security(&f), 0.0);
    }

    #[test]
    fn listing_c_fires_eval_rule() {
        let src = "formula = \"a + b\"\nout = eval(formula)  # risky shortcut; Bandit flags this pattern\n";
        let findings = scan_builtin(src);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].rule_id, "eval");
        assert_eq!(findings[0].severity, Severity::High);
        assert_eq!(findings[0].line, 2);
    }

    #[test]
    fn comment_and_clean_sources_have_no_findings() {
        assert!(scan_builtin("print('hello')").is_empty());
        assert!(scan_builtin("# eval(x) in a comment").is_empty());
        assert!(scan_builtin("").is_empty());
    }

    fn severity() -> impl Strategy<Value = Severity> {
        prop_oneof![Just(Severity::Low), Just(Severity::Medium), Just(Severity::High)]
    }

    proptest! {
        #[test]
        fn adding_a_finding_never_raises_the_score(
            base in proptest::collection::vec(severity(), 0..8),
            extra in severity(),
        ) {
            let mut findings: Vec<_> = base.into_iter().map(finding).collect();
            let before = score_security(&findings);
            findings.push(finding(extra));
            let after = score_security(&findings);
            prop_assert!(after <= before);
            prop_assert!((0.0..=1.0).contains(&after));
        }
    }
}
