//! End-to-end judging of one candidate: syntax check, per-test runs,
//! taxonomy, security scans, staging and the combined reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, JudgeConfig};
use crate::dataset::{CandidateProgram, Problem, TestCase};
use crate::executor::{ExecError, Executor, SyntaxReport, TestExecution};
use crate::reward::{stage_of, RewardBreakdown, RewardError};
use crate::security::{
    scan_external, score_security_with, AdapterTable, ExternalAnalyzer, Origin, RuleTable, RulesError,
    SecurityError, SecurityFinding,
};
use crate::taxonomy::{classify, ContractViolation, OutcomeClass};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("candidate is for problem `{candidate}` but was judged against `{problem}`")]
    ProblemMismatch { problem: String, candidate: String },
    #[error("no tests to judge against")]
    NoTests,
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Contract(#[from] ContractViolation),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rules(#[from] RulesError),
}

/// Finding counts per scanner; `external` is absent when it did not run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingCounts {
    pub builtin: usize,
    pub external: Option<usize>,
    pub primary: Origin,
}

impl FindingCounts {
    pub fn primary_count(&self) -> usize {
        match self.primary {
            Origin::Builtin => self.builtin,
            Origin::External => self.external.unwrap_or(0),
        }
    }
}

/// Full result of judging one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub breakdown: RewardBreakdown,
    pub outcome: OutcomeClass,
    pub syntax: SyntaxReport,
    pub findings: Vec<SecurityFinding>,
    pub finding_counts: FindingCounts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub analyzer_errors: Vec<String>,
    pub per_test: Vec<TestExecution>,
}

/// A configured judge. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Judge {
    config: JudgeConfig,
    executor: Executor,
    rules: RuleTable,
    analyzer: ExternalAnalyzer,
}

impl Judge {
    pub fn new(config: JudgeConfig) -> Result<Self, JudgeError> {
        config.validate()?;
        let rules = match &config.rules_file {
            Some(path) => RuleTable::load(std::path::Path::new(path))?,
            None => RuleTable::builtin().clone(),
        };
        let executor = Executor {
            toolchain: config.toolchain.clone(),
            limits: config.limits,
            compare: config.compare,
            no_network: config.no_network,
        };
        let analyzer = ExternalAnalyzer {
            command: config.analyzer.command.clone(),
            args: config.analyzer.args.clone(),
            timeout_ms: config.analyzer.timeout_ms,
            adapter: AdapterTable {
                overrides: config.analyzer.severity_overrides.clone(),
            },
        };
        Ok(Self {
            config,
            executor,
            rules,
            analyzer,
        })
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    /// The same judge with a different configuration; the rule table is kept
    /// unless the new configuration names another rules file.
    pub fn reconfigured(&self, config: JudgeConfig) -> Result<Self, JudgeError> {
        if config.rules_file == self.config.rules_file {
            let mut next = Self::new(JudgeConfig {
                rules_file: None,
                ..config
            })?;
            next.config.rules_file = self.config.rules_file.clone();
            next.rules = self.rules.clone();
            Ok(next)
        } else {
            Self::new(config)
        }
    }

    pub fn judge(&self, problem: &Problem, candidate: &CandidateProgram) -> Result<Judgment, JudgeError> {
        if candidate.problem_id != problem.id {
            return Err(JudgeError::ProblemMismatch {
                problem: problem.id.clone(),
                candidate: candidate.problem_id.clone(),
            });
        }
        self.judge_source(&candidate.source, &problem.tests)
    }

    /// Judges already-extracted source against `tests`.
    pub fn judge_source(&self, source: &str, tests: &[TestCase]) -> Result<Judgment, JudgeError> {
        if tests.is_empty() {
            return Err(JudgeError::NoTests);
        }
        let syntax = self.executor.check_syntax(source)?;
        let per_test = if syntax.valid {
            self.executor.run_all(source, tests)?
        } else {
            Vec::new()
        };
        let outcome = classify(&syntax, &per_test)?;
        let stage = stage_of(&syntax, &per_test, self.config.staging())?;
        let k = per_test.iter().filter(|r| r.matched).count();

        let builtin = self.rules.scan(source);
        let (external, analyzer_errors) = if self.config.scanner.external_is_primary() {
            let scan = scan_external(source, &self.analyzer)?;
            (Some(scan.findings), scan.tool_errors)
        } else {
            (None, Vec::new())
        };
        let finding_counts = FindingCounts {
            builtin: builtin.len(),
            external: external.as_ref().map(Vec::len),
            primary: if external.is_some() {
                Origin::External
            } else {
                Origin::Builtin
            },
        };
        let primary = external.as_deref().unwrap_or(&builtin);
        let r_sec = score_security_with(primary, &self.config.severity_weights);

        let breakdown = self
            .config
            .reward_spec()
            .breakdown(stage, k, tests.len(), r_sec)?;

        let mut findings = builtin;
        findings.extend(external.unwrap_or_default());
        Ok(Judgment {
            breakdown,
            outcome,
            syntax,
            findings,
            finding_counts,
            analyzer_errors,
            per_test,
        })
    }
}
