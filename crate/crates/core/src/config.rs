//! Declarative judge configuration (TOML) and partial overrides.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{ComparePolicy, ExecutionLimits, Toolchain};
use crate::reward::{RewardMode, RewardSpec, RewardWeights, StageScores, StagingPolicy};
use crate::security::{AdapterTable, SeverityWeights};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScannerChoice {
    #[default]
    Builtin,
    External,
    Both,
}

impl ScannerChoice {
    /// Whether `R_sec` comes from the external analyzer.
    pub fn external_is_primary(self) -> bool {
        matches!(self, Self::External | Self::Both)
    }
}

impl FromStr for ScannerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin" => Ok(Self::Builtin),
            "external" => Ok(Self::External),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown scanner `{other}` (builtin|external|both)")),
        }
    }
}

/// External analyzer settings as they appear in the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerConfig {
    pub command: String,
    pub args: Vec<String>,
    pub timeout_ms: u64,
    pub severity_overrides: std::collections::BTreeMap<String, crate::security::Severity>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            command: "bandit".into(),
            args: vec!["-q".into(), "-f".into(), "json".into()],
            timeout_ms: 60_000,
            severity_overrides: AdapterTable::default().overrides,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    pub mode: RewardMode,
    pub weights: RewardWeights,
    pub stage_scores: StageScores,
    pub strict_stages: bool,
    pub limits: ExecutionLimits,
    pub compare: ComparePolicy,
    pub scanner: ScannerChoice,
    pub severity_weights: SeverityWeights,
    /// Optional declarative rules file replacing the builtin table.
    pub rules_file: Option<String>,
    pub toolchain: Toolchain,
    pub analyzer: AnalyzerConfig,
    /// Hardened mode: run candidates without network access.
    pub no_network: bool,
    /// Worker pool size; 0 means one per logical CPU.
    pub workers: usize,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            mode: RewardMode::Partial,
            weights: RewardWeights::default(),
            stage_scores: StageScores::default(),
            strict_stages: false,
            limits: ExecutionLimits::default(),
            compare: ComparePolicy::Strict,
            scanner: ScannerChoice::Builtin,
            severity_weights: SeverityWeights::default(),
            rules_file: None,
            toolchain: Toolchain::default(),
            analyzer: AnalyzerConfig::default(),
            no_network: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl JudgeConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.weights.validate().map_err(|e| invalid(e.to_string()))?;
        self.stage_scores.validate().map_err(|e| invalid(e.to_string()))?;
        self.limits.validate().map_err(invalid)?;
        self.severity_weights.validate().map_err(invalid)?;
        if self.toolchain.interpreter.trim().is_empty() {
            return Err(invalid("toolchain interpreter is empty".into()));
        }
        if self.scanner.external_is_primary() && self.analyzer.command.trim().is_empty() {
            return Err(invalid("external scanner selected but analyzer command is empty".into()));
        }
        Ok(())
    }

    pub fn staging(&self) -> StagingPolicy {
        if self.strict_stages {
            StagingPolicy::AllTests
        } else {
            StagingPolicy::AnyTest
        }
    }

    pub fn reward_spec(&self) -> RewardSpec {
        RewardSpec {
            weights: self.weights,
            scores: self.stage_scores,
            mode: self.mode,
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    /// Applies `overrides` on top of `self` and re-validates the result.
    pub fn with_overrides(&self, overrides: &ConfigOverrides) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        if let Some(v) = overrides.mode {
            c.mode = v;
        }
        if let Some(v) = overrides.alpha {
            c.weights.alpha = v;
        }
        if let Some(v) = overrides.beta {
            c.weights.beta = v;
        }
        if let Some(v) = overrides.wall_ms {
            c.limits.wall_ms = v;
        }
        if let Some(v) = overrides.mem_bytes {
            c.limits.mem_bytes = v;
        }
        if let Some(v) = overrides.max_output_bytes {
            c.limits.max_output_bytes = v;
        }
        if let Some(v) = overrides.compare {
            c.compare = v;
        }
        if let Some(v) = overrides.scanner {
            c.scanner = v;
        }
        if let Some(v) = overrides.strict_stages {
            c.strict_stages = v;
        }
        if let Some(v) = overrides.no_network {
            c.no_network = v;
        }
        if let Some(v) = &overrides.interpreter {
            c.toolchain.interpreter = v.clone();
        }
        if let Some(v) = overrides.workers {
            c.workers = v;
        }
        c.validate()?;
        Ok(c)
    }
}

/// A sparse set of config changes, used by CLI flags and per-request
/// overrides on the reward server.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverrides {
    pub mode: Option<RewardMode>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub wall_ms: Option<u64>,
    pub mem_bytes: Option<u64>,
    pub max_output_bytes: Option<usize>,
    pub compare: Option<ComparePolicy>,
    pub scanner: Option<ScannerChoice>,
    pub strict_stages: Option<bool>,
    pub no_network: Option<bool>,
    pub interpreter: Option<String>,
    pub workers: Option<usize>,
}
