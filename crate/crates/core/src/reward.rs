//! Functional reward (staged partial credit or strict quotient) and the
//! combined scalar `R = alpha * R_func + beta * R_sec`.
//!
//! The partial-credit ladder:
//!
//! | stage | condition                       | `R_func`            |
//! |-------|---------------------------------|---------------------|
//! | s0    | syntax error / not runnable     | 0.0                 |
//! | s1    | parses                          | 0.2                 |
//! | s2    | executes without runtime error  | 0.4                 |
//! | s3    | produces any stdout             | 0.6                 |
//! | s4    | passes k of T tests, k >= 1     | 0.6 + 0.4 * k / T   |
//!
//! The rung scores are configurable through [`StageScores`]; the s4 line
//! always runs from the s3 score up to 1.0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{RunStatus, SyntaxReport, TestExecution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("weights must be non-negative and sum to 1 (alpha={alpha}, beta={beta})")]
    Weights { alpha: f64, beta: f64 },
    #[error("stage scores must satisfy 0 <= s1 <= s2 <= s3 < 1, got {0:?}")]
    StageScores([f64; 3]),
    #[error("k={k} is out of range for T={total}")]
    Count { k: usize, total: usize },
    #[error("stage {stage} is inconsistent with k={k}")]
    StageMismatch { stage: Stage, k: usize },
    #[error("reward component {name}={value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("contract violation: {0}")]
    Contract(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
        }
    }
}

impl RewardWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, RewardError> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let ok = self.alpha >= 0.0 && self.beta >= 0.0 && (self.alpha + self.beta - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(RewardError::Weights {
                alpha: self.alpha,
                beta: self.beta,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "s0_syntax_error")]
    S0SyntaxError,
    #[serde(rename = "s1_valid_syntax")]
    S1ValidSyntax,
    #[serde(rename = "s2_runs")]
    S2Runs,
    #[serde(rename = "s3_output")]
    S3Output,
    #[serde(rename = "s4_tests")]
    S4Tests,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Self::S0SyntaxError,
        Self::S1ValidSyntax,
        Self::S2Runs,
        Self::S3Output,
        Self::S4Tests,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::S0SyntaxError => "s0_syntax_error",
            Self::S1ValidSyntax => "s1_valid_syntax",
            Self::S2Runs => "s2_runs",
            Self::S3Output => "s3_output",
            Self::S4Tests => "s4_tests",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    #[default]
    Partial,
    Binary,
}

impl FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "partial" => Ok(Self::Partial),
            "binary" => Ok(Self::Binary),
            other => Err(format!("unknown reward mode `{other}` (partial|binary)")),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Partial => "partial",
            Self::Binary => "binary",
        })
    }
}

/// How per-test outcomes lift a candidate onto s2/s3.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StagingPolicy {
    /// One clean run is enough for s2, one clean run with output for s3.
    #[default]
    AnyTest,
    /// Every run must be clean (s2) and every run must print (s3).
    AllTests,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageScores {
    pub valid_syntax: f64,
    pub runs: f64,
    pub output: f64,
}

impl Default for StageScores {
    fn default() -> Self {
        Self {
            valid_syntax: 0.2,
            runs: 0.4,
            output: 0.6,
        }
    }
}

impl StageScores {
    pub fn validate(&self) -> Result<(), RewardError> {
        let s = [self.valid_syntax, self.runs, self.output];
        let ok = s.iter().all(|v| v.is_finite()) && 0.0 <= s[0] && s[0] <= s[1] && s[1] <= s[2] && s[2] < 1.0;
        if ok {
            Ok(())
        } else {
            Err(RewardError::StageScores(s))
        }
    }

    /// The s4 line evaluated at any k, including the unreachable k = 0 where
    /// it meets the s3 score.
    pub fn tests_line(&self, k: usize, total: usize) -> f64 {
        self.output + (1.0 - self.output) * (k as f64 / total as f64)
    }
}

/// Result of scoring one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub stage: Stage,
    pub k: usize,
    #[serde(rename = "T")]
    pub total: usize,
    pub r_func: f64,
    pub r_sec: f64,
    pub r: f64,
    pub mode: RewardMode,
}

/// Places a candidate on the ladder. `k` is the number of matched runs.
pub fn stage_of(syntax: &SyntaxReport, runs: &[TestExecution], policy: StagingPolicy) -> Result<Stage, RewardError> {
    if !syntax.valid {
        return Ok(Stage::S0SyntaxError);
    }
    if runs.is_empty() {
        return Err(RewardError::Contract("no runs for a syntactically valid candidate"));
    }
    if runs.iter().any(|r| r.matched) {
        return Ok(Stage::S4Tests);
    }
    let clean = |r: &TestExecution| r.status == RunStatus::ExitedZero;
    let (ran, printed) = match policy {
        StagingPolicy::AnyTest => (
            runs.iter().any(clean),
            runs.iter().any(TestExecution::has_output),
        ),
        StagingPolicy::AllTests => (
            runs.iter().all(clean),
            runs.iter().all(TestExecution::has_output),
        ),
    };
    Ok(if printed {
        Stage::S3Output
    } else if ran {
        Stage::S2Runs
    } else {
        Stage::S1ValidSyntax
    })
}

fn check_counts(k: usize, total: usize) -> Result<(), RewardError> {
    if total == 0 || k > total {
        return Err(RewardError::Count { k, total });
    }
    Ok(())
}

/// Partial-credit `R_func` with the default rung scores.
pub fn r_func_partial(stage: Stage, k: usize, total: usize) -> Result<f64, RewardError> {
    r_func_partial_with(stage, k, total, &StageScores::default())
}

pub fn r_func_partial_with(stage: Stage, k: usize, total: usize, scores: &StageScores) -> Result<f64, RewardError> {
    check_counts(k, total)?;
    if (stage == Stage::S4Tests) != (k >= 1) {
        return Err(RewardError::StageMismatch { stage, k });
    }
    Ok(match stage {
        Stage::S0SyntaxError => 0.0,
        Stage::S1ValidSyntax => scores.valid_syntax,
        Stage::S2Runs => scores.runs,
        Stage::S3Output => scores.output,
        Stage::S4Tests => scores.tests_line(k, total),
    })
}

/// Strict `R_func = k / T`.
pub fn r_func_binary(k: usize, total: usize) -> Result<f64, RewardError> {
    check_counts(k, total)?;
    Ok(k as f64 / total as f64)
}

/// `alpha * r_func + beta * r_sec`.
pub fn combine(r_func: f64, r_sec: f64, w: &RewardWeights) -> Result<f64, RewardError> {
    for (name, value) in [("r_func", r_func), ("r_sec", r_sec)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(RewardError::OutOfRange { name, value });
        }
    }
    w.validate()?;
    Ok((w.alpha * r_func + w.beta * r_sec).clamp(0.0, 1.0))
}

/// Everything needed to turn a stage, counts and `R_sec` into a breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardSpec {
    pub weights: RewardWeights,
    pub scores: StageScores,
    pub mode: RewardMode,
}

impl RewardSpec {
    pub fn breakdown(&self, stage: Stage, k: usize, total: usize, r_sec: f64) -> Result<RewardBreakdown, RewardError> {
        let r_func = match self.mode {
            RewardMode::Partial => r_func_partial_with(stage, k, total, &self.scores)?,
            RewardMode::Binary => {
                if (stage == Stage::S4Tests) != (k >= 1) {
                    return Err(RewardError::StageMismatch { stage, k });
                }
                r_func_binary(k, total)?
            }
        };
        let r = combine(r_func, r_sec, &self.weights)?;
        Ok(RewardBreakdown {
            stage,
            k,
            total,
            r_func,
            r_sec,
            r,
            mode: self.mode,
        })
    }
}
