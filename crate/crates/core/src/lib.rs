//! Staged partial-credit judge for stdin/stdout programs.
//!
//! A candidate program is checked for syntax, run once per test case under
//! resource limits, classified into a failure taxonomy, scanned for risky
//! constructs, and scored with
//!
//! ```text
//! R = alpha * R_func + beta * R_sec
//! ```
//!
//! where `R_func` climbs a five-rung ladder (syntax error, valid syntax, runs,
//! emits output, passes tests) instead of the sparse pass/fail quotient.
//!
//! Everything that spawns processes (the executor, the external analyzer
//! adapter, [`judge`] and [`server`]) sits behind the default `process`
//! feature. With it disabled the crate is pure and builds for `wasm32`.

pub mod config;
pub mod dataset;
pub mod executor;
pub mod metrics;
pub mod reward;
pub mod security;
pub mod taxonomy;

#[cfg(feature = "process")]
pub mod judge;
#[cfg(feature = "process")]
pub mod server;

pub use config::{ConfigError, ConfigOverrides, JudgeConfig, ScannerChoice};
pub use dataset::{extract_code, CandidateProgram, Problem, ProblemFormat, TestCase};
pub use executor::{
    compare_output, ComparePolicy, ExecutionLimits, RunStatus, SyntaxReport, TestExecution,
    Toolchain,
};
pub use metrics::{aggregate, BatchReport, EvalRecord};
pub use reward::{RewardBreakdown, RewardMode, RewardWeights, Stage, StageScores, StagingPolicy};
pub use security::{score_security, scan_builtin, SecurityFinding, Severity};
pub use taxonomy::{classify, OutcomeClass, TaxonomyDistribution};

#[cfg(feature = "process")]
pub use judge::{Judge, JudgeError, Judgment};
