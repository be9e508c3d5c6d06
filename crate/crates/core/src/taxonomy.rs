//! Failure taxonomy: one outcome label per judged candidate.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{RunStatus, SyntaxReport, TestExecution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    Pass,
    WrongOutput,
    NoOutput,
    Timeout,
    Crash,
    MemoryError,
    SyntaxError,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 7] = [
        Self::Pass,
        Self::WrongOutput,
        Self::NoOutput,
        Self::Timeout,
        Self::Crash,
        Self::MemoryError,
        Self::SyntaxError,
    ];

    pub fn is_failure(self) -> bool {
        self != Self::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::WrongOutput => "wrong_output",
            Self::NoOutput => "no_output",
            Self::Timeout => "timeout",
            Self::Crash => "crash",
            Self::MemoryError => "memory_error",
            Self::SyntaxError => "syntax_error",
        }
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("contract violation: {0}")]
pub struct ContractViolation(pub &'static str);

/// Labels a candidate. Priority: syntax error, pass, memory, timeout, crash,
/// no output, wrong output.
///
/// `no_output` needs every completed run to be silent; a program that prints
/// on any test is `wrong_output`.
pub fn classify(syntax: &SyntaxReport, runs: &[TestExecution]) -> Result<OutcomeClass, ContractViolation> {
    if !syntax.valid {
        return Ok(OutcomeClass::SyntaxError);
    }
    if runs.is_empty() {
        return Err(ContractViolation("no runs for a syntactically valid candidate"));
    }
    let any = |s: RunStatus| runs.iter().any(|r| r.status == s);
    let class = if runs.iter().all(|r| r.matched) {
        OutcomeClass::Pass
    } else if any(RunStatus::KilledMemory) {
        OutcomeClass::MemoryError
    } else if any(RunStatus::KilledTimeout) {
        OutcomeClass::Timeout
    } else if any(RunStatus::ExitedNonzero) {
        OutcomeClass::Crash
    } else if !runs.iter().any(TestExecution::has_output) {
        OutcomeClass::NoOutput
    } else {
        OutcomeClass::WrongOutput
    };
    Ok(class)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyDistribution {
    /// Every class appears, zero counts included.
    pub counts: BTreeMap<OutcomeClass, usize>,
    pub failures: usize,
    /// Share of each failure class among failures; absent when nothing failed.
    pub failure_shares: Option<BTreeMap<OutcomeClass, f64>>,
}

impl TaxonomyDistribution {
    pub fn count(&self, class: OutcomeClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn share(&self, class: OutcomeClass) -> Option<f64> {
        self.failure_shares.as_ref()?.get(&class).copied()
    }
}

pub fn aggregate_taxonomy<I>(classes: I) -> TaxonomyDistribution
where
    I: IntoIterator<Item = OutcomeClass>,
{
    let mut counts: BTreeMap<OutcomeClass, usize> = OutcomeClass::ALL.iter().map(|&c| (c, 0)).collect();
    for class in classes {
        *counts.entry(class).or_default() += 1;
    }
    let failures: usize = counts
        .iter()
        .filter(|(c, _)| c.is_failure())
        .map(|(_, n)| n)
        .sum();
    let failure_shares = (failures > 0).then(|| {
        counts
            .iter()
            .filter(|(c, _)| c.is_failure())
            .map(|(&c, &n)| (c, n as f64 / failures as f64))
            .collect()
    });
    TaxonomyDistribution {
        counts,
        failures,
        failure_shares,
    }
}
