//! Browser demo: the pure half of the judge compiled to WebAssembly.
//!
//! Three operations are exported, each taking plain values and returning a
//! JSON string for `www/app.js` to render:
//!
//! - [`reward_ladder`]: every rung of the partial-credit ladder next to the
//!   binary reward, for a chosen `k`, `T`, weights and finding counts
//! - [`scan_source`]: builtin security findings and `R_sec` for pasted code
//! - [`compare_outputs`]: strict and token comparison of two outputs, plus
//!   the code extracted from a fenced model response
//!
//! Running candidates needs processes, so nothing here executes code.

use ladder_core::dataset::extract_code;
use ladder_core::executor::{compare_output, normalize_output, ComparePolicy};
use ladder_core::reward::{combine, r_func_binary, r_func_partial_with, RewardWeights, Stage, StageScores};
use ladder_core::security::{mask_source, scan_builtin, score_security, Origin, SecurityFinding, Severity};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Rung {
    stage: &'static str,
    /// `k` this rung is evaluated at (0 below s4).
    k: usize,
    r_func_partial: f64,
    r_func_binary: f64,
    r_partial: f64,
    r_binary: f64,
}

#[derive(Serialize)]
struct Ladder {
    alpha: f64,
    beta: f64,
    r_sec: f64,
    rungs: Vec<Rung>,
}

fn synthetic_findings(high: usize, medium: usize, low: usize) -> Vec<SecurityFinding> {
    [(Severity::High, high), (Severity::Medium, medium), (Severity::Low, low)]
        .into_iter()
        .flat_map(|(severity, n)| {
            (0..n).map(move |i| SecurityFinding {
                rule_id: format!("{severity}-{i}"),
                severity,
                line: 0,
                message: String::new(),
                origin: Origin::Builtin,
            })
        })
        .collect()
}

pub fn ladder_json(alpha: f64, k: usize, total: usize, high: usize, medium: usize, low: usize) -> Result<String, String> {
    let weights = RewardWeights::new(alpha, 1.0 - alpha).map_err(|e| e.to_string())?;
    if total == 0 || k > total {
        return Err(format!("need 0 <= k <= T and T >= 1 (k={k}, T={total})"));
    }
    let r_sec = score_security(&synthetic_findings(high, medium, low));
    let scores = StageScores::default();
    let mut rungs = Vec::new();
    for stage in Stage::ALL {
        let k = match stage {
            Stage::S4Tests if k == 0 => continue,
            Stage::S4Tests => k,
            _ => 0,
        };
        let partial = r_func_partial_with(stage, k, total, &scores).map_err(|e| e.to_string())?;
        let binary = r_func_binary(k, total).map_err(|e| e.to_string())?;
        rungs.push(Rung {
            stage: stage.as_str(),
            k,
            r_func_partial: partial,
            r_func_binary: binary,
            r_partial: combine(partial, r_sec, &weights).map_err(|e| e.to_string())?,
            r_binary: combine(binary, r_sec, &weights).map_err(|e| e.to_string())?,
        });
    }
    let ladder = Ladder {
        alpha: weights.alpha,
        beta: weights.beta,
        r_sec,
        rungs,
    };
    Ok(serde_json::to_string(&ladder).expect("ladder serializes"))
}

#[derive(Serialize)]
struct Scan {
    findings: Vec<SecurityFinding>,
    r_sec: f64,
    /// Source with comments and string bodies blanked, as the rules see it.
    masked: String,
}

pub fn scan_json(source: &str) -> String {
    let code = extract_code(source);
    let findings = scan_builtin(code);
    let scan = Scan {
        r_sec: score_security(&findings),
        findings,
        masked: mask_source(code),
    };
    serde_json::to_string(&scan).expect("scan serializes")
}

#[derive(Serialize)]
struct Comparison {
    strict: bool,
    token: bool,
    normalized_actual: String,
    normalized_expected: String,
    extracted: String,
}

/// `actual` may be a whole model response; the fenced code (if any) is
/// shown as `extracted`, the comparison itself uses `actual` as typed.
pub fn compare_json(actual: &str, expected: &str) -> String {
    let cmp = Comparison {
        strict: compare_output(actual, expected, ComparePolicy::Strict),
        token: compare_output(actual, expected, ComparePolicy::Token),
        normalized_actual: normalize_output(actual),
        normalized_expected: normalize_output(expected),
        extracted: extract_code(actual).to_owned(),
    };
    serde_json::to_string(&cmp).expect("comparison serializes")
}

#[wasm_bindgen]
pub fn reward_ladder(alpha: f64, k: u32, total: u32, high: u32, medium: u32, low: u32) -> Result<String, JsValue> {
    ladder_json(alpha, k as usize, total as usize, high as usize, medium as usize, low as usize)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn scan_source(source: &str) -> String {
    scan_json(source)
}

#[wasm_bindgen]
pub fn compare_outputs(actual: &str, expected: &str) -> String {
    compare_json(actual, expected)
}
