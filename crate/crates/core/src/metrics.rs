//! Corpus-level aggregation and report rendering.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{RewardBreakdown, Stage};
use crate::security::Origin;
use crate::taxonomy::{aggregate_taxonomy, OutcomeClass, TaxonomyDistribution};

pub const REPORT_SCHEMA: &str = "ladder-report/1";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot aggregate an empty record list")]
    Empty,
    #[error("comparison needs at least two reports, got {0}")]
    TooFewReports(usize),
    #[error("malformed report: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported report schema `{0}`")]
    Schema(String),
}

/// One judged (problem, candidate) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub problem_id: String,
    /// Position of the candidate in the generations input.
    pub candidate: usize,
    pub breakdown: RewardBreakdown,
    pub outcome: OutcomeClass,
    pub builtin_findings: usize,
    #[serde(default)]
    pub external_findings: Option<usize>,
    pub primary_scanner: Origin,
}

impl EvalRecord {
    pub fn primary_findings(&self) -> usize {
        match self.primary_scanner {
            Origin::Builtin => self.builtin_findings,
            Origin::External => self.external_findings.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub schema: String,
    pub n: usize,
    pub syntax_valid_pct: f64,
    pub any_test_pass_pct: f64,
    pub all_tests_pass_pct: f64,
    pub security_clean_pct: f64,
    pub mean_r_func: f64,
    pub mean_r_sec: f64,
    pub mean_r: f64,
    /// `builtin`, `external`, or `mixed` when records disagree.
    pub primary_scanner: String,
    pub taxonomy: TaxonomyDistribution,
}

fn pct(count: usize, n: usize) -> f64 {
    count as f64 * 100.0 / n as f64
}

/// Order-independent mean: values are sorted before summation.
fn mean(mut values: Vec<f64>) -> f64 {
    let n = values.len() as f64;
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / n
}

pub fn aggregate(records: &[EvalRecord]) -> Result<BatchReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = records.len();
    let count = |pred: &dyn Fn(&EvalRecord) -> bool| records.iter().filter(|r| pred(r)).count();

    let primary_scanner = {
        let first = records[0].primary_scanner;
        if records.iter().all(|r| r.primary_scanner == first) {
            first.to_string()
        } else {
            "mixed".to_owned()
        }
    };

    Ok(BatchReport {
        schema: REPORT_SCHEMA.to_owned(),
        n,
        syntax_valid_pct: pct(count(&|r| r.breakdown.stage >= Stage::S1ValidSyntax), n),
        any_test_pass_pct: pct(count(&|r| r.breakdown.k >= 1), n),
        all_tests_pass_pct: pct(count(&|r| r.breakdown.k == r.breakdown.total), n),
        security_clean_pct: pct(count(&|r| r.primary_findings() == 0), n),
        mean_r_func: mean(records.iter().map(|r| r.breakdown.r_func).collect()),
        mean_r_sec: mean(records.iter().map(|r| r.breakdown.r_sec).collect()),
        mean_r: mean(records.iter().map(|r| r.breakdown.r).collect()),
        primary_scanner,
        taxonomy: aggregate_taxonomy(records.iter().map(|r| r.outcome)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "table" => Ok(Self::Text),
            "json" | "structured" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format `{other}` (text|json|csv)")),
        }
    }
}

impl BatchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema != REPORT_SCHEMA {
            return Err(MetricsError::Schema(report.schema));
        }
        Ok(report)
    }
}

const CSV_HEADER: [&str; 10] = [
    "model",
    "n",
    "syntax_valid_pct",
    "any_test_pass_pct",
    "all_tests_pass_pct",
    "security_clean_pct",
    "mean_r_func",
    "mean_r_sec",
    "mean_r",
    "primary_scanner",
];

fn csv_row(label: &str, r: &BatchReport) -> [String; 10] {
    [
        label.to_owned(),
        r.n.to_string(),
        format!("{:.1}", r.syntax_valid_pct),
        format!("{:.1}", r.any_test_pass_pct),
        format!("{:.1}", r.all_tests_pass_pct),
        format!("{:.1}", r.security_clean_pct),
        format!("{:.2}", r.mean_r_func),
        format!("{:.2}", r.mean_r_sec),
        format!("{:.2}", r.mean_r),
        r.primary_scanner.clone(),
    ]
}

/// Renders labelled reports as CSV: a header and one row per report.
pub fn render_csv(reports: &[(&str, &BatchReport)]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("write to memory");
    for (label, r) in reports {
        w.write_record(csv_row(label, r)).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

fn table_row(label: &str, cells: &[String], widths: &[usize]) -> String {
    let mut line = format!("{label:<w$}", w = widths[0]);
    for (cell, w) in cells.iter().zip(&widths[1..]) {
        let _ = write!(line, "  {cell:>w$}");
    }
    line.trim_end().to_owned()
}

const TABLE_HEADERS: [&str; 5] = ["Model", "Syntax %", ">=1 Test Pass %", "Security %", "Mean R"];

fn table_cells(r: &BatchReport) -> Vec<String> {
    vec![
        format!("{:.1}", r.syntax_valid_pct),
        format!("{:.1}", r.any_test_pass_pct),
        format!("{:.1}", r.security_clean_pct),
        format!("{:.2}", r.mean_r),
    ]
}

pub fn render_report(report: &BatchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => render_csv(&[("run", report)]),
        ReportFormat::Text => render_text(report),
    }
}

fn render_text(r: &BatchReport) -> String {
    let cells = table_cells(r);
    let widths: Vec<usize> = std::iter::once(5)
        .chain(TABLE_HEADERS[1..].iter().zip(&cells).map(|(h, c)| h.len().max(c.len())))
        .collect();
    let header: Vec<String> = TABLE_HEADERS[1..].iter().map(|h| h.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{}", table_row(TABLE_HEADERS[0], &header, &widths));
    let _ = writeln!(out, "{}", table_row("run", &cells, &widths));
    let _ = writeln!(out);
    let _ = writeln!(out, "n                  {}", r.n);
    let _ = writeln!(out, "all tests pass %   {:.1}", r.all_tests_pass_pct);
    let _ = writeln!(out, "mean R_func        {:.2}", r.mean_r_func);
    let _ = writeln!(out, "mean R_sec         {:.2}", r.mean_r_sec);
    let _ = writeln!(out, "security scanner   {}", r.primary_scanner);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<14} {:>5} {:>8}", "outcome", "count", "share %");
    for class in OutcomeClass::ALL {
        let share = r
            .taxonomy
            .share(class)
            .map_or_else(|| "-".to_owned(), |s| format!("{:.1}", s * 100.0));
        let _ = writeln!(out, "{:<14} {:>5} {:>8}", class.as_str(), r.taxonomy.count(class), share);
    }
    out
}

/// Side-by-side table of named reports. A column's best value is marked with
/// `*` only when a single report holds it at display precision.
pub fn compare_runs(reports: &[(&str, &BatchReport)]) -> Result<String, MetricsError> {
    if reports.len() < 2 {
        return Err(MetricsError::TooFewReports(reports.len()));
    }
    let headers = ["Model", "Syntax %", ">=1 Test Pass %", "All Pass %", "Security %", "Mean R"];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|(_, r)| {
            vec![
                format!("{:.1}", r.syntax_valid_pct),
                format!("{:.1}", r.any_test_pass_pct),
                format!("{:.1}", r.all_tests_pass_pct),
                format!("{:.1}", r.security_clean_pct),
                format!("{:.2}", r.mean_r),
            ]
        })
        .collect();

    let mut marked = rows.clone();
    for col in 0..headers.len() - 1 {
        let values: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap_or(f64::NAN)).collect();
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let holders: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
        if let [only] = holders[..] {
            marked[only][col].push('*');
        }
    }

    let label_w = reports.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(headers[0].len());
    let mut widths = vec![label_w];
    for col in 0..headers.len() - 1 {
        let w = marked.iter().map(|r| r[col].len()).max().unwrap_or(0).max(headers[col + 1].len());
        widths.push(w);
    }
    let header_cells: Vec<String> = headers[1..].iter().map(|h| h.to_string()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{}", table_row(headers[0], &header_cells, &widths));
    for ((label, _), row) in reports.iter().zip(&marked) {
        let _ = writeln!(out, "{}", table_row(label, row, &widths));
    }
    Ok(out)
}
