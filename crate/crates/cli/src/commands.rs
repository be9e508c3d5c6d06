use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ladder_core::dataset::{load_generations, load_problems, Diagnostic};
use ladder_core::metrics::{compare_runs, render_csv, render_report, BatchReport, ReportFormat};
use ladder_core::security::{scan_external, score_security_with, ExternalAnalyzer, Origin, RuleTable};
use ladder_core::server::{RewardServer, ServerOptions};
use ladder_core::{
    aggregate, extract_code, EvalRecord, Judge, JudgeConfig, Judgment, Problem, SecurityFinding, TestCase,
};
use rayon::prelude::*;
use serde_json::json;

use crate::args::{Cli, Command, JudgeArgs, OutputFormat, ProblemArgs, ReportCommand, Transport};

pub fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli.judge)?;
    match cli.command {
        Command::Eval {
            code,
            problems,
            problem_id,
            input,
            expected,
            format,
        } => {
            let tests = eval_tests(&problems, problem_id.as_deref(), input, expected)?;
            eval(config, &code, &tests, format)
        }
        Command::Batch {
            problems,
            generations,
            out,
            records,
            format,
        } => batch(config, &problems, &generations, out.as_deref(), records.as_deref(), format),
        Command::Scan { code, format } => scan(&config, &code, format),
        Command::Serve {
            problems,
            transport,
            listen,
            queue_bound,
        } => serve(config, &problems, transport, &listen, queue_bound),
        Command::Report(cmd) => report(cmd),
    }
}

/// Defaults, then the config file, then environment and flags (clap has
/// already folded the environment into the flag values).
fn resolve_config(args: &JudgeArgs) -> Result<JudgeConfig> {
    let mut base = match &args.config {
        Some(path) => JudgeConfig::load(path)?,
        None => JudgeConfig::default(),
    };
    if let Some(rules) = &args.rules {
        base.rules_file = Some(rules.display().to_string());
    }
    Ok(base.with_overrides(&args.overrides())?)
}

fn warn(diagnostics: &[Diagnostic]) {
    for d in diagnostics {
        eprintln!("warning: {d}");
    }
}

fn read_problems(args: &ProblemArgs) -> Result<Vec<Problem>> {
    let path = args.problems.as_deref().ok_or_else(|| anyhow!("--problems is required"))?;
    let loaded = load_problems(path, args.problem_format)?;
    warn(&loaded.diagnostics);
    Ok(loaded.items)
}

fn eval_tests(
    problems: &ProblemArgs,
    problem_id: Option<&str>,
    input: Vec<String>,
    expected: Vec<String>,
) -> Result<Vec<TestCase>> {
    match problem_id {
        Some(id) => {
            if !input.is_empty() || !expected.is_empty() {
                bail!("give tests either with --problem-id or with --input/--expected, not both");
            }
            read_problems(problems)?
                .into_iter()
                .find(|p| p.id == id)
                .map(|p| p.tests)
                .ok_or_else(|| anyhow!("problem `{id}` not found"))
        }
        None => {
            if input.len() != expected.len() {
                bail!("{} --input values but {} --expected values", input.len(), expected.len());
            }
            if input.is_empty() {
                bail!("no tests: pass --input/--expected pairs or --problems with --problem-id");
            }
            Ok(input.into_iter().zip(expected).map(|(i, e)| TestCase::new(i, e)).collect())
        }
    }
}

fn read_code(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// The JSON document `eval` prints; the reward server sends the same
/// breakdown for the same inputs.
pub fn judgment_json(j: &Judgment) -> serde_json::Value {
    json!({
        "breakdown": j.breakdown,
        "outcome": j.outcome,
        "syntax": j.syntax,
        "findings": j.findings,
        "finding_counts": j.finding_counts,
        "analyzer_errors": j.analyzer_errors,
        "per_test": j.per_test.iter().map(|t| t.summary()).collect::<Vec<_>>(),
    })
}

fn eval(config: JudgeConfig, code: &Path, tests: &[TestCase], format: OutputFormat) -> Result<()> {
    let raw = read_code(code)?;
    let judge = Judge::new(config)?;
    let j = judge.judge_source(extract_code(&raw), tests)?;
    let text = match format {
        OutputFormat::Json => serde_json::to_string_pretty(&judgment_json(&j))? + "\n",
        OutputFormat::Text => eval_text(&j),
    };
    print!("{text}");
    Ok(())
}

fn eval_text(j: &Judgment) -> String {
    let b = &j.breakdown;
    let mut out = String::new();
    let _ = writeln!(out, "stage    {}", b.stage.as_str());
    let _ = writeln!(out, "outcome  {}", j.outcome.as_str());
    let _ = writeln!(out, "tests    {}/{}", b.k, b.total);
    let _ = writeln!(out, "mode     {}", b.mode);
    let _ = writeln!(out, "r_func   {}", b.r_func);
    let _ = writeln!(out, "r_sec    {}", b.r_sec);
    let _ = writeln!(out, "r        {}", b.r);
    if !j.syntax.valid {
        let _ = writeln!(out, "syntax   {}", j.syntax.diagnostic.trim_end());
    }
    for t in &j.per_test {
        let _ = writeln!(
            out,
            "  test {:<3} {:<15} {:>6} ms  {}",
            t.test_index,
            t.status.to_string(),
            t.duration_ms,
            if t.matched { "match" } else { "mismatch" }
        );
    }
    out.push_str(&findings_text(&j.findings));
    out
}

fn findings_text(findings: &[SecurityFinding]) -> String {
    let mut out = String::new();
    for f in findings {
        let origin = match f.origin {
            Origin::Builtin => "builtin",
            Origin::External => "external",
        };
        let _ = writeln!(
            out,
            "  {}:{} {} [{}] {}",
            origin,
            f.line,
            f.severity,
            f.rule_id,
            f.message
        );
    }
    out
}

fn batch(
    config: JudgeConfig,
    problem_args: &ProblemArgs,
    generations: &Path,
    out: Option<&Path>,
    records_out: Option<&Path>,
    format: ReportFormat,
) -> Result<()> {
    let problems = read_problems(problem_args)?;
    let candidates = load_generations(generations, &problems)?;
    warn(&candidates.diagnostics);
    if candidates.items.is_empty() {
        bail!("no (problem, candidate) pairs matched");
    }
    let by_id: HashMap<&str, &Problem> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count())
        .build()
        .context("cannot start worker pool")?;
    let judge = Judge::new(config)?;

    let mut records: Vec<EvalRecord> = pool.install(|| {
        candidates
            .items
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let problem = by_id[c.problem_id.as_str()];
                let j = judge
                    .judge(problem, c)
                    .with_context(|| format!("judging candidate {i} for `{}`", c.problem_id))?;
                Ok(EvalRecord {
                    problem_id: c.problem_id.clone(),
                    candidate: i,
                    breakdown: j.breakdown,
                    outcome: j.outcome,
                    builtin_findings: j.finding_counts.builtin,
                    external_findings: j.finding_counts.external,
                    primary_scanner: j.finding_counts.primary,
                })
            })
            .collect::<Result<_>>()
    })?;
    records.sort_by(|a, b| (&a.problem_id, a.candidate).cmp(&(&b.problem_id, b.candidate)));

    let report = aggregate(&records)?;
    if let Some(path) = out {
        write_file(path, &report.to_json())?;
    }
    if let Some(path) = records_out {
        let mut text = String::new();
        for r in &records {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    print!("{}", render_report(&report, format));
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn scan(config: &JudgeConfig, code: &Path, format: OutputFormat) -> Result<()> {
    let raw = read_code(code)?;
    let source = extract_code(&raw);
    let rules = match &config.rules_file {
        Some(path) => RuleTable::load(Path::new(path))?,
        None => RuleTable::builtin().clone(),
    };
    let builtin = rules.scan(source);
    let (external, tool_errors) = if config.scanner.external_is_primary() {
        let analyzer = ExternalAnalyzer {
            command: config.analyzer.command.clone(),
            args: config.analyzer.args.clone(),
            timeout_ms: config.analyzer.timeout_ms,
            adapter: ladder_core::security::AdapterTable {
                overrides: config.analyzer.severity_overrides.clone(),
            },
        };
        let scan = scan_external(source, &analyzer)?;
        (Some(scan.findings), scan.tool_errors)
    } else {
        (None, Vec::new())
    };
    let primary = if external.is_some() { "external" } else { "builtin" };
    let r_sec = score_security_with(external.as_deref().unwrap_or(&builtin), &config.severity_weights);
    let mut findings = builtin;
    findings.extend(external.unwrap_or_default());

    match format {
        OutputFormat::Json => {
            let doc = json!({
                "findings": findings,
                "primary": primary,
                "r_sec": r_sec,
                "analyzer_errors": tool_errors,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        OutputFormat::Text => {
            println!("findings {}", findings.len());
            print!("{}", findings_text(&findings));
            for e in &tool_errors {
                println!("  analyzer error: {e}");
            }
            println!("scanner  {primary}");
            println!("r_sec    {r_sec}");
        }
    }
    Ok(())
}

fn serve(
    config: JudgeConfig,
    problem_args: &ProblemArgs,
    transport: Transport,
    listen: &str,
    queue_bound: Option<usize>,
) -> Result<()> {
    let problems = match problem_args.problems {
        Some(_) => read_problems(problem_args)?,
        None => Vec::new(),
    };
    let workers = config.worker_count();
    let options = ServerOptions {
        workers,
        queue_bound: queue_bound.unwrap_or(2 * workers),
    };
    let server = RewardServer::new(Judge::new(config)?, problems, options);
    match transport {
        Transport::Stdio => server.serve_stdio()?,
        Transport::Tcp => {
            let listener = server.bind(listen)?;
            eprintln!("listening on {}", listener.local_addr()?);
            server.serve_listener(listener)?;
        }
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn load_report(path: &Path) -> Result<BatchReport> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    BatchReport::from_json(&text).with_context(|| format!("bad report {}", path.display()))
}

fn report(cmd: ReportCommand) -> Result<()> {
    match cmd {
        ReportCommand::Render { report, format } => {
            print!("{}", render_report(&load_report(&report)?, format));
        }
        ReportCommand::Compare { reports, format } => {
            let mut loaded = Vec::new();
            for spec in &reports {
                let (name, path) = match spec.split_once('=') {
                    Some((n, p)) => (n.to_owned(), PathBuf::from(p)),
                    None => {
                        let p = PathBuf::from(spec);
                        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        (stem, p)
                    }
                };
                loaded.push((name, load_report(&path)?));
            }
            let named: Vec<(&str, &BatchReport)> = loaded.iter().map(|(n, r)| (n.as_str(), r)).collect();
            match format {
                ReportFormat::Csv => print!("{}", render_csv(&named)),
                ReportFormat::Json => {
                    let map: serde_json::Map<String, serde_json::Value> = loaded
                        .iter()
                        .map(|(n, r)| Ok((n.clone(), serde_json::to_value(r)?)))
                        .collect::<Result<_>>()?;
                    println!("{}", serde_json::to_string_pretty(&map)?);
                }
                ReportFormat::Text => print!("{}", compare_runs(&named)?),
            }
        }
    }
    Ok(())
}
