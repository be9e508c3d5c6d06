//! The ten acceptance criteria, one PASS/FAIL line each. Runs without the
//! libtest harness so the lines are always printed.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use ladder_core::executor::Executor;
use ladder_core::judge::Judge;
use ladder_core::metrics::BatchReport;
use ladder_core::reward::{combine, r_func_binary, r_func_partial};
use ladder_core::security::{parse_report, score_security, AdapterTable, Origin};
use ladder_core::{
    classify, scan_builtin, ComparePolicy, ExecutionLimits, JudgeConfig, OutcomeClass, RewardWeights, RunStatus,
    SecurityFinding, Severity, Stage, SyntaxReport, TestCase, TestExecution, Toolchain,
};
use serde_json::{json, Value};

const EPS: f64 = 1e-9;
const LISTING_A: &str = "# Reads input and computes, but produces NO OUTPUT\nn = int(input())\n(n * 2)   # expression is evaluated and discarded\n";
const LISTING_B: &str = "n = int(input())\nprint(\"Result:\", n * 2)   # wrong format for a judge\n";
const LISTING_C: &str = "formula = \"a + b\"\nout = eval(formula)  # risky shortcut; Bandit flags this pattern\n";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ladder(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ladder"))
        .args(args)
        .env_clear()
        .env("PATH", std::env::var_os("PATH").unwrap_or_default())
        .output()
        .expect("spawn ladder");
    assert!(
        out.status.success(),
        "ladder {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < EPS
}

fn within(limit: Duration, start: Instant) {
    let took = start.elapsed();
    assert!(took < limit, "took {took:?}, limit {limit:?}");
}

fn judge() -> Judge {
    Judge::new(JudgeConfig::default()).unwrap()
}

/// Correct on the first `k` of `inputs`, silent-wrong on the rest.
fn correct_on_first(k: usize, inputs: &[i64]) -> String {
    let good: Vec<String> = inputs[..k].iter().map(|n| n.to_string()).collect();
    format!(
        "n = int(input())\nprint(n * 2 if n in ({}) else n)\n",
        good.join(", ") + ","
    )
}

fn reward_table() {
    let start = Instant::now();
    let inputs = [1, 2, 3, 4];
    let tests: Vec<TestCase> = inputs.iter().map(|n| TestCase::new(n.to_string(), (n * 2).to_string())).collect();
    let mut fixtures: Vec<(String, Stage, f64)> = vec![
        ("def f(:".into(), Stage::S0SyntaxError, 0.0),
        ("raise SystemExit(1)".into(), Stage::S1ValidSyntax, 0.2),
        (LISTING_A.into(), Stage::S2Runs, 0.4),
        (LISTING_B.into(), Stage::S3Output, 0.6),
    ];
    for (k, want) in [(1, 0.7), (2, 0.8), (3, 0.9), (4, 1.0)] {
        fixtures.push((correct_on_first(k, &inputs), Stage::S4Tests, want));
    }
    let judge = judge();
    thread::scope(|s| {
        let handles: Vec<_> = fixtures
            .iter()
            .map(|(src, stage, want)| {
                let (judge, tests) = (&judge, &tests);
                s.spawn(move || {
                    let j = judge.judge_source(src, tests).unwrap();
                    let b = j.breakdown;
                    assert_eq!(b.stage, *stage, "{src}");
                    let r = r_func_partial(b.stage, b.k, b.total).unwrap();
                    assert!(close(r, *want), "{stage:?} k={} -> {r}, want {want}", b.k);
                    assert!(close(b.r_func, *want));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    });
    within(Duration::from_secs(1), start);
}

fn combined_reward() {
    let w = RewardWeights::default();
    assert_eq!((w.alpha, w.beta), (0.6, 0.4));
    for (f, s, want) in [(0.0, 1.0, 0.40), (0.6, 1.0, 0.76), (1.0, 1.0, 1.0)] {
        let r = combine(f, s, &w).unwrap();
        assert!(close(r, want), "combine({f}, {s}) = {r}");
    }
}

fn listings() {
    let start = Instant::now();
    let tests = [TestCase::new("3", "6")];
    let judge = judge();
    let a = judge.judge_source(LISTING_A, &tests).unwrap();
    assert_eq!(a.outcome, OutcomeClass::NoOutput);
    assert_eq!(a.breakdown.stage, Stage::S2Runs);
    assert!(close(a.breakdown.r_func, 0.4));

    let b = judge.judge_source(LISTING_B, &tests).unwrap();
    assert_eq!(b.outcome, OutcomeClass::WrongOutput);
    assert_eq!(b.breakdown.stage, Stage::S3Output);
    assert!(close(b.breakdown.r_func, 0.6));

    let c = scan_builtin(LISTING_C);
    assert_eq!(c.len(), 1);
    assert_eq!((c[0].rule_id.as_str(), c[0].severity), ("eval", Severity::High));
    assert!(close(score_security(&c), 0.4));
    within(Duration::from_secs(10), start);
}

fn dominance() {
    let start = Instant::now();
    let mut checked = 0;
    for stage in Stage::ALL {
        for total in 1..=20 {
            for k in 0..=total {
                let Ok(partial) = r_func_partial(stage, k, total) else {
                    // only reachable (stage, k) pairs: s4 needs k >= 1, lower rungs k = 0
                    assert_eq!(stage == Stage::S4Tests, k == 0);
                    continue;
                };
                let binary = r_func_binary(k, total).unwrap();
                assert!(partial >= binary, "{stage:?} k={k} T={total}");
                let equal = partial == binary;
                assert_eq!(equal, k == total || stage == Stage::S0SyntaxError, "{stage:?} k={k} T={total}");
                checked += 1;
            }
        }
    }
    // 4 lower rungs x 20 values of T, plus sum_{T=1}^{20} T pairs on s4
    assert_eq!(checked, 4 * 20 + 210);
    within(Duration::from_secs(1), start);
}

fn run(status: RunStatus, stdout: &str, matched: bool) -> TestExecution {
    TestExecution {
        test_index: 0,
        stdout: stdout.into(),
        stderr: String::new(),
        stdout_truncated: false,
        status,
        exit_code: None,
        duration_ms: 0,
        matched,
        scratch_dir: None,
    }
}

fn taxonomy() {
    let start = Instant::now();
    let dir = fixtures().join("taxonomy");
    let records = tempfile::NamedTempFile::new().unwrap();
    let out = ladder(&[
        "--wall-ms",
        "1000",
        "batch",
        "--problems",
        dir.join("problems.jsonl").to_str().unwrap(),
        "--generations",
        dir.join("generations.jsonl").to_str().unwrap(),
        "--records",
        records.path().to_str().unwrap(),
        "--format",
        "json",
    ]);
    let report = BatchReport::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let t = &report.taxonomy;
    let want = [
        (OutcomeClass::WrongOutput, 12, 0.60),
        (OutcomeClass::NoOutput, 5, 0.25),
        (OutcomeClass::Timeout, 2, 0.10),
        (OutcomeClass::Crash, 1, 0.05),
    ];
    for (class, count, share) in want {
        assert_eq!(t.count(class), count, "{class:?}");
        assert!(close(t.share(class).unwrap(), share), "{class:?}");
    }
    assert_eq!(t.count(OutcomeClass::Pass), 5);
    assert_eq!(t.failures, 20);

    let expected: BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap();
    let got: BTreeMap<String, String> = std::fs::read_to_string(records.path())
        .unwrap()
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["problem_id"].as_str().unwrap().to_owned(), v["outcome"].as_str().unwrap().to_owned())
        })
        .collect();
    assert_eq!(got, expected);

    // mixed outcomes inside one candidate
    let valid = SyntaxReport::valid();
    let cases = [
        (vec![run(RunStatus::KilledTimeout, "", false), run(RunStatus::ExitedNonzero, "", false)], OutcomeClass::Timeout),
        (vec![run(RunStatus::KilledMemory, "", false), run(RunStatus::KilledTimeout, "", false)], OutcomeClass::MemoryError),
        (vec![run(RunStatus::ExitedNonzero, "", false), run(RunStatus::ExitedZero, "", false)], OutcomeClass::Crash),
        (vec![run(RunStatus::ExitedZero, "", false), run(RunStatus::ExitedZero, "5", false)], OutcomeClass::WrongOutput),
        (vec![run(RunStatus::ExitedZero, "6", true), run(RunStatus::ExitedNonzero, "", false)], OutcomeClass::Crash),
    ];
    for (runs, want) in cases {
        assert_eq!(classify(&valid, &runs).unwrap(), want);
    }
    // and once for real: crashes on 1, hangs on 2
    let mut cfg = JudgeConfig::default();
    cfg.limits.wall_ms = 1000;
    let src = "n = int(input())\nif n == 1:\n    raise RuntimeError\nwhile True:\n    pass\n";
    let j = Judge::new(cfg)
        .unwrap()
        .judge_source(src, &[TestCase::new("1", "1"), TestCase::new("2", "2")])
        .unwrap();
    assert_eq!(j.outcome, OutcomeClass::Timeout);
    within(Duration::from_secs(60), start);
}

fn metrics_parity() {
    let dir = fixtures().join("corpus");
    let problems = dir.join("problems.jsonl");
    let generations = dir.join("generations");
    let args = |format: &'static str| {
        vec![
            "batch".to_owned(),
            "--problems".into(),
            problems.display().to_string(),
            "--generations".into(),
            generations.display().to_string(),
            "--format".into(),
            format.into(),
        ]
    };
    let run = |format| {
        let a = args(format);
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        String::from_utf8(ladder(&a).stdout).unwrap()
    };
    let report = BatchReport::from_json(&run("json")).unwrap();
    assert_eq!(report.n, 20);
    assert_eq!(report.any_test_pass_pct, 5.0);
    assert_eq!(report.syntax_valid_pct, 60.0);

    let text = run("text");
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[..3], ["run", "60.0", "5.0"], "{text}");
}

fn limits() {
    let limits = ExecutionLimits::new(1000, 256 << 20, 1 << 20).unwrap();
    let ex = Executor::new(Toolchain::default(), limits, ComparePolicy::Strict);
    for i in 0..10 {
        let r = ex.run_one(0, "while True: pass", &TestCase::new("", "1")).unwrap();
        assert_eq!(r.status, RunStatus::KilledTimeout, "repetition {i}");
        assert!((1000..=1500).contains(&r.duration_ms), "repetition {i}: {} ms", r.duration_ms);
    }
    let small = ExecutionLimits::new(5000, 64 << 20, 1 << 20).unwrap();
    let ex = Executor::new(Toolchain::default(), small, ComparePolicy::Strict);
    for bomb in [
        "x = bytearray(1 << 30)\nprint('ok')\n",
        "xs = []\nwhile True:\n    xs.append(' ' * (1 << 20))\n",
    ] {
        let r = ex.run_one(0, bomb, &TestCase::new("", "ok")).unwrap();
        assert!(!r.matched);
        assert_ne!(r.status, RunStatus::ExitedZero);
    }
}

fn server() {
    let start = Instant::now();
    let programs = [
        "print(int(input()) * 2)",
        LISTING_A,
        LISTING_B,
        "```python\nformula = 'n * 2'\nn = int(input())\nprint(eval(formula))\n```",
    ];
    let tests = json!([{"input": "3", "expected": "6"}, {"input": "5", "expected": "10"}]);

    let mut child = Command::new(env!("CARGO_BIN_EXE_ladder"))
        .args(["--workers", "4", "serve", "--queue-bound", "4"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let stdout = BufReader::new(child.stdout.take().unwrap());
    let reader = thread::spawn(move || stdout.lines().map(|l| l.unwrap()).collect::<Vec<_>>());
    for i in 0..16 {
        if i == 8 {
            writeln!(stdin, "{{not json").unwrap();
        }
        let req = json!({"request_id": format!("req-{i}"), "code": programs[i % programs.len()], "tests": tests});
        writeln!(stdin, "{req}").unwrap();
    }
    drop(stdin);
    let lines = reader.join().unwrap();
    assert!(child.wait().unwrap().success());

    let greeting: Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(greeting["protocol"], "ladder-reward/1");
    let responses: Vec<Value> = lines[1..].iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(responses.len(), 17);
    let errors: Vec<&Value> = responses.iter().filter(|r| r.get("error").is_some()).collect();
    assert_eq!(errors.len(), 1);
    assert!(errors[0]["request_id"].is_null());
    let mut ids: Vec<&str> = responses.iter().filter_map(|r| r["request_id"].as_str()).collect();
    ids.sort();
    let mut want: Vec<String> = (0..16).map(|i| format!("req-{i}")).collect();
    want.sort();
    assert_eq!(ids, want);

    // CLI eval on the same inputs must produce the identical breakdown
    let dir = tempfile::tempdir().unwrap();
    let mut cli: HashMap<usize, Value> = HashMap::new();
    for (p, code) in programs.iter().enumerate() {
        let path = dir.path().join(format!("c{p}.py"));
        std::fs::write(&path, code).unwrap();
        let out = ladder(&[
            "eval",
            path.to_str().unwrap(),
            "--input",
            "3",
            "--expected",
            "6",
            "--input",
            "5",
            "--expected",
            "10",
            "--format",
            "json",
        ]);
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        cli.insert(p, v["breakdown"].clone());
    }
    for r in responses.iter().filter(|r| r.get("breakdown").is_some()) {
        let i: usize = r["request_id"].as_str().unwrap()["req-".len()..].parse().unwrap();
        let cli_b = &cli[&(i % programs.len())];
        assert_eq!(&r["breakdown"], cli_b, "request {i}");
        for field in ["r", "r_func", "r_sec"] {
            let (a, b) = (r["breakdown"][field].as_f64().unwrap(), cli_b[field].as_f64().unwrap());
            assert_eq!(a.to_bits(), b.to_bits(), "request {i} {field}");
        }
    }
    within(Duration::from_secs(30), start);
}

fn finding(severity: Severity) -> SecurityFinding {
    SecurityFinding {
        rule_id: "x".into(),
        severity,
        line: 1,
        message: String::new(),
        origin: Origin::Builtin,
    }
}

fn security() {
    // every sequence of up to 6 findings: appending one never raises the score
    let sev = [Severity::Low, Severity::Medium, Severity::High];
    let mut frontier: Vec<Vec<SecurityFinding>> = vec![vec![]];
    for _ in 0..6 {
        let mut next = Vec::new();
        for base in &frontier {
            let before = score_security(base);
            assert!((0.0..=1.0).contains(&before));
            for s in sev {
                let mut grown = base.clone();
                grown.push(finding(s));
                assert!(score_security(&grown) <= before);
                next.push(grown);
            }
        }
        frontier = next;
    }

    let clean = "n = int(input())\nprint(n * 2)\n";
    assert!(scan_builtin(clean).is_empty());
    assert_eq!(score_security(&scan_builtin(clean)), 1.0);
    assert_eq!(score_security(&[]), 1.0);

    let raw = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/bandit/many.json"),
    )
    .unwrap();
    let parsed = parse_report(&raw, &AdapterTable::default()).unwrap();
    let got: Vec<(&str, Severity)> = parsed.findings.iter().map(|f| (f.rule_id.as_str(), f.severity)).collect();
    let want = [
        ("B403", Severity::Low),
        ("B404", Severity::Low),
        ("B307", Severity::High),
        ("B102", Severity::High),
        ("B602", Severity::High),
        ("B607", Severity::Low),
        ("B301", Severity::High),
        ("B324", Severity::Medium),
        ("B506", Severity::Medium),
        ("B306", Severity::Medium),
        ("B101", Severity::Low),
    ];
    assert_eq!(got, want);
}

fn determinism() {
    let dir = fixtures().join("corpus");
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for i in 0..2 {
        let out = tmp.path().join(format!("report{i}.json"));
        let records = tmp.path().join(format!("records{i}.jsonl"));
        ladder(&[
            "--workers",
            "4",
            "batch",
            "--problems",
            dir.join("problems.jsonl").to_str().unwrap(),
            "--generations",
            dir.join("generations").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--records",
            records.to_str().unwrap(),
        ]);
        reports.push((std::fs::read(&out).unwrap(), std::fs::read(&records).unwrap()));
    }
    assert_eq!(reports[0].0, reports[1].0, "reports differ");
    assert_eq!(reports[0].1, reports[1].1, "records differ");
}

fn main() -> ExitCode {
    let criteria: [(&str, fn()); 10] = [
        ("reward-table exactness", reward_table),
        ("combined reward arithmetic", combined_reward),
        ("listing reproduction", listings),
        ("partial dominates binary", dominance),
        ("taxonomy oracle", taxonomy),
        ("metrics parity", metrics_parity),
        ("limit enforcement", limits),
        ("server correctness", server),
        ("security scoring properties", security),
        ("batch determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.2} s)", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL {:>2} {name} ({secs:.2} s): {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
