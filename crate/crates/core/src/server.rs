//! Line-delimited JSON reward service for RL trainers.
//!
//! The first line a client sees is a greeting carrying the protocol version.
//! After that every request line gets exactly one response line, possibly
//! out of order; responses are matched by `request_id`.
//!
//! ```text
//! -> {"request_id": "a1", "code": "print(int(input())*2)", "tests": [{"input": "3", "expected": "6"}]}
//! -> {"request_id": "a2", "code": "...", "problem_ref": "p7", "config_overrides": {"mode": "binary"}}
//! -> {"request_id": "h", "health": true}
//! -> {"request_id": "bye", "shutdown": true}
//! <- {"request_id": "a1", "breakdown": {...}, "outcome": "pass", "findings": [], "per_test": [...]}
//! ```
//!
//! One reader and one writer per connection; judging happens on a shared
//! pool of `workers` threads fed through a queue of at most `queue_bound`
//! pending requests, so a fast client blocks instead of piling up work.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::ConfigOverrides;
use crate::dataset::{extract_code, Problem, TestCase};
use crate::executor::TestSummary;
use crate::judge::{Judge, JudgeError, Judgment};
use crate::reward::RewardBreakdown;
use crate::security::SecurityFinding;
use crate::taxonomy::OutcomeClass;

pub const PROTOCOL_VERSION: &str = "ladder-reward/1";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Where a request's tests come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TestSource {
    Inline(Vec<TestCase>),
    ProblemRef(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardRequest {
    pub request_id: String,
    pub code: String,
    pub tests: TestSource,
    pub config_overrides: Option<ConfigOverrides>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRequest {
    request_id: String,
    #[serde(default)]
    code: Option<String>,
    #[serde(default)]
    tests: Option<Vec<TestCase>>,
    #[serde(default)]
    problem_ref: Option<String>,
    #[serde(default)]
    config_overrides: Option<ConfigOverrides>,
    #[serde(default)]
    shutdown: bool,
    #[serde(default)]
    health: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl ErrorRecord {
    fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_owned(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResponse {
    pub request_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<RewardBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
    pub outcome: Option<OutcomeClass>,
    pub findings: Vec<SecurityFinding>,
    pub per_test: Vec<TestSummary>,
}

impl RewardResponse {
    pub fn from_judgment(request_id: String, j: Judgment) -> Self {
        Self {
            request_id: Some(request_id),
            breakdown: Some(j.breakdown),
            error: None,
            outcome: Some(j.outcome),
            findings: j.findings,
            per_test: j.per_test.iter().map(|t| t.summary()).collect(),
        }
    }

    pub fn failure(request_id: Option<String>, error: ErrorRecord) -> Self {
        Self {
            request_id,
            breakdown: None,
            error: Some(error),
            outcome: None,
            findings: Vec::new(),
            per_test: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Greeting {
    pub protocol: String,
    pub workers: usize,
    pub queue_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub uptime_ms: u64,
    pub pool_size: usize,
    pub queue_depth: usize,
    pub queue_bound: usize,
    pub in_flight: usize,
    pub judged: u64,
}

#[derive(Debug, Serialize)]
struct HealthResponse<'a> {
    request_id: &'a str,
    health: HealthStatus,
}

#[derive(Debug, Serialize)]
struct ShutdownAck<'a> {
    request_id: &'a str,
    shutdown: bool,
}

/// A parsed input line.
#[derive(Debug)]
enum Incoming {
    Judge(RewardRequest),
    Health(String),
    Shutdown(String),
}

fn parse_line(line: &str) -> Result<Incoming, (Option<String>, ErrorRecord)> {
    let value: Value = serde_json::from_str(line).map_err(|e| (None, ErrorRecord::new("parse", e.to_string())))?;
    let id = value.get("request_id").and_then(Value::as_str).map(str::to_owned);
    let wire: WireRequest =
        serde_json::from_value(value).map_err(|e| (id.clone(), ErrorRecord::new("invalid_request", e.to_string())))?;
    let invalid = |msg: &str| Err((Some(wire.request_id.clone()), ErrorRecord::new("invalid_request", msg)));

    if wire.shutdown {
        return Ok(Incoming::Shutdown(wire.request_id));
    }
    if wire.health {
        return Ok(Incoming::Health(wire.request_id));
    }
    let tests = match (wire.tests, wire.problem_ref) {
        (Some(_), Some(_)) => return invalid("give either `tests` or `problem_ref`, not both"),
        (None, None) => return invalid("missing `tests` or `problem_ref`"),
        (Some(t), None) if t.is_empty() => return invalid("`tests` is empty"),
        (Some(t), None) => TestSource::Inline(t),
        (None, Some(p)) => TestSource::ProblemRef(p),
    };
    let Some(code) = wire.code else {
        return invalid("missing `code`");
    };
    Ok(Incoming::Judge(RewardRequest {
        request_id: wire.request_id,
        code,
        tests,
        config_overrides: wire.config_overrides,
    }))
}

#[derive(Debug, Clone, Copy)]
pub struct ServerOptions {
    pub workers: usize,
    pub queue_bound: usize,
}

#[derive(Debug)]
struct Stats {
    started: Instant,
    judged: AtomicU64,
    in_flight: AtomicUsize,
}

struct Job {
    request_id: String,
    code: String,
    tests: Arc<Vec<TestCase>>,
    overrides: Option<ConfigOverrides>,
    reply: Sender<String>,
    pending: Arc<Mutex<HashSet<String>>>,
}

/// The long-running judge service.
pub struct RewardServer {
    problems: HashMap<String, Arc<Vec<TestCase>>>,
    options: ServerOptions,
    stats: Arc<Stats>,
    jobs: Option<Sender<Job>>,
    queue: Receiver<Job>,
    workers: Vec<thread::JoinHandle<()>>,
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("response serializes")
}

fn judge_error(e: &JudgeError) -> ErrorRecord {
    let kind = match e {
        JudgeError::Config(_) => "config",
        JudgeError::Exec(crate::executor::ExecError::ToolchainMissing(_)) => "config",
        JudgeError::Security(crate::security::SecurityError::ToolMissing(_)) => "config",
        _ => "judge",
    };
    ErrorRecord::new(kind, e.to_string())
}

fn run_job(judge: &Judge, job: &Job) -> RewardResponse {
    let reconfigured;
    let judge = match &job.overrides {
        None => judge,
        Some(o) => match judge.config().with_overrides(o).map_err(JudgeError::from).and_then(|c| judge.reconfigured(c)) {
            Ok(j) => {
                reconfigured = j;
                &reconfigured
            }
            Err(e) => return RewardResponse::failure(Some(job.request_id.clone()), judge_error(&e)),
        },
    };
    match judge.judge_source(extract_code(&job.code), &job.tests) {
        Ok(j) => RewardResponse::from_judgment(job.request_id.clone(), j),
        Err(e) => RewardResponse::failure(Some(job.request_id.clone()), judge_error(&e)),
    }
}

impl RewardServer {
    pub fn new(judge: Judge, problems: Vec<Problem>, options: ServerOptions) -> Self {
        let options = ServerOptions {
            workers: options.workers.max(1),
            queue_bound: options.queue_bound.max(1),
        };
        let judge = Arc::new(judge);
        let stats = Arc::new(Stats {
            started: Instant::now(),
            judged: AtomicU64::new(0),
            in_flight: AtomicUsize::new(0),
        });
        let (tx, rx) = bounded::<Job>(options.queue_bound);
        let workers = (0..options.workers)
            .map(|i| {
                let rx = rx.clone();
                let judge = Arc::clone(&judge);
                let stats = Arc::clone(&stats);
                thread::Builder::new()
                    .name(format!("judge-{i}"))
                    .spawn(move || {
                        for job in rx.iter() {
                            stats.in_flight.fetch_add(1, Ordering::SeqCst);
                            let response = run_job(&judge, &job);
                            stats.judged.fetch_add(1, Ordering::SeqCst);
                            stats.in_flight.fetch_sub(1, Ordering::SeqCst);
                            job.pending.lock().expect("pending set").remove(&job.request_id);
                            let _ = job.reply.send(to_line(&response));
                        }
                    })
                    .expect("spawn judge worker")
            })
            .collect();
        let problems = problems
            .into_iter()
            .map(|p| (p.id, Arc::new(p.tests)))
            .collect();
        Self {
            problems,
            options,
            stats,
            jobs: Some(tx),
            queue: rx,
            workers,
        }
    }

    pub fn greeting(&self) -> Greeting {
        Greeting {
            protocol: PROTOCOL_VERSION.to_owned(),
            workers: self.options.workers,
            queue_bound: self.options.queue_bound,
        }
    }

    pub fn healthcheck(&self) -> HealthStatus {
        HealthStatus {
            uptime_ms: self.stats.started.elapsed().as_millis() as u64,
            pool_size: self.options.workers,
            queue_depth: self.queue.len(),
            queue_bound: self.options.queue_bound,
            in_flight: self.stats.in_flight.load(Ordering::SeqCst),
            judged: self.stats.judged.load(Ordering::SeqCst),
        }
    }

    /// Serves one client until end of input or a shutdown request. Returns
    /// `true` when the client asked the server to shut down.
    pub fn serve_session<R, W>(&self, reader: R, writer: W) -> io::Result<bool>
    where
        R: BufRead,
        W: Write + Send + 'static,
    {
        let jobs = self.jobs.as_ref().expect("server is running");
        let (out_tx, out_rx) = unbounded::<String>();
        let writer_thread = thread::spawn(move || -> io::Result<W> {
            let mut writer = writer;
            for line in out_rx {
                writer.write_all(line.as_bytes())?;
                writer.write_all(b"\n")?;
                writer.flush()?;
            }
            Ok(writer)
        });
        out_tx.send(to_line(&self.greeting())).expect("writer alive");

        let pending: Arc<Mutex<HashSet<String>>> = Arc::default();
        let mut shutdown = None;
        for line in reader.lines() {
            let line = match line {
                Ok(l) => l,
                Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                    let _ = out_tx.send(to_line(&RewardResponse::failure(
                        None,
                        ErrorRecord::new("parse", "request line is not valid UTF-8"),
                    )));
                    continue;
                }
                Err(_) => break,
            };
            if line.trim().is_empty() {
                continue;
            }
            let request = match parse_line(&line) {
                Ok(Incoming::Judge(r)) => r,
                Ok(Incoming::Health(id)) => {
                    let _ = out_tx.send(to_line(&HealthResponse {
                        request_id: &id,
                        health: self.healthcheck(),
                    }));
                    continue;
                }
                Ok(Incoming::Shutdown(id)) => {
                    shutdown = Some(id);
                    break;
                }
                Err((id, err)) => {
                    let _ = out_tx.send(to_line(&RewardResponse::failure(id, err)));
                    continue;
                }
            };
            let fail = |kind: &str, msg: String| {
                let _ = out_tx.send(to_line(&RewardResponse::failure(
                    Some(request.request_id.clone()),
                    ErrorRecord::new(kind, msg),
                )));
            };
            let tests = match &request.tests {
                TestSource::Inline(t) => Arc::new(t.clone()),
                TestSource::ProblemRef(id) => match self.problems.get(id) {
                    Some(t) => Arc::clone(t),
                    None => {
                        fail("unknown_problem", format!("unknown problem_ref `{id}`"));
                        continue;
                    }
                },
            };
            if !pending.lock().expect("pending set").insert(request.request_id.clone()) {
                fail("duplicate_id", format!("request_id `{}` is already in flight", request.request_id));
                continue;
            }
            let job = Job {
                request_id: request.request_id,
                code: request.code,
                tests,
                overrides: request.config_overrides,
                reply: out_tx.clone(),
                pending: Arc::clone(&pending),
            };
            // blocks while the queue is full
            if jobs.send(job).is_err() {
                break;
            }
        }

        drop(out_tx);
        let mut writer = writer_thread.join().expect("writer thread")?;
        if let Some(id) = &shutdown {
            writer.write_all(to_line(&ShutdownAck { request_id: id, shutdown: true }).as_bytes())?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(shutdown.is_some())
    }

    /// Serves standard input/output until end of input or shutdown.
    pub fn serve_stdio(mut self) -> io::Result<()> {
        let stdin = io::stdin();
        self.serve_session(stdin.lock(), io::stdout())?;
        self.stop();
        Ok(())
    }

    /// Binds `addr` and serves each connection on its own session thread
    /// until some client sends a shutdown request.
    pub fn serve_tcp(self, addr: impl ToSocketAddrs + std::fmt::Debug) -> Result<(), ServerError> {
        let listener = self.bind(addr)?;
        self.serve_listener(listener)
    }

    pub fn bind(&self, addr: impl ToSocketAddrs + std::fmt::Debug) -> Result<TcpListener, ServerError> {
        let shown = format!("{addr:?}");
        TcpListener::bind(addr).map_err(|source| ServerError::Bind { addr: shown, source })
    }

    pub fn serve_listener(self, listener: TcpListener) -> Result<(), ServerError> {
        listener.set_nonblocking(true)?;
        let server = Arc::new(self);
        let stop = Arc::new(AtomicBool::new(false));
        let open: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
        let mut sessions = Vec::new();

        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    open.lock().expect("connection list").push(stream.try_clone()?);
                    let (server, stop, open) = (Arc::clone(&server), Arc::clone(&stop), Arc::clone(&open));
                    sessions.push(thread::spawn(move || {
                        let reader = BufReader::new(stream.try_clone()?);
                        if server.serve_session(reader, stream)? {
                            stop.store(true, Ordering::SeqCst);
                            for s in open.lock().expect("connection list").iter() {
                                let _ = s.shutdown(std::net::Shutdown::Read);
                            }
                        }
                        io::Result::Ok(())
                    }));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(20)),
                Err(e) => return Err(e.into()),
            }
        }
        for s in sessions {
            let _ = s.join();
        }
        // dropping the last handle stops the pool
        drop(server);
        Ok(())
    }

    /// Closes the queue and waits for the workers to finish.
    pub fn stop(&mut self) {
        self.jobs = None;
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for RewardServer {
    fn drop(&mut self) {
        self.stop();
    }
}
