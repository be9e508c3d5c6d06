//! Subprocess execution under wall-clock, address-space and output limits.
//!
//! Each run gets a fresh scratch directory as its working directory, an
//! environment reduced to `PATH`, `HOME`, `LANG` and `TMPDIR`, and its own
//! process group so a timeout kills everything the candidate spawned.
//! Memory is capped with `RLIMIT_AS`; running out of it is recognised from
//! the interpreter's error output or an external SIGKILL, which is
//! best-effort by nature.

use std::io::{self, Read, Write};
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{judge_match, ComparePolicy, ExecutionLimits, RunStatus, SyntaxReport, TestExecution, Toolchain};
use crate::dataset::TestCase;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("interpreter `{0}` not found")]
    ToolchainMissing(String),
    #[error("sandbox setup failed ({context}): {source}")]
    Sandbox {
        context: &'static str,
        #[source]
        source: io::Error,
    },
    #[error("run_all called with no tests")]
    NoTests,
}

fn sandbox(context: &'static str) -> impl FnOnce(io::Error) -> ExecError {
    move |source| ExecError::Sandbox { context, source }
}

/// Output of [`run_captured`].
#[derive(Debug, Clone)]
pub struct Captured {
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub stdout_truncated: bool,
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub duration: Duration,
}

impl Captured {
    pub fn exit_code(&self) -> Option<i32> {
        self.status.and_then(|s| s.code())
    }

    pub fn signal(&self) -> Option<i32> {
        #[cfg(unix)]
        {
            use std::os::unix::process::ExitStatusExt;
            self.status.and_then(|s| s.signal())
        }
        #[cfg(not(unix))]
        {
            None
        }
    }

    pub fn success(&self) -> bool {
        !self.timed_out && self.status.is_some_and(|s| s.success())
    }
}

/// Resource caps applied in the child before `exec`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ChildLimits {
    pub mem_bytes: Option<u64>,
    pub cpu_secs: Option<u64>,
    pub no_network: bool,
}

#[cfg(unix)]
fn apply_child_limits(cmd: &mut Command, limits: ChildLimits) {
    use std::os::unix::process::CommandExt;

    cmd.process_group(0);
    // SAFETY: the closure runs between fork and exec and only makes
    // async-signal-safe system calls.
    unsafe {
        cmd.pre_exec(move || {
            let set = |resource, value: u64| {
                let lim = libc::rlimit {
                    rlim_cur: value as libc::rlim_t,
                    rlim_max: value as libc::rlim_t,
                };
                if libc::setrlimit(resource, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
                Ok(())
            };
            set(libc::RLIMIT_CORE, 0)?;
            if let Some(bytes) = limits.mem_bytes {
                set(libc::RLIMIT_AS, bytes)?;
            }
            if let Some(secs) = limits.cpu_secs {
                set(libc::RLIMIT_CPU, secs)?;
            }
            if limits.no_network {
                isolate_network()?;
            }
            Ok(())
        });
    }
}

#[cfg(not(unix))]
fn apply_child_limits(_cmd: &mut Command, _limits: ChildLimits) {}

#[cfg(target_os = "linux")]
fn isolate_network() -> io::Result<()> {
    // SAFETY: plain syscalls in the forked child.
    unsafe {
        if libc::unshare(libc::CLONE_NEWNET) == 0 {
            return Ok(());
        }
        if libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET) == 0 {
            return Ok(());
        }
    }
    Err(io::Error::last_os_error())
}

#[cfg(all(unix, not(target_os = "linux")))]
fn isolate_network() -> io::Result<()> {
    Err(io::Error::new(
        io::ErrorKind::Unsupported,
        "network isolation is only available on Linux",
    ))
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // SAFETY: signalling our own child's process group.
        unsafe {
            libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

fn drain<R: Read + Send + 'static>(mut pipe: R, cap: usize) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match pipe.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        (kept, truncated)
    })
}

/// Spawns `cmd`, feeds `stdin`, and waits at most `wall`. Output beyond
/// `cap` bytes per stream is discarded and flagged.
pub fn run_captured(cmd: Command, stdin: &[u8], wall: Duration, cap: usize) -> io::Result<Captured> {
    run_limited(cmd, stdin, wall, cap, ChildLimits::default())
}

pub(crate) fn run_limited(
    mut cmd: Command,
    stdin: &[u8],
    wall: Duration,
    cap: usize,
    limits: ChildLimits,
) -> io::Result<Captured> {
    cmd.stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    apply_child_limits(&mut cmd, limits);

    let start = Instant::now();
    let mut child = cmd.spawn()?;

    let mut pipe_in = child.stdin.take().expect("stdin piped");
    let input = stdin.to_vec();
    let writer = thread::spawn(move || {
        // the candidate may exit without reading; a broken pipe is expected
        let _ = pipe_in.write_all(&input);
    });
    let out = drain(child.stdout.take().expect("stdout piped"), cap);
    let err = drain(child.stderr.take().expect("stderr piped"), cap);

    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        let elapsed = start.elapsed();
        if elapsed >= wall {
            kill_tree(&mut child);
            timed_out = true;
            break child.wait().ok();
        }
        thread::sleep((wall - elapsed).min(Duration::from_millis(2)));
    };
    let duration = start.elapsed();
    // reap anything the candidate left behind so the pipes close
    kill_tree(&mut child);

    let (stdout, stdout_truncated) = out.join().unwrap_or_default();
    let (stderr, _) = err.join().unwrap_or_default();
    let _ = writer.join();

    Ok(Captured {
        stdout,
        stderr,
        stdout_truncated,
        status,
        timed_out,
        duration,
    })
}

const MEMORY_MARKERS: [&str; 4] = [
    "MemoryError",
    "Cannot allocate memory",
    "out of memory",
    "std::bad_alloc",
];

fn classify_exit(captured: &Captured, stderr: &str) -> RunStatus {
    if captured.timed_out {
        return RunStatus::KilledTimeout;
    }
    if captured.success() {
        return RunStatus::ExitedZero;
    }
    if MEMORY_MARKERS.iter().any(|m| stderr.contains(m)) {
        return RunStatus::KilledMemory;
    }
    #[cfg(unix)]
    if captured.signal() == Some(libc::SIGKILL) {
        // we did not send it, so it came from the kernel's OOM handling
        return RunStatus::KilledMemory;
    }
    RunStatus::ExitedNonzero
}

/// Runs candidate sources for one toolchain under fixed limits.
///
/// `Executor` is `Sync`; concurrent calls each own their subprocess and
/// scratch directory.
#[derive(Debug, Clone, Default)]
pub struct Executor {
    pub toolchain: Toolchain,
    pub limits: ExecutionLimits,
    pub compare: ComparePolicy,
    /// Put each run in an empty network namespace (Linux only).
    pub no_network: bool,
}

impl Executor {
    pub fn new(toolchain: Toolchain, limits: ExecutionLimits, compare: ComparePolicy) -> Self {
        Self {
            toolchain,
            limits,
            compare,
            no_network: false,
        }
    }

    fn command(&self, scratch: &Path) -> Command {
        let mut cmd = Command::new(&self.toolchain.interpreter);
        cmd.current_dir(scratch).env_clear();
        let path = std::env::var_os("PATH").unwrap_or_else(|| "/usr/local/bin:/usr/bin:/bin".into());
        cmd.env("PATH", path)
            .env("HOME", scratch)
            .env("LANG", "C.UTF-8")
            .env("TMPDIR", scratch);
        cmd
    }

    fn child_limits(&self) -> ChildLimits {
        ChildLimits {
            mem_bytes: Some(self.limits.mem_bytes),
            cpu_secs: Some(self.limits.wall_ms.div_ceil(1000) + 1),
            no_network: self.no_network,
        }
    }

    fn spawn_error(&self, e: io::Error) -> ExecError {
        if e.kind() == io::ErrorKind::NotFound {
            ExecError::ToolchainMissing(self.toolchain.interpreter.clone())
        } else {
            ExecError::Sandbox {
                context: "spawn",
                source: e,
            }
        }
    }

    fn scratch() -> Result<tempfile::TempDir, ExecError> {
        tempfile::Builder::new()
            .prefix("ladder-run-")
            .tempdir()
            .map_err(sandbox("scratch directory"))
    }

    /// Compile-only check; the candidate's code is never executed.
    pub fn check_syntax(&self, source: &str) -> Result<SyntaxReport, ExecError> {
        let scratch = Self::scratch()?;
        let mut cmd = self.command(scratch.path());
        cmd.args(&self.toolchain.syntax_args);
        let captured = run_limited(
            cmd,
            source.as_bytes(),
            Duration::from_millis(self.limits.wall_ms),
            self.limits.max_output_bytes,
            ChildLimits {
                no_network: false,
                ..self.child_limits()
            },
        )
        .map_err(|e| self.spawn_error(e))?;

        if captured.success() {
            return Ok(SyntaxReport::valid());
        }
        if captured.timed_out {
            return Ok(SyntaxReport::invalid("syntax check timed out"));
        }
        let stderr = String::from_utf8_lossy(&captured.stderr);
        let diagnostic = stderr
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .map(str::trim)
            .map(str::to_owned)
            .unwrap_or_else(|| match captured.exit_code() {
                Some(code) => format!("syntax check exited with status {code}"),
                None => "syntax check terminated by signal".to_owned(),
            });
        Ok(SyntaxReport::invalid(diagnostic))
    }

    /// Runs `source` once with `test.input` on stdin.
    ///
    /// The caller must have seen a valid [`SyntaxReport`] for `source`.
    pub fn run_one(&self, test_index: usize, source: &str, test: &TestCase) -> Result<TestExecution, ExecError> {
        let scratch = Self::scratch()?;
        let source_path = scratch.path().join(&self.toolchain.source_name);
        std::fs::write(&source_path, source).map_err(sandbox("write source"))?;

        let mut cmd = self.command(scratch.path());
        cmd.args(&self.toolchain.run_args).arg(&source_path);
        let captured = run_limited(
            cmd,
            test.input.as_bytes(),
            Duration::from_millis(self.limits.wall_ms),
            self.limits.max_output_bytes,
            self.child_limits(),
        )
        .map_err(|e| self.spawn_error(e))?;

        let stdout = String::from_utf8_lossy(&captured.stdout).into_owned();
        let stderr = String::from_utf8_lossy(&captured.stderr).into_owned();
        let status = classify_exit(&captured, &stderr);
        let matched = judge_match(status, &stdout, &test.expected, self.compare);
        let scratch_dir = scratch.path().to_owned();
        // removal failure (e.g. the candidate chmod'ed its files) is not the candidate's verdict
        let _ = scratch.close();

        Ok(TestExecution {
            test_index,
            stdout,
            stderr,
            stdout_truncated: captured.stdout_truncated,
            status,
            exit_code: captured.exit_code(),
            duration_ms: captured.duration.as_millis() as u64,
            matched,
            scratch_dir: Some(scratch_dir),
        })
    }

    /// One fresh process per test, in test order. Tests are never skipped.
    pub fn run_all(&self, source: &str, tests: &[TestCase]) -> Result<Vec<TestExecution>, ExecError> {
        if tests.is_empty() {
            return Err(ExecError::NoTests);
        }
        tests
            .iter()
            .enumerate()
            .map(|(i, t)| self.run_one(i, source, t))
            .collect()
    }
}
