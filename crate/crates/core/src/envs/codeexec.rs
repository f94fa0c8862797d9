//! Unit-test execution of candidate programs in an isolated interpreter.
//!
//! Each assertion runs in its own `python3 -I` process inside a fresh scratch
//! directory, with an empty environment, resource limits, a wall-clock
//! timeout that kills the whole process group, and capped output. The
//! harness disables sockets and refuses writes outside the scratch directory.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EnvError, Environment, Transition};
use crate::sync::Semaphore;
use crate::types::{Domain, Feedback, FeedbackDetails, ParsedAction, TestOutcome, Trajectory};

const HARNESS: &str = include_str!("../../assets/sandbox/harness.py");
const MARKER: &str = "__RERST_RESULT__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxLimits {
    pub timeout_secs: f64,
    pub output_cap_bytes: usize,
    pub memory_bytes: u64,
    /// Concurrent interpreter processes allowed across the whole run.
    pub pool_size: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self { timeout_secs: 5.0, output_cap_bytes: 64 << 20, memory_bytes: 1 << 30, pool_size: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub assert_text: String,
    pub passed: bool,
    pub observed: String,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub per_test: Vec<TestResult>,
    pub syntax_ok: bool,
}

impl TestReport {
    pub fn passed_count(&self) -> usize {
        self.per_test.iter().filter(|t| t.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        !self.per_test.is_empty() && self.per_test.iter().all(|t| t.passed)
    }
}

#[derive(Debug)]
pub struct Sandbox {
    python: PathBuf,
    limits: SandboxLimits,
    pool: Semaphore,
}

fn which(program: &str) -> Option<PathBuf> {
    if program.contains('/') {
        let p = PathBuf::from(program);
        return p.is_file().then_some(p);
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(program)).find(|p| p.is_file())
}

#[derive(Deserialize)]
struct HarnessOutput {
    #[serde(default)]
    syntax_error: Option<String>,
    #[serde(default)]
    passed: bool,
    #[serde(default)]
    observed: String,
}

enum RunOutcome {
    Finished(String),
    TimedOut,
    OutputExceeded,
}

fn kill_group(pid: u32) {
    // SAFETY: signalling a process group we created; failure is harmless.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

fn spawn_reader(mut src: impl Read + Send + 'static, cap: usize, pid: u32) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        let mut exceeded = false;
        loop {
            match src.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    if buf.len() + n > cap {
                        exceeded = true;
                        kill_group(pid);
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                }
            }
        }
        (buf, exceeded)
    })
}

impl Sandbox {
    /// Resolves the interpreter up front; a missing one is a configuration error.
    pub fn new(python: &str, limits: SandboxLimits) -> Result<Self, EnvError> {
        let python = which(python).ok_or_else(|| EnvError::SandboxUnavailable(python.to_string()))?;
        let pool = Semaphore::new(limits.pool_size.max(1));
        Ok(Self { python, limits, pool })
    }

    pub fn limits(&self) -> &SandboxLimits {
        &self.limits
    }

    fn spawn(&self, scratch: &Path) -> std::io::Result<Child> {
        let mem = self.limits.memory_bytes;
        let cpu = self.limits.timeout_secs.ceil() as u64 + 1;
        let fsize = self.limits.output_cap_bytes as u64;
        let mut cmd = Command::new(&self.python);
        cmd.arg("-I")
            .arg("-S")
            .arg(scratch.join("harness.py"))
            .arg(scratch)
            .current_dir(scratch)
            .env_clear()
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONHASHSEED", "0")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                libc::setpgid(0, 0);
                let set = |res, v: u64| {
                    let lim = libc::rlimit { rlim_cur: v as libc::rlim_t, rlim_max: v as libc::rlim_t };
                    libc::setrlimit(res, &lim);
                };
                set(libc::RLIMIT_AS, mem);
                set(libc::RLIMIT_CPU, cpu);
                set(libc::RLIMIT_FSIZE, fsize);
                set(libc::RLIMIT_CORE, 0);
                // Best effort: a private network namespace where permitted.
                libc::unshare(libc::CLONE_NEWNET);
                Ok(())
            });
        }
        cmd.spawn()
    }

    fn run_one(&self, program: &str, test: &str) -> Result<(RunOutcome, Duration), EnvError> {
        let _permit = self.pool.acquire();
        let scratch = tempfile::Builder::new().prefix("rerest-sbx").tempdir().map_err(EnvError::Io)?;
        std::fs::write(scratch.path().join("harness.py"), HARNESS).map_err(EnvError::Io)?;
        std::fs::write(scratch.path().join("program.py"), program).map_err(EnvError::Io)?;
        std::fs::write(scratch.path().join("test.py"), test).map_err(EnvError::Io)?;

        let started = Instant::now();
        let mut child = self.spawn(scratch.path()).map_err(EnvError::Io)?;
        let pid = child.id();
        let cap = self.limits.output_cap_bytes;
        let out = spawn_reader(child.stdout.take().expect("piped stdout"), cap, pid);
        let err = spawn_reader(child.stderr.take().expect("piped stderr"), cap, pid);

        let deadline = started + Duration::from_secs_f64(self.limits.timeout_secs);
        let mut timed_out = false;
        loop {
            if child.try_wait().map_err(EnvError::Io)?.is_some() {
                break;
            }
            if Instant::now() >= deadline {
                kill_group(pid);
                timed_out = true;
                let _ = child.wait();
                break;
            }
            thread::sleep(Duration::from_millis(5));
        }
        // Stray grandchildren may still hold the pipes open.
        kill_group(pid);
        let (stdout, out_exceeded) = out.join().unwrap_or_default();
        let (_, err_exceeded) = err.join().unwrap_or_default();
        let elapsed = started.elapsed();
        let outcome = if timed_out {
            RunOutcome::TimedOut
        } else if out_exceeded || err_exceeded {
            RunOutcome::OutputExceeded
        } else {
            RunOutcome::Finished(String::from_utf8_lossy(&stdout).into_owned())
        };
        Ok((outcome, elapsed))
    }

    /// Runs every assertion against `program`.
    pub fn run_candidate(&self, program: &str, tests: &[String]) -> Result<TestReport, EnvError> {
        let mut per_test = Vec::with_capacity(tests.len());
        for test in tests {
            let (outcome, elapsed) = self.run_one(program, test)?;
            let duration_ms = elapsed.as_millis() as u64;
            let (passed, observed) = match outcome {
                RunOutcome::TimedOut => (false, format!("Timeout: exceeded {} s", self.limits.timeout_secs)),
                RunOutcome::OutputExceeded => (false, "OutputLimit: output cap exceeded".to_string()),
                RunOutcome::Finished(stdout) => {
                    let parsed =
                        stdout.lines().rev().find_map(|l| l.strip_prefix(MARKER)).and_then(|json| serde_json::from_str::<HarnessOutput>(json).ok());
                    match parsed {
                        Some(HarnessOutput { syntax_error: Some(diag), .. }) => {
                            let per_test = tests
                                .iter()
                                .map(|t| TestResult { assert_text: t.clone(), passed: false, observed: diag.clone(), duration_ms: 0 })
                                .collect();
                            return Ok(TestReport { per_test, syntax_ok: false });
                        }
                        Some(h) => (h.passed, h.observed),
                        None => (false, "Crash: interpreter exited without a result".to_string()),
                    }
                }
            };
            per_test.push(TestResult { assert_text: test.clone(), passed, observed, duration_ms });
        }
        Ok(TestReport { per_test, syntax_ok: true })
    }
}

/// Feedback in the reflector's unit-test-results format.
pub fn code_feedback(report: &TestReport, threshold: f64) -> Feedback {
    let passed: Vec<&TestResult> = report.per_test.iter().filter(|t| t.passed).collect();
    let failed: Vec<&TestResult> = report.per_test.iter().filter(|t| !t.passed).collect();
    let mut verbal = String::from("Tested passed:\n");
    for t in &passed {
        verbal.push_str(&t.assert_text);
        verbal.push('\n');
    }
    verbal.push_str("\nTests failed:\n");
    let failed_lines: Vec<String> = failed.iter().map(|t| format!("{} # {}", t.assert_text, t.observed)).collect();
    verbal.push_str(&failed_lines.join("\n"));
    let total = report.per_test.len();
    let score = if total == 0 { 0.0 } else { passed.len() as f64 / total as f64 };
    let tests =
        report.per_test.iter().map(|t| TestOutcome { assert_text: t.assert_text.clone(), passed: t.passed, observed: t.observed.clone() }).collect();
    Feedback::from_score(score, threshold, verbal, FeedbackDetails::UnitTests { syntax_ok: report.syntax_ok, tests })
}

pub struct CodeEnv {
    sandbox: Arc<Sandbox>,
    tests: Vec<String>,
    threshold: f64,
    actions: usize,
}

impl CodeEnv {
    pub fn new(sandbox: Arc<Sandbox>, tests: Vec<String>, threshold: f64) -> Self {
        Self { sandbox, tests, threshold, actions: 0 }
    }
}

impl Environment for CodeEnv {
    fn domain(&self) -> Domain {
        Domain::Codeexec
    }

    fn step(&mut self, _action: &ParsedAction) -> Transition {
        self.actions += 1;
        Transition { observation: "Submission received.".into(), done: true }
    }

    fn evaluate(&mut self, traj: &Trajectory) -> Result<Feedback, EnvError> {
        match &traj.final_answer {
            Some(code) => Ok(code_feedback(&self.sandbox.run_candidate(code, &self.tests)?, self.threshold)),
            None => Ok(Feedback::failure(
                "No code was submitted; wrap the program in [PYTHON] and [/PYTHON] tags.",
                FeedbackDetails::UnitTests { syntax_ok: false, tests: Vec::new() },
            )),
        }
    }

    fn action_count(&self) -> usize {
        self.actions
    }
}
