//! Candidate execution against I/O test cases and Pass@k scoring.

mod passk;
pub mod sandbox;

use std::fs;
use std::os::unix::process::ExitStatusExt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SourceText, TestCase};
pub use passk::{pass_at_k, score_runs, PassKReport, ReportCounts};
use sandbox::RunOutcome;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("sandbox error: {0}")]
    Sandbox(String),
    #[error("pass@k undefined for n={n}, c={c}, k={k}")]
    Domain { n: u64, c: u64, k: u64 },
    #[error("k values must be positive and nonempty")]
    InvalidK,
    #[error("problem {problem_id:?} has {n} samples, fewer than k={k}")]
    InsufficientSamples { problem_id: String, n: u64, k: u64 },
    #[error("no runs to score")]
    EmptyReport,
    #[error("problem {0:?} appears in more than one run")]
    DuplicateProblem(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    #[serde(with = "secs_f64")]
    pub wall_time: Duration,
    /// Address-space limit in bytes.
    pub memory: u64,
    /// Maximum stdout bytes before the run is cut off.
    pub output_cap: u64,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            wall_time: Duration::from_secs(10),
            memory: 512 * 1024 * 1024,
            output_cap: 8 * 1024 * 1024,
        }
    }
}

impl ExecLimits {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.wall_time.is_zero() || self.memory == 0 || self.output_cap == 0 {
            return Err(JudgeError::Sandbox("execution limits must be positive".into()));
        }
        Ok(())
    }
}

mod secs_f64 {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

/// How to run a source file: an executable plus an argv template in which
/// `{file}` is replaced by the path of the written source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Interpreter {
    pub program: String,
    pub args: Vec<String>,
    pub source_file: String,
    /// Language ids this interpreter accepts; empty accepts any.
    pub language_ids: Vec<String>,
}

impl Default for Interpreter {
    fn default() -> Self {
        Self {
            program: "python3".into(),
            args: vec!["-I".into(), "{file}".into()],
            source_file: "main.py".into(),
            language_ids: vec!["python".into(), "python3".into(), "py".into()],
        }
    }
}

impl Interpreter {
    /// Absolute path of the interpreter executable.
    pub fn resolve(&self) -> Result<PathBuf, JudgeError> {
        let candidate = Path::new(&self.program);
        if candidate.components().count() > 1 {
            return if candidate.is_file() {
                Ok(candidate.to_path_buf())
            } else {
                Err(JudgeError::Sandbox(format!("interpreter {} not found", self.program)))
            };
        }
        std::env::var_os("PATH")
            .iter()
            .flat_map(std::env::split_paths)
            .map(|dir| dir.join(&self.program))
            .find(|p| p.is_file())
            .ok_or_else(|| JudgeError::Sandbox(format!("interpreter {:?} not on PATH", self.program)))
    }

    fn accepts(&self, language_id: &str) -> bool {
        self.language_ids.is_empty() || self.language_ids.iter().any(|l| l.eq_ignore_ascii_case(language_id))
    }

    fn argv(&self, file: &Path) -> Vec<String> {
        let file = file.to_string_lossy();
        self.args.iter().map(|a| a.replace("{file}", &file)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    WrongAnswer { case: usize },
    RuntimeError { case: usize, detail: String },
    Timeout { case: usize },
    OutputLimit { case: usize },
    SandboxError { detail: String },
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }

    pub fn failed_case(&self) -> Option<usize> {
        match self {
            Verdict::WrongAnswer { case }
            | Verdict::RuntimeError { case, .. }
            | Verdict::Timeout { case }
            | Verdict::OutputLimit { case } => Some(*case),
            Verdict::Accepted | Verdict::SandboxError { .. } => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Accepted => "AC",
            Verdict::WrongAnswer { .. } => "WA",
            Verdict::RuntimeError { .. } => "RE",
            Verdict::Timeout { .. } => "TLE",
            Verdict::OutputLimit { .. } => "OLE",
            Verdict::SandboxError { .. } => "SE",
        }
    }
}

/// Normalize program output for comparison: CRLF becomes LF, trailing
/// whitespace is removed from every line, trailing blank lines are dropped.
pub fn normalize_output(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n");
    let mut lines: Vec<&str> = unified.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

/// Run `code` once per test case, stopping at the first failure.
pub fn execute_candidate(
    code: &SourceText,
    cases: &[TestCase],
    limits: &ExecLimits,
    interpreter: &Interpreter,
) -> Result<Verdict, JudgeError> {
    limits.validate()?;
    if !interpreter.accepts(&code.language_id) {
        return Err(JudgeError::Sandbox(format!(
            "interpreter {} does not run language {:?}",
            interpreter.program, code.language_id
        )));
    }
    let program = interpreter.resolve()?;
    for (case, tc) in cases.iter().enumerate() {
        let dir = tempfile::Builder::new()
            .prefix("karecoder-judge-")
            .tempdir()
            .map_err(|e| JudgeError::Sandbox(format!("temp dir: {e}")))?;
        let file = dir.path().join(&interpreter.source_file);
        fs::write(&file, &code.body).map_err(|e| JudgeError::Sandbox(format!("write source: {e}")))?;
        let outcome = sandbox::run_limited(
            &program,
            &interpreter.argv(&file),
            dir.path(),
            tc.input.as_bytes(),
            limits,
        )?;
        match outcome {
            RunOutcome::TimedOut { .. } => return Ok(Verdict::Timeout { case }),
            RunOutcome::OutputLimit => return Ok(Verdict::OutputLimit { case }),
            RunOutcome::Exited {
                status, stdout, stderr, ..
            } => {
                if status.signal() == Some(libc::SIGXCPU) {
                    return Ok(Verdict::Timeout { case });
                }
                if !status.success() {
                    let tail = String::from_utf8_lossy(&stderr);
                    let last = tail.lines().last().unwrap_or("").trim().to_string();
                    let detail = match (status.code(), status.signal()) {
                        (Some(code), _) => format!("exit status {code}: {last}"),
                        (None, Some(sig)) => format!("killed by signal {sig}"),
                        _ => last,
                    };
                    return Ok(Verdict::RuntimeError { case, detail });
                }
                let got = normalize_output(&String::from_utf8_lossy(&stdout));
                if got != normalize_output(&tc.expected_output) {
                    return Ok(Verdict::WrongAnswer { case });
                }
            }
        }
    }
    Ok(Verdict::Accepted)
}

/// Judged candidates for one problem under one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub problem_id: String,
    pub strategy: String,
    pub candidates: Vec<SourceText>,
    pub verdicts: Vec<Verdict>,
}

impl GenerationRun {
    pub fn n(&self) -> usize {
        self.candidates.len()
    }

    pub fn c(&self) -> usize {
        self.verdicts.iter().filter(|v| v.is_accepted()).count()
    }
}

/// Parallel executor over many candidates, bounded by its own worker pool.
pub struct Judge {
    pool: rayon::ThreadPool,
    pub limits: ExecLimits,
    pub interpreter: Interpreter,
}

impl Judge {
    /// `workers == 0` uses one worker per CPU.
    pub fn new(limits: ExecLimits, interpreter: Interpreter, workers: usize) -> Result<Self, JudgeError> {
        limits.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("judge-{i}"))
            .build()
            .map_err(|e| JudgeError::Sandbox(e.to_string()))?;
        Ok(Self {
            pool,
            limits,
            interpreter,
        })
    }

    /// Verdicts for every candidate, in candidate order. Sandbox failures
    /// become `SandboxError` verdicts.
    pub fn judge_all(&self, candidates: &[SourceText], cases: &[TestCase]) -> Vec<Verdict> {
        self.pool.install(|| {
            candidates
                .par_iter()
                .map(|code| {
                    execute_candidate(code, cases, &self.limits, &self.interpreter)
                        .unwrap_or_else(|e| Verdict::SandboxError { detail: e.to_string() })
                })
                .collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn case(input: &str, out: &str) -> TestCase {
        TestCase {
            input: input.into(),
            expected_output: out.into(),
        }
    }

    fn run(body: &str, cases: &[TestCase]) -> Verdict {
        execute_candidate(
            &SourceText::python(body),
            cases,
            &ExecLimits::default(),
            &Interpreter::default(),
        )
        .unwrap()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_output("1 \n2\n\n"), "1\n2");
        assert_eq!(normalize_output("a\r\nb"), "a\nb");
        assert_eq!(normalize_output("1  2"), "1  2");
        assert_eq!(normalize_output(""), "");
        assert_eq!(normalize_output("\n\n"), "");
    }

    #[test]
    fn echo_is_accepted() {
        let echo = "import sys\nsys.stdout.write(sys.stdin.read())";
        assert_eq!(run(echo, &[case("5\n", "5\n")]), Verdict::Accepted);
    }

    #[test]
    fn mismatch_reports_case_index() {
        let cases = [case("", "1\n"), case("", "2\n")];
        assert_eq!(run("print(1)", &cases), Verdict::WrongAnswer { case: 1 });
        assert_eq!(run("print(1)", &[case("", "2")]), Verdict::WrongAnswer { case: 0 });
    }

    #[test]
    fn runtime_error_is_distinct() {
        match run("raise SystemExit(3)", &[case("", "x")]) {
            Verdict::RuntimeError { case: 0, detail } => assert!(detail.contains('3'), "{detail}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timeout_is_enforced() {
        let limits = ExecLimits {
            wall_time: Duration::from_secs(1),
            ..ExecLimits::default()
        };
        let start = Instant::now();
        let v = execute_candidate(
            &SourceText::python("while True: pass"),
            &[case("", "x")],
            &limits,
            &Interpreter::default(),
        )
        .unwrap();
        assert_eq!(v, Verdict::Timeout { case: 0 });
        assert!(start.elapsed() < Duration::from_millis(1500));
    }

    #[test]
    fn environment_is_empty_and_cwd_private() {
        let body = "import os\nprint(sorted(k for k in os.environ if k != 'LC_CTYPE'))\nprint(os.listdir('.'))";
        assert_eq!(run(body, &[case("", "[]\n['main.py']\n")]), Verdict::Accepted);
    }

    #[test]
    fn network_is_unavailable() {
        let body = "import socket\ntry:\n    socket.create_connection(('1.1.1.1', 53), timeout=1)\n    print('open')\nexcept OSError:\n    print('blocked')";
        assert_eq!(run(body, &[case("", "blocked")]), Verdict::Accepted);
    }

    #[test]
    fn missing_interpreter_is_sandbox_error() {
        let interp = Interpreter {
            program: "definitely-not-an-interpreter".into(),
            ..Interpreter::default()
        };
        let err = execute_candidate(
            &SourceText::python("print(1)"),
            &[case("", "1")],
            &ExecLimits::default(),
            &interp,
        );
        assert!(matches!(err, Err(JudgeError::Sandbox(_))));
    }

    #[test]
    fn judge_all_preserves_order() {
        let judge = Judge::new(ExecLimits::default(), Interpreter::default(), 2).unwrap();
        let cands = vec![
            SourceText::python("print(2)"),
            SourceText::python("print(1)"),
            SourceText::python("print(2)"),
        ];
        let v = judge.judge_all(&cands, &[case("", "2")]);
        assert_eq!(
            v,
            vec![Verdict::Accepted, Verdict::WrongAnswer { case: 0 }, Verdict::Accepted]
        );
    }

    #[test]
    fn deterministic_for_deterministic_programs() {
        let body = "n=int(input())\nprint(sum(range(n)))";
        let cases = [case("10\n", "45\n"), case("3\n", "4\n")];
        assert_eq!(run(body, &cases), run(body, &cases));
        assert_eq!(run(body, &cases), Verdict::WrongAnswer { case: 1 });
    }
}
