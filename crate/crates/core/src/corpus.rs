//! Problem data model, the on-disk corpus format, date/difficulty slicing and
//! reference-solution validation.
//!
//! A corpus is a directory holding one JSON document per problem. Loading
//! canonicalizes tags (trimmed, lowercase, deduplicated) and rejects duplicate
//! ids across files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::judge::{self, ExecLimits, Interpreter, JudgeError, Verdict};

pub const MIN_RATING: u32 = 800;
pub const MAX_RATING: u32 = 3100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("duplicate problem id {0:?}")]
    DuplicateId(String),
    #[error("problem {0:?} has no release date")]
    MissingDate(String),
    #[error("difficulty rating {0} outside [{MIN_RATING}, {MAX_RATING}]")]
    OutOfRange(u32),
    #[error("problem {0:?} has no reference solutions")]
    NoSolutions(String),
    #[error("problem {0:?} has no test cases")]
    NoTestCases(String),
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    pub expected_output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceText {
    pub language_id: String,
    pub body: String,
}

impl SourceText {
    pub fn new(language_id: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            language_id: language_id.into(),
            body: body.into(),
        }
    }

    pub fn python(body: impl Into<String>) -> Self {
        Self::new("python3", body)
    }
}

/// Release date of a problem. Serialized as `YYYY-MM-DD`; month-only sources
/// (`YYYY-MM`) are accepted and default to the first of the month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReleaseDate(pub NaiveDate);

impl ReleaseDate {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(Self(d));
        }
        NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
            .map(Self)
            .map_err(|_| format!("invalid date {s:?}, expected YYYY-MM-DD or YYYY-MM"))
    }
}

impl fmt::Display for ReleaseDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

impl Serialize for ReleaseDate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ReleaseDate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        ReleaseDate::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub tags: Vec<String>,
    pub difficulty_rating: Option<u32>,
    pub release_date: Option<ReleaseDate>,
    pub test_cases: Vec<TestCase>,
    pub solutions: Vec<SourceText>,
    /// Problems whose correct answer may be empty output set this.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_empty_output: bool,
}

/// Lowercase and trim a tag.
pub fn canonical_tag(tag: &str) -> String {
    tag.trim().to_lowercase()
}

/// Canonicalize a tag list, dropping empties and duplicates while keeping
/// first-occurrence order.
pub fn canonical_tags<I, S>(tags: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = HashSet::new();
    tags.into_iter()
        .map(|t| canonical_tag(t.as_ref()))
        .filter(|t| !t.is_empty() && seen.insert(t.clone()))
        .collect()
}

impl Problem {
    /// Check the record invariants and canonicalize tags in place.
    pub fn normalize(&mut self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("problem id is empty".into());
        }
        self.tags = canonical_tags(&self.tags);
        if let Some(r) = self.difficulty_rating {
            if !(MIN_RATING..=MAX_RATING).contains(&r) {
                return Err(format!("difficulty_rating {r} outside [{MIN_RATING}, {MAX_RATING}]"));
            }
        }
        if !self.allow_empty_output {
            if let Some(i) = self.test_cases.iter().position(|c| c.expected_output.is_empty()) {
                return Err(format!("test case {i} has empty expected_output"));
            }
        }
        if let Some(i) = self.solutions.iter().position(|s| s.body.is_empty()) {
            return Err(format!("solution {i} has an empty body"));
        }
        Ok(())
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "id",
    "statement",
    "tags",
    "difficulty_rating",
    "release_date",
    "test_cases",
    "solutions",
    "allow_empty_output",
];

#[derive(Deserialize)]
struct RawProblem {
    #[serde(flatten)]
    problem: Problem,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject unknown fields instead of warning about them.
    pub strict: bool,
}

/// Parse a single problem document.
pub fn parse_problem(text: &str, path: &Path, opts: LoadOptions) -> Result<Problem, CorpusError> {
    let raw: RawProblem = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let unknown: Vec<&String> = raw
        .extra
        .keys()
        .filter(|k| !KNOWN_FIELDS.contains(&k.as_str()))
        .collect();
    if !unknown.is_empty() {
        if opts.strict {
            return Err(CorpusError::Invalid {
                path: path.to_path_buf(),
                message: format!("unknown fields {unknown:?}"),
            });
        }
        log::warn!("{}: ignoring unknown fields {unknown:?}", path.display());
    }
    let mut problem = raw.problem;
    problem.normalize().map_err(|message| CorpusError::Invalid {
        path: path.to_path_buf(),
        message,
    })?;
    Ok(problem)
}

/// List the `*.json` files of a corpus directory in name order, or the path
/// itself if it names a file.
pub fn corpus_files(path: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| CorpusError::io(path, e))? {
        let entry = entry.map_err(|e| CorpusError::io(path, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Problem>, CorpusError> {
    load_corpus_with(path, LoadOptions::default())
}

pub fn load_corpus_with(path: &Path, opts: LoadOptions) -> Result<Vec<Problem>, CorpusError> {
    let mut seen = HashSet::new();
    let mut problems = Vec::new();
    for file in corpus_files(path)? {
        let text = fs::read_to_string(&file).map_err(|e| CorpusError::io(&file, e))?;
        let problem = parse_problem(&text, &file, opts)?;
        if !seen.insert(problem.id.clone()) {
            return Err(CorpusError::DuplicateId(problem.id));
        }
        problems.push(problem);
    }
    Ok(problems)
}

/// File name used for a problem inside a corpus directory.
pub fn problem_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.json")
}

/// Write problems as one pretty-printed document per file.
pub fn save_corpus(problems: &[Problem], dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    for p in problems {
        let path = dir.join(problem_file_name(&p.id));
        let mut text = serde_json::to_string_pretty(p).expect("problem serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CorpusError::io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub pre_cutoff: Vec<Problem>,
    pub post_cutoff: Vec<Problem>,
    pub cutoff_date: NaiveDate,
}

/// Partition by release date: strictly before the cutoff goes to
/// `pre_cutoff`, the cutoff day itself and later to `post_cutoff`.
pub fn split_by_date(problems: &[Problem], cutoff: NaiveDate) -> Result<CorpusSplit, CorpusError> {
    let mut split = CorpusSplit {
        pre_cutoff: Vec::new(),
        post_cutoff: Vec::new(),
        cutoff_date: cutoff,
    };
    for p in problems {
        let date = p.release_date.ok_or_else(|| CorpusError::MissingDate(p.id.clone()))?;
        if date.0 < cutoff {
            split.pre_cutoff.push(p.clone());
        } else {
            split.post_cutoff.push(p.clone());
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DifficultyBucket {
    Simple,
    Medium,
    Hard,
    Unrated,
}

impl DifficultyBucket {
    pub const RATED: [DifficultyBucket; 3] = [Self::Simple, Self::Medium, Self::Hard];
}

impl fmt::Display for DifficultyBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Simple => "Simple",
            Self::Medium => "Medium",
            Self::Hard => "Hard",
            Self::Unrated => "Unrated",
        })
    }
}

/// Rating thresholds for the three difficulty subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyBounds {
    /// Lowest rating counted as Medium.
    pub medium_from: u32,
    /// Lowest rating counted as Hard.
    pub hard_from: u32,
}

impl Default for DifficultyBounds {
    fn default() -> Self {
        Self {
            medium_from: 1300,
            hard_from: 2000,
        }
    }
}

impl DifficultyBounds {
    pub fn bucket(&self, rating: Option<u32>) -> Result<DifficultyBucket, CorpusError> {
        let Some(r) = rating else {
            return Ok(DifficultyBucket::Unrated);
        };
        if !(MIN_RATING..=MAX_RATING).contains(&r) {
            return Err(CorpusError::OutOfRange(r));
        }
        Ok(if r < self.medium_from {
            DifficultyBucket::Simple
        } else if r < self.hard_from {
            DifficultyBucket::Medium
        } else {
            DifficultyBucket::Hard
        })
    }
}

pub fn bucket_difficulty(rating: Option<u32>) -> Result<DifficultyBucket, CorpusError> {
    DifficultyBounds::default().bucket(rating)
}

/// Count (problem, tag) incidences.
pub fn tag_distribution(problems: &[Problem]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for p in problems {
        let unique: BTreeSet<String> = p.tags.iter().map(|t| canonical_tag(t)).collect();
        for tag in unique {
            *counts.entry(tag).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub index: usize,
    /// Per test case pass/fail, up to and including the first failure.
    pub case_results: Vec<bool>,
    pub verdict: Verdict,
}

impl SolutionReport {
    pub fn validates(&self) -> bool {
        self.verdict.is_accepted()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub problem_id: String,
    pub solutions: Vec<SolutionReport>,
}

impl ValidationReport {
    pub fn all_validate(&self) -> bool {
        self.solutions.iter().all(SolutionReport::validates)
    }

    pub fn failing(&self) -> impl Iterator<Item = &SolutionReport> {
        self.solutions.iter().filter(|s| !s.validates())
    }
}

/// Run every reference solution against the problem's test cases. Candidate
/// failures (including sandbox errors for a single solution) are recorded in
/// the report; only a missing interpreter aborts.
pub fn validate_solutions(
    problem: &Problem,
    limits: &ExecLimits,
    interpreter: &Interpreter,
) -> Result<ValidationReport, CorpusError> {
    if problem.solutions.is_empty() {
        return Err(CorpusError::NoSolutions(problem.id.clone()));
    }
    if problem.test_cases.is_empty() {
        return Err(CorpusError::NoTestCases(problem.id.clone()));
    }
    interpreter
        .resolve()
        .map_err(|e| CorpusError::SandboxUnavailable(e.to_string()))?;

    let solutions = problem
        .solutions
        .par_iter()
        .enumerate()
        .map(|(index, sol)| {
            let verdict = match judge::execute_candidate(sol, &problem.test_cases, limits, interpreter) {
                Ok(v) => v,
                Err(JudgeError::Sandbox(detail)) => Verdict::SandboxError { detail },
                Err(e) => Verdict::SandboxError { detail: e.to_string() },
            };
            let case_results = case_results(&verdict, problem.test_cases.len());
            SolutionReport {
                index,
                case_results,
                verdict,
            }
        })
        .collect();
    Ok(ValidationReport {
        problem_id: problem.id.clone(),
        solutions,
    })
}

fn case_results(verdict: &Verdict, cases: usize) -> Vec<bool> {
    match verdict.failed_case() {
        None if verdict.is_accepted() => vec![true; cases],
        None => Vec::new(),
        Some(i) => {
            let mut v = vec![true; i];
            v.push(false);
            v
        }
    }
}
