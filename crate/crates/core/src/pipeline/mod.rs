//! Generation strategies: tag generation, the knowledge-aware prompt stage,
//! the coding stage, and their composition, plus the comparison baselines.

pub mod shots;
pub mod templates;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{canonical_tag, Problem, SourceText};
use crate::judge::{GenerationRun, Verdict};
use crate::knowledge::{match_knowledge, KnowledgeFormat, KnowledgeLibrary, MatchedKnowledge};
use crate::llmgateway::{extract_code, Gateway, GatewayError, SamplingParams};

pub use shots::{CodeShotExample, PromptShotExample, ShotLibrary, StrategyShots, TagShotExample};
pub use templates::{
    build_coding_stage_messages, build_intermediate_messages, build_prompt_stage_messages, build_tag_messages,
    default_system_prompt, render_knowledge, NO_KNOWLEDGE_MARKER, TEMPLATE_VERSION,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{stage} stage returned an empty completion")]
    EmptyCompletion { stage: &'static str },
    #[error("strategy {0} needs a knowledge library")]
    MissingLibrary(Strategy),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("shot examples: {0}")]
    Shots(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "direct")]
    Direct,
    #[serde(rename = "plan")]
    Plan,
    #[serde(rename = "scot")]
    Scot,
    #[serde(rename = "scot_kare")]
    ScotKare,
    #[serde(rename = "karecoder")]
    KareCoder,
}

pub const SCOT_TEMPERATURE: f64 = 0.8;
pub const SCOT_TOP_P: f64 = 0.95;

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Direct,
        Strategy::Plan,
        Strategy::Scot,
        Strategy::ScotKare,
        Strategy::KareCoder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Plan => "plan",
            Strategy::Scot => "scot",
            Strategy::ScotKare => "scot_kare",
            Strategy::KareCoder => "karecoder",
        }
    }

    pub fn uses_knowledge(self) -> bool {
        matches!(self, Strategy::KareCoder | Strategy::ScotKare)
    }

    pub fn has_intermediate(self) -> bool {
        self != Strategy::Direct
    }

    /// Fixed (temperature, top_p) for strategies that pin them.
    pub fn sampling_override(self) -> Option<(f64, f64)> {
        match self {
            Strategy::Scot | Strategy::ScotKare => Some((SCOT_TEMPERATURE, SCOT_TOP_P)),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let key = s.trim().to_lowercase().replace(['-', '&'], "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == key || (key == "kare_coder" && *st == Strategy::KareCoder))
            .ok_or_else(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|s| s.as_str()).collect();
                format!("unknown strategy {s:?}, expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub shots: usize,
    pub knowledge_format: KnowledgeFormat,
    pub sampling: SamplingParams,
    /// `None` uses the strategy's default role instruction.
    pub system_prompt: Option<String>,
    /// Completions drawn for the intermediate stage; the first is used.
    pub prompt_samples: u32,
    /// Ask the model for tags when a problem has none in the vocabulary.
    pub generate_tags: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::KareCoder,
            shots: 1,
            knowledge_format: KnowledgeFormat::Description,
            sampling: SamplingParams::default(),
            system_prompt: None,
            prompt_samples: 1,
            generate_tags: false,
        }
    }
}

#[derive(Serialize)]
struct RunIdentity<'a> {
    strategy: Strategy,
    shots: usize,
    knowledge_format: KnowledgeFormat,
    sampling: &'a SamplingParams,
    system_prompt: &'a str,
    prompt_samples: u32,
    generate_tags: bool,
    template_version: u32,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(1..=3).contains(&self.shots) {
            return Err(PipelineError::InvalidConfig(format!(
                "shots must be 1, 2 or 3, got {}",
                self.shots
            )));
        }
        if self.prompt_samples == 0 {
            return Err(PipelineError::InvalidConfig("prompt_samples must be positive".into()));
        }
        self.effective_sampling()
            .validate()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    /// Sampling actually used: the configured parameters with any fixed
    /// per-strategy override applied.
    pub fn effective_sampling(&self) -> SamplingParams {
        let mut s = self.sampling.clone();
        if let Some((t, p)) = self.strategy.sampling_override() {
            if (s.temperature, s.top_p) != (t, p) && (s.temperature, s.top_p) != (1.0, 1.0) {
                log::warn!(
                    "strategy {} pins temperature {t} and top_p {p}; ignoring configured {} and {}",
                    self.strategy,
                    s.temperature,
                    s.top_p
                );
            }
            s.temperature = t;
            s.top_p = p;
        }
        s
    }

    pub fn system_prompt(&self) -> &str {
        self.system_prompt
            .as_deref()
            .unwrap_or_else(|| default_system_prompt(self.strategy))
    }

    /// Hash of everything that shapes a run's requests, problem excluded.
    pub fn config_hash(&self) -> String {
        let identity = RunIdentity {
            strategy: self.strategy,
            shots: self.shots,
            knowledge_format: self.knowledge_format,
            sampling: &self.effective_sampling(),
            system_prompt: self.system_prompt(),
            prompt_samples: self.prompt_samples,
            generate_tags: self.generate_tags,
            template_version: TEMPLATE_VERSION,
        };
        hex::encode(Sha256::digest(
            serde_json::to_vec(&identity).expect("identity serializes"),
        ))
    }

    pub fn run_id(&self, problem_id: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.config_hash().as_bytes());
        h.update([0]);
        h.update(problem_id.as_bytes());
        hex::encode(h.finalize())
    }
}

/// The intermediate artifact: a knowledge-aware prompt, or a plan or
/// structured chain of thought for the baselines (with empty knowledge).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeAwarePrompt {
    pub text: String,
    pub source_knowledge: MatchedKnowledge,
    pub transcript_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub body: String,
    pub extracted_from_fence: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub low_confidence: bool,
}

impl Candidate {
    pub fn source(&self) -> SourceText {
        SourceText::python(self.body.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRecord {
    pub temperature: f64,
    pub top_p: f64,
    pub n: u32,
}

/// One line of a runs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config_hash: String,
    pub problem_id: String,
    pub strategy: Strategy,
    pub shots: usize,
    pub knowledge_format: KnowledgeFormat,
    pub model_id: String,
    pub sampling: SamplingRecord,
    pub matched_tags: Vec<String>,
    pub unmatched_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generated_tags: Vec<String>,
    pub intermediate_prompt: String,
    pub transcript_keys: Vec<String>,
    pub candidates: Vec<Candidate>,
    /// Set when a stage failed; the run then holds fewer candidates than
    /// requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<Vec<Verdict>>,
    pub timestamp: String,
}

impl RunRecord {
    pub fn is_partial(&self) -> bool {
        self.error.is_some() || self.candidates.len() < self.sampling.n as usize
    }

    pub fn sources(&self) -> Vec<SourceText> {
        self.candidates.iter().map(Candidate::source).collect()
    }

    /// The judged view of this run. Unjudged records yield no verdicts.
    pub fn generation_run(&self) -> GenerationRun {
        GenerationRun {
            problem_id: self.problem_id.clone(),
            strategy: self.strategy.to_string(),
            candidates: self.sources(),
            verdicts: self.verdicts.clone().unwrap_or_default(),
        }
    }
}

fn tag_request_params(cfg: &RunConfig) -> SamplingParams {
    SamplingParams {
        temperature: 0.0,
        top_p: 1.0,
        n_samples: 1,
        ..cfg.sampling.clone()
    }
}

/// Parse a tag-generator answer, keeping vocabulary tags in answer order.
pub fn parse_tag_answer(answer: &str, lib: &KnowledgeLibrary) -> Vec<String> {
    let mut tags = Vec::new();
    let mut rejected = Vec::new();
    for piece in answer.split([',', ';', '\n']) {
        let tag = canonical_tag(piece.trim_matches(|c: char| c.is_whitespace() || "\"'`[]().-*".contains(c)));
        if tag.is_empty() || tags.contains(&tag) {
            continue;
        }
        if lib.contains(&tag) {
            tags.push(tag);
        } else {
            rejected.push(tag);
        }
    }
    if !rejected.is_empty() {
        log::warn!("tag generator proposed tags outside the vocabulary: {rejected:?}");
    }
    if tags.is_empty() {
        log::warn!("tag generator produced no usable tags");
    }
    tags
}

/// Ask the model for tags from the library vocabulary.
pub fn generate_tags(
    problem: &Problem,
    lib: &KnowledgeLibrary,
    cfg: &RunConfig,
    shots: &ShotLibrary,
    gw: &Gateway,
) -> Result<(Vec<String>, String), PipelineError> {
    let messages = build_tag_messages(problem, &lib.vocabulary(), &shots.tag_generator);
    let resp = gw.complete(&messages, &tag_request_params(cfg))?;
    let answer = resp.completions.first().map(String::as_str).unwrap_or("");
    Ok((parse_tag_answer(answer, lib), resp.transcript_key))
}

fn intermediate_stage(
    problem: &Problem,
    matched: MatchedKnowledge,
    cfg: &RunConfig,
    shots: &ShotLibrary,
    gw: &Gateway,
) -> Result<KnowledgeAwarePrompt, PipelineError> {
    let (prompt_shots, _) = shots.select(cfg.strategy, cfg.shots)?;
    let messages =
        build_intermediate_messages(cfg.strategy, problem, &matched, prompt_shots, Some(cfg.system_prompt()));
    let params = cfg.effective_sampling().with_samples(cfg.prompt_samples);
    let resp = gw.complete(&messages, &params)?;
    let text = resp
        .completions
        .first()
        .map(|c| c.trim().to_string())
        .unwrap_or_default();
    if text.is_empty() {
        return Err(PipelineError::EmptyCompletion { stage: "prompt" });
    }
    Ok(KnowledgeAwarePrompt {
        text,
        source_knowledge: matched,
        transcript_key: resp.transcript_key,
    })
}

/// Match the problem against the library, then ask for a knowledge-aware
/// prompt (or structured chain of thought, for `ScotKare`).
pub fn prompt_engineering_stage(
    problem: &Problem,
    lib: &KnowledgeLibrary,
    cfg: &RunConfig,
    shots: &ShotLibrary,
    gw: &Gateway,
) -> Result<KnowledgeAwarePrompt, PipelineError> {
    if !cfg.strategy.uses_knowledge() {
        return Err(PipelineError::InvalidConfig(format!(
            "the knowledge-aware prompt stage does not apply to strategy {}",
            cfg.strategy
        )));
    }
    let matched = match_knowledge(problem, lib, cfg.knowledge_format);
    intermediate_stage(problem, matched, cfg, shots, gw)
}

/// Sample code for a problem given its prompt. Returns the candidates in
/// sampling order together with the transcript key.
pub fn coding_stage(
    problem: &Problem,
    prompt: &str,
    cfg: &RunConfig,
    shots: &ShotLibrary,
    gw: &Gateway,
) -> Result<(Vec<Candidate>, String), PipelineError> {
    let (_, code_shots) = shots.select(cfg.strategy, cfg.shots)?;
    let messages = build_coding_stage_messages(problem, prompt, code_shots, Some(cfg.system_prompt()));
    let resp = gw.complete(&messages, &cfg.effective_sampling())?;
    let candidates = resp
        .completions
        .iter()
        .map(|c| {
            let e = extract_code(c);
            if e.low_confidence {
                log::warn!("problem {}: completion has no recognizable code", problem.id);
            }
            Candidate {
                body: e.code,
                extracted_from_fence: e.from_fence,
                low_confidence: e.low_confidence,
            }
        })
        .collect();
    Ok((candidates, resp.transcript_key))
}

fn empty_knowledge(cfg: &RunConfig) -> MatchedKnowledge {
    MatchedKnowledge {
        items: vec![],
        format: cfg.knowledge_format,
        unmatched_tags: vec![],
    }
}

/// Run one strategy on one problem. Configuration problems are returned as
/// errors; stage failures are recorded in the run record.
pub fn run_strategy(
    problem: &Problem,
    lib: Option<&KnowledgeLibrary>,
    cfg: &RunConfig,
    shots: &ShotLibrary,
    gw: &Gateway,
) -> Result<RunRecord, PipelineError> {
    cfg.validate()?;
    shots.select(cfg.strategy, cfg.shots)?;
    let lib = match (cfg.strategy.uses_knowledge(), lib) {
        (true, None) => return Err(PipelineError::MissingLibrary(cfg.strategy)),
        (true, l) => l,
        (false, _) => None,
    };
    let sampling = cfg.effective_sampling();
    let mut record = RunRecord {
        run_id: cfg.run_id(&problem.id),
        config_hash: cfg.config_hash(),
        problem_id: problem.id.clone(),
        strategy: cfg.strategy,
        shots: cfg.shots,
        knowledge_format: cfg.knowledge_format,
        model_id: sampling.model_id.clone(),
        sampling: SamplingRecord {
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            n: sampling.n_samples,
        },
        matched_tags: vec![],
        unmatched_tags: vec![],
        generated_tags: vec![],
        intermediate_prompt: String::new(),
        transcript_keys: vec![],
        candidates: vec![],
        error: None,
        verdicts: None,
        timestamp: String::new(),
    };
    if let Err(e) = run_stages(problem, lib, cfg, shots, gw, &mut record) {
        log::error!("problem {} ({}): {e}", problem.id, cfg.strategy);
        record.error = Some(e.to_string());
    }
    record.timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    Ok(record)
}

fn run_stages(
    problem: &Problem,
    lib: Option<&KnowledgeLibrary>,
    cfg: &RunConfig,
    shots: &ShotLibrary,
    gw: &Gateway,
    record: &mut RunRecord,
) -> Result<(), PipelineError> {
    let prompt = match (cfg.strategy, lib) {
        (Strategy::Direct, _) => String::new(),
        (_, Some(lib)) => {
            let mut tagged = problem.clone();
            if cfg.generate_tags && !problem.tags.iter().any(|t| lib.contains(t)) {
                let (tags, key) = generate_tags(problem, lib, cfg, shots, gw)?;
                record.transcript_keys.push(key);
                tagged.tags.extend(tags.iter().cloned());
                record.generated_tags = tags;
            }
            let p = prompt_engineering_stage(&tagged, lib, cfg, shots, gw)?;
            record.matched_tags = p.source_knowledge.tags();
            record.unmatched_tags = p.source_knowledge.unmatched_tags.clone();
            record.transcript_keys.push(p.transcript_key);
            p.text
        }
        (_, None) => {
            let p = intermediate_stage(problem, empty_knowledge(cfg), cfg, shots, gw)?;
            record.transcript_keys.push(p.transcript_key);
            p.text
        }
    };
    record.intermediate_prompt = prompt;
    let (candidates, key) = coding_stage(problem, &record.intermediate_prompt, cfg, shots, gw)?;
    record.transcript_keys.push(key);
    record.candidates = candidates;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::KnowledgeEntry;
    use crate::llmgateway::{ChatBackend, ChatMessage, TranscriptStore, Usage};
    use std::sync::Mutex;

    fn lib() -> KnowledgeLibrary {
        KnowledgeLibrary::from_entries(["dp", "greedy", "math"].map(|t| KnowledgeEntry {
            tag: t.into(),
            description: format!("About {t}."),
            pseudo_code: String::new(),
            steps: vec![],
        }))
        .unwrap()
    }

    fn problem(tags: &[&str]) -> Problem {
        Problem {
            id: "p1".into(),
            statement: "Print the sum of two integers.".into(),
            tags: tags.iter().map(|t| t.to_string()).collect(),
            difficulty_rating: Some(800),
            release_date: None,
            test_cases: vec![],
            solutions: vec![],
            allow_empty_output: false,
        }
    }

    /// Answers from a queue and remembers every request.
    struct Scripted {
        answers: Mutex<Vec<String>>,
        seen: Mutex<Vec<(Vec<ChatMessage>, SamplingParams)>>,
    }

    impl Scripted {
        fn new(answers: &[&str]) -> Self {
            Self {
                answers: Mutex::new(answers.iter().rev().map(|s| s.to_string()).collect()),
                seen: Mutex::new(vec![]),
            }
        }
    }

    impl ChatBackend for &'static Scripted {
        fn send(
            &self,
            m: &[ChatMessage],
            p: &SamplingParams,
            n: u32,
        ) -> Result<(Vec<String>, Option<Usage>), GatewayError> {
            self.seen.lock().unwrap().push((m.to_vec(), p.clone()));
            let mut q = self.answers.lock().unwrap();
            Ok(((0..n).map(|_| q.pop().unwrap_or_default()).collect(), None))
        }
    }

    fn scripted(answers: &[&str]) -> (&'static Scripted, Gateway) {
        let s: &'static Scripted = Box::leak(Box::new(Scripted::new(answers)));
        (s, Gateway::with_backend(Box::new(s), None))
    }

    fn cfg(strategy: Strategy) -> RunConfig {
        RunConfig {
            strategy,
            ..RunConfig::default()
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
        assert_eq!("SCOT&Kare".parse::<Strategy>().unwrap(), Strategy::ScotKare);
        assert!("cot".parse::<Strategy>().is_err());
    }

    #[test]
    fn tag_answers_are_filtered_to_vocabulary() {
        let l = lib();
        assert_eq!(parse_tag_answer("dp, greedy", &l), ["dp", "greedy"]);
        assert_eq!(parse_tag_answer("dp, quantum", &l), ["dp"]);
        assert!(parse_tag_answer("This looks like a hard problem to me", &l).is_empty());
        assert_eq!(parse_tag_answer("- Math\n- DP\n- dp", &l), ["math", "dp"]);
    }

    #[test]
    fn generate_tags_prompts_with_vocabulary() {
        let (s, gw) = scripted(&["greedy, quantum"]);
        let (tags, _) = generate_tags(
            &problem(&[]),
            &lib(),
            &cfg(Strategy::KareCoder),
            &ShotLibrary::builtin(),
            &gw,
        )
        .unwrap();
        assert_eq!(tags, ["greedy"]);
        let seen = s.seen.lock().unwrap();
        assert!(seen[0].0[0].content.contains("dp, greedy, math"));
        assert_eq!(seen[0].0.len(), 1 + 2 * 3 + 1);
    }

    #[test]
    fn scot_sampling_is_pinned() {
        for s in [Strategy::Scot, Strategy::ScotKare] {
            let mut c = cfg(s);
            c.sampling.temperature = 0.2;
            c.sampling.top_p = 0.5;
            let e = c.effective_sampling();
            assert_eq!((e.temperature, e.top_p), (0.8, 0.95));
        }
        let d = cfg(Strategy::Plan).effective_sampling();
        assert_eq!((d.temperature, d.top_p, d.n_samples), (1.0, 1.0, 5));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Strategy::Direct);
        c.shots = 4;
        assert!(c.validate().is_err());
        c.shots = 0;
        assert!(c.validate().is_err());
        let (_, gw) = scripted(&[]);
        let err = run_strategy(
            &problem(&[]),
            None,
            &cfg(Strategy::KareCoder),
            &ShotLibrary::builtin(),
            &gw,
        );
        assert!(matches!(err, Err(PipelineError::MissingLibrary(Strategy::KareCoder))));
    }

    #[test]
    fn run_ids_separate_configs() {
        let a = cfg(Strategy::KareCoder);
        let mut b = a.clone();
        b.shots = 2;
        assert_ne!(a.run_id("p"), b.run_id("p"));
        assert_ne!(a.run_id("p"), a.run_id("q"));
        assert_eq!(a.run_id("p"), a.clone().run_id("p"));
    }

    #[test]
    fn karecoder_run_shape() {
        let (s, gw) = scripted(&[
            "Step 1: add.",
            "```python\nprint(sum(map(int, input().split())))\n```",
            "print(1)",
            "a",
            "b",
            "c",
        ]);
        let r = run_strategy(
            &problem(&["math", "geometry"]),
            Some(&lib()),
            &cfg(Strategy::KareCoder),
            &ShotLibrary::builtin(),
            &gw,
        )
        .unwrap();
        assert_eq!(r.error, None);
        assert_eq!(r.intermediate_prompt, "Step 1: add.");
        assert_eq!(r.matched_tags, ["math"]);
        assert_eq!(r.unmatched_tags, ["geometry"]);
        assert_eq!(r.candidates.len(), 5);
        assert!(r.candidates[0].extracted_from_fence);
        assert_eq!(r.candidates[1].body, "print(1)");
        assert_eq!(r.transcript_keys.len(), 2);
        let seen = s.seen.lock().unwrap();
        assert_eq!(seen[0].1.n_samples, 1);
        assert!(seen[1].0.last().unwrap().content.contains("Prompt:\nStep 1: add."));
    }

    #[test]
    fn direct_has_no_intermediate() {
        let (s, gw) = scripted(&["print(2)"; 5]);
        let r = run_strategy(
            &problem(&[]),
            None,
            &cfg(Strategy::Direct),
            &ShotLibrary::builtin(),
            &gw,
        )
        .unwrap();
        assert_eq!(r.intermediate_prompt, "");
        assert_eq!(r.candidates.len(), 5);
        assert_eq!(s.seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn tag_generation_only_when_needed() {
        let mut c = cfg(Strategy::KareCoder);
        c.generate_tags = true;
        let (_, gw) = scripted(&["dp", "plan", "print(1)"]);
        let r = run_strategy(&problem(&["geometry"]), Some(&lib()), &c, &ShotLibrary::builtin(), &gw).unwrap();
        assert_eq!(r.generated_tags, ["dp"]);
        assert_eq!(r.matched_tags, ["dp"]);
        assert_eq!(r.transcript_keys.len(), 3);

        let (s, gw) = scripted(&["plan", "print(1)"]);
        let r = run_strategy(&problem(&["math"]), Some(&lib()), &c, &ShotLibrary::builtin(), &gw).unwrap();
        assert!(r.generated_tags.is_empty());
        assert_eq!(s.seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn stage_failure_is_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::replay(dir.path());
        let r = run_strategy(
            &problem(&["dp"]),
            Some(&lib()),
            &cfg(Strategy::KareCoder),
            &ShotLibrary::builtin(),
            &gw,
        )
        .unwrap();
        assert!(r.error.as_deref().unwrap().contains("no transcript"));
        assert!(r.is_partial());
        assert!(r.candidates.is_empty());
    }

    #[test]
    fn empty_prompt_is_an_error() {
        let (_, gw) = scripted(&["   "]);
        let r = run_strategy(
            &problem(&["dp"]),
            Some(&lib()),
            &cfg(Strategy::KareCoder),
            &ShotLibrary::builtin(),
            &gw,
        )
        .unwrap();
        assert!(r.error.unwrap().contains("empty completion"));
    }

    #[test]
    fn replay_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (_, live) = scripted(&["plan", "print(1)", "print(2)", "print(3)", "print(4)", "print(5)"]);
        let rec = Gateway::with_backend(Box::new(ScriptedRef(live)), Some(TranscriptStore::open(dir.path())));
        let c = cfg(Strategy::Plan);
        let first = run_strategy(&problem(&[]), None, &c, &ShotLibrary::builtin(), &rec).unwrap();
        let gw = Gateway::replay(dir.path());
        let mut a = run_strategy(&problem(&[]), None, &c, &ShotLibrary::builtin(), &gw).unwrap();
        let mut b = run_strategy(&problem(&[]), None, &c, &ShotLibrary::builtin(), &gw).unwrap();
        a.timestamp.clear();
        b.timestamp.clear();
        assert_eq!(a, b);
        assert_eq!(a.candidates, first.candidates);
    }

    struct ScriptedRef(Gateway);

    impl ChatBackend for ScriptedRef {
        fn send(
            &self,
            m: &[ChatMessage],
            p: &SamplingParams,
            n: u32,
        ) -> Result<(Vec<String>, Option<Usage>), GatewayError> {
            let r = self.0.complete(m, &p.with_samples(n))?;
            Ok((r.completions, r.usage))
        }
    }
}
