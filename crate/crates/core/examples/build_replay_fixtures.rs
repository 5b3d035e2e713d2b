//! Regenerates `fixtures/replay/` from `fixtures/replay_script.json`.
//!
//! A scripted backend stands in for the model: it answers the intermediate
//! stage with the scripted plan for each problem and the coding stage with a
//! fixed mix of correct and wrong programs. Every request goes through the
//! real pipeline in record mode, so the stored transcript keys match what
//! `generate --replay` will ask for.
//!
//! Run with `cargo run --example build_replay_fixtures`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use karecoder::corpus::{load_corpus, Problem};
use karecoder::knowledge::load_library;
use karecoder::llmgateway::{ChatBackend, ChatMessage, Gateway, GatewayError, SamplingParams, TranscriptStore, Usage};
use karecoder::pipeline::{run_strategy, RunConfig, ShotLibrary, Strategy};
use serde::Deserialize;

#[derive(Deserialize)]
struct ScriptedProblem {
    prompt: String,
    plan: String,
    scot: String,
    correct: Vec<String>,
    wrong: Vec<String>,
}

#[derive(Deserialize)]
struct Script {
    problems: BTreeMap<String, ScriptedProblem>,
    accepted_counts: BTreeMap<Strategy, BTreeMap<String, usize>>,
}

struct Scripted {
    script: Arc<Script>,
    problems: Arc<Vec<Problem>>,
    strategy: Strategy,
}

impl Scripted {
    fn candidates(&self, id: &str, n: usize) -> Vec<String> {
        let p = &self.script.problems[id];
        let c = self.script.accepted_counts[&self.strategy][id];
        let mut out: Vec<String> = p.correct.iter().cycle().take(c).cloned().collect();
        out.extend(p.wrong.iter().cycle().take(n - c).cloned());
        out.rotate_right(1);
        out
    }
}

impl ChatBackend for Scripted {
    fn send(
        &self,
        messages: &[ChatMessage],
        _: &SamplingParams,
        n: u32,
    ) -> Result<(Vec<String>, Option<Usage>), GatewayError> {
        let last = &messages.last().expect("request has messages").content;
        let problem = self
            .problems
            .iter()
            .find(|p| last.contains(p.statement.trim_end()))
            .ok_or_else(|| GatewayError::InvalidRequest("request for an unscripted problem".into()))?;
        let script = &self.script.problems[&problem.id];
        if last.ends_with("Do not write code.") {
            let text = match self.strategy {
                Strategy::KareCoder => &script.prompt,
                Strategy::Plan => &script.plan,
                _ => &script.scot,
            };
            Ok((vec![text.clone(); n as usize], None))
        } else {
            Ok((self.candidates(&problem.id, n as usize), None))
        }
    }
}

fn main() -> anyhow::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let script: Arc<Script> = Arc::new(serde_json::from_str(&fs::read_to_string(
        root.join("replay_script.json"),
    )?)?);
    let problems = Arc::new(load_corpus(&root.join("corpus"))?);
    let library = load_library(&root.join("library.json"))?;
    let shots = ShotLibrary::builtin();

    let store = root.join("replay");
    if store.exists() {
        fs::remove_dir_all(&store).context("clearing the old store")?;
    }
    for strategy in Strategy::ALL {
        let backend = Scripted {
            script: script.clone(),
            problems: problems.clone(),
            strategy,
        };
        let gateway = Gateway::with_backend(Box::new(backend), Some(TranscriptStore::open(&store)));
        let cfg = RunConfig {
            strategy,
            ..RunConfig::default()
        };
        for p in problems.iter() {
            let record = run_strategy(p, Some(&library), &cfg, &shots, &gateway)?;
            if let Some(e) = record.error {
                bail!("{strategy} on {}: {e}", p.id);
            }
        }
    }
    println!(
        "wrote {} transcripts to {}",
        fs::read_dir(&store)?.count(),
        store.display()
    );
    Ok(())
}
