//! Message builders. All of them are pure: identical inputs give identical
//! message lists.

use super::shots::{CodeShotExample, PromptShotExample, TagShotExample};
use super::Strategy;
use crate::corpus::Problem;
use crate::knowledge::MatchedKnowledge;
use crate::llmgateway::ChatMessage;

/// Bumped whenever any template text changes, so resumed runs never mix
/// records produced by different templates.
pub const TEMPLATE_VERSION: u32 = 1;

pub const NO_KNOWLEDGE_MARKER: &str = "(no matched knowledge)";

const KNOWLEDGE_PROMPT_INSTRUCTION: &str = "Using the knowledge above, write a knowledge-aware prompt that explains \
step by step how to solve the problem. Do not write code.";

const KNOWLEDGE_SCOT_INSTRUCTION: &str = "Using the knowledge above, write a knowledge-aware structured chain of \
thought for the problem. State the input and output first, then give the solving steps using sequence, branch and \
loop structures. Do not write code.";

const PLAN_INSTRUCTION: &str = "Write a step-by-step plan that solves the problem. Do not write code.";

const SCOT_INSTRUCTION: &str = "Write a structured chain of thought for the problem. State the input and output \
first, then give the solving steps using sequence, branch and loop structures. Do not write code.";

const CODE_INSTRUCTION: &str = "Write a complete Python 3 program that reads from standard input and writes to \
standard output. Reply with the program in a single ```python code block.";

const TAG_INSTRUCTION: &str = "Reply with a comma-separated list of tags for the problem.";

/// Default one-line role instruction per strategy.
pub fn default_system_prompt(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::Direct => "You are an expert competitive programmer who writes correct Python 3 programs.",
        Strategy::Plan => "You are an expert competitive programmer who plans solutions before writing code.",
        Strategy::Scot => {
            "You are an expert competitive programmer who reasons with structured chains of thought before writing code."
        }
        Strategy::ScotKare => {
            "You are an expert competitive programmer who applies algorithm knowledge through structured chains of thought."
        }
        Strategy::KareCoder => {
            "You are an expert competitive programmer who applies algorithm and data-structure knowledge to solve problems."
        }
    }
}

fn intermediate_instruction(strategy: Strategy) -> Option<&'static str> {
    match strategy {
        Strategy::Direct => None,
        Strategy::Plan => Some(PLAN_INSTRUCTION),
        Strategy::Scot => Some(SCOT_INSTRUCTION),
        Strategy::ScotKare => Some(KNOWLEDGE_SCOT_INSTRUCTION),
        Strategy::KareCoder => Some(KNOWLEDGE_PROMPT_INSTRUCTION),
    }
}

/// Matched knowledge as one text block, one section per tag.
pub fn render_knowledge(matched: &MatchedKnowledge) -> String {
    if matched.items.is_empty() {
        return NO_KNOWLEDGE_MARKER.to_string();
    }
    matched
        .items
        .iter()
        .map(|item| format!("[{}]\n{}", item.tag, item.text.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn intermediate_user(problem: &str, knowledge: Option<&str>, instruction: &str) -> String {
    match knowledge {
        Some(k) => format!(
            "Problem:\n{}\n\nKnowledge:\n{}\n\n{instruction}",
            problem.trim_end(),
            k.trim_end()
        ),
        None => format!("Problem:\n{}\n\n{instruction}", problem.trim_end()),
    }
}

fn coding_user(problem: &str, prompt: &str) -> String {
    if prompt.trim().is_empty() {
        format!("Problem:\n{}\n\n{CODE_INSTRUCTION}", problem.trim_end())
    } else {
        format!(
            "Problem:\n{}\n\nPrompt:\n{}\n\n{CODE_INSTRUCTION}",
            problem.trim_end(),
            prompt.trim_end()
        )
    }
}

fn fenced(code: &str) -> String {
    format!("```python\n{}\n```", code.trim_end())
}

fn with_system(system_prompt: Option<&str>) -> Vec<ChatMessage> {
    system_prompt.map(ChatMessage::system).into_iter().collect()
}

/// Messages for the intermediate stage of `strategy`. Knowledge strategies
/// render `matched` (or the empty marker); the others ignore it.
///
/// # Panics
/// If `strategy` is `Direct`, which has no intermediate stage.
pub fn build_intermediate_messages(
    strategy: Strategy,
    problem: &Problem,
    matched: &MatchedKnowledge,
    shots: &[PromptShotExample],
    system_prompt: Option<&str>,
) -> Vec<ChatMessage> {
    let instruction = intermediate_instruction(strategy).expect("strategy has an intermediate stage");
    let knowledge = strategy.uses_knowledge();
    let mut messages = with_system(system_prompt);
    for shot in shots {
        let k = knowledge.then_some(shot.knowledge_text.as_str());
        messages.push(ChatMessage::user(intermediate_user(&shot.problem_text, k, instruction)));
        messages.push(ChatMessage::assistant(shot.prompt_text.trim_end()));
    }
    let rendered = render_knowledge(matched);
    let k = knowledge.then_some(rendered.as_str());
    messages.push(ChatMessage::user(intermediate_user(&problem.statement, k, instruction)));
    messages
}

/// Messages asking for a knowledge-aware prompt.
pub fn build_prompt_stage_messages(
    problem: &Problem,
    matched: &MatchedKnowledge,
    shots: &[PromptShotExample],
    system_prompt: Option<&str>,
) -> Vec<ChatMessage> {
    build_intermediate_messages(Strategy::KareCoder, problem, matched, shots, system_prompt)
}

/// Messages asking for code given a problem and its prompt. An empty prompt
/// leaves only the statement in the final user message.
pub fn build_coding_stage_messages(
    problem: &Problem,
    prompt: &str,
    shots: &[CodeShotExample],
    system_prompt: Option<&str>,
) -> Vec<ChatMessage> {
    let mut messages = with_system(system_prompt);
    for shot in shots {
        messages.push(ChatMessage::user(coding_user(&shot.problem_text, &shot.prompt_text)));
        messages.push(ChatMessage::assistant(fenced(&shot.code_text)));
    }
    messages.push(ChatMessage::user(coding_user(&problem.statement, prompt)));
    messages
}

pub fn build_tag_messages(problem: &Problem, vocabulary: &[&str], shots: &[TagShotExample]) -> Vec<ChatMessage> {
    let system = format!(
        "You label competitive programming problems with algorithm tags. Use only these tags: {}.",
        vocabulary.join(", ")
    );
    let mut messages = vec![ChatMessage::system(system)];
    for shot in shots {
        messages.push(ChatMessage::user(format!(
            "Problem:\n{}\n\n{TAG_INSTRUCTION}",
            shot.problem_text.trim_end()
        )));
        messages.push(ChatMessage::assistant(shot.tags.join(", ")));
    }
    messages.push(ChatMessage::user(format!(
        "Problem:\n{}\n\n{TAG_INSTRUCTION}",
        problem.statement.trim_end()
    )));
    messages
}
