//! In-context examples for each strategy and for the tag generator.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Strategy};
use crate::cleanse::tokenize::{tokenize, Language};

/// An example for the intermediate stage: problem, knowledge, and the
/// prompt written from them. Strategies without knowledge leave
/// `knowledge_text` empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptShotExample {
    pub problem_text: String,
    #[serde(default)]
    pub knowledge_text: String,
    pub prompt_text: String,
}

/// An example for the coding stage. `prompt_text` is empty for the direct
/// strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeShotExample {
    pub problem_text: String,
    #[serde(default)]
    pub prompt_text: String,
    pub code_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagShotExample {
    pub problem_text: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyShots {
    #[serde(default)]
    pub prompt: Vec<PromptShotExample>,
    pub code: Vec<CodeShotExample>,
}

pub const TAG_SHOT_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotLibrary {
    pub tag_generator: Vec<TagShotExample>,
    pub strategies: BTreeMap<Strategy, StrategyShots>,
}

const BUILTIN: &str = include_str!("shots.json");

fn bad(msg: String) -> PipelineError {
    PipelineError::Shots(msg)
}

impl ShotLibrary {
    /// The examples shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN).expect("builtin shots are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let lib: ShotLibrary = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.tag_generator.len() != TAG_SHOT_COUNT {
            return Err(bad(format!(
                "tag generator needs exactly {TAG_SHOT_COUNT} examples, found {}",
                self.tag_generator.len()
            )));
        }
        if self
            .tag_generator
            .iter()
            .any(|s| s.problem_text.trim().is_empty() || s.tags.is_empty())
        {
            return Err(bad("tag generator examples need a problem and at least one tag".into()));
        }
        for (strategy, set) in &self.strategies {
            for (i, s) in set.prompt.iter().enumerate() {
                let knowledge_ok = !strategy.uses_knowledge() || !s.knowledge_text.trim().is_empty();
                if s.problem_text.trim().is_empty() || s.prompt_text.trim().is_empty() || !knowledge_ok {
                    return Err(bad(format!("{strategy} prompt example {i} has empty fields")));
                }
            }
            for (i, s) in set.code.iter().enumerate() {
                let prompt_ok = *strategy == Strategy::Direct || !s.prompt_text.trim().is_empty();
                if s.problem_text.trim().is_empty() || s.code_text.trim().is_empty() || !prompt_ok {
                    return Err(bad(format!("{strategy} code example {i} has empty fields")));
                }
                tokenize(&s.code_text, Language::Python)
                    .map_err(|e| bad(format!("{strategy} code example {i} is not code: {e}")))?;
            }
        }
        Ok(())
    }

    /// The first `count` intermediate and coding examples for a strategy.
    pub fn select(
        &self,
        strategy: Strategy,
        count: usize,
    ) -> Result<(&[PromptShotExample], &[CodeShotExample]), PipelineError> {
        let set = self
            .strategies
            .get(&strategy)
            .ok_or_else(|| bad(format!("no examples for strategy {strategy}")))?;
        let prompt_needed = if strategy.has_intermediate() { count } else { 0 };
        if set.prompt.len() < prompt_needed || set.code.len() < count {
            return Err(bad(format!(
                "strategy {strategy} has {} prompt and {} code examples, {count} requested",
                set.prompt.len(),
                set.code.len()
            )));
        }
        Ok((&set.prompt[..prompt_needed], &set.code[..count]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_every_strategy_up_to_three_shots() {
        let lib = ShotLibrary::builtin();
        for s in Strategy::ALL {
            for k in 1..=3 {
                let (p, c) = lib.select(s, k).unwrap();
                assert_eq!(c.len(), k);
                assert_eq!(p.len(), if s == Strategy::Direct { 0 } else { k });
            }
        }
        assert_eq!(lib.tag_generator.len(), 3);
    }

    #[test]
    fn knowledge_strategies_require_knowledge_text() {
        let mut lib = ShotLibrary::builtin();
        lib.strategies.get_mut(&Strategy::KareCoder).unwrap().prompt[0]
            .knowledge_text
            .clear();
        assert!(lib.validate().is_err());
    }

    #[test]
    fn tag_generator_needs_three() {
        let mut lib = ShotLibrary::builtin();
        lib.tag_generator.pop();
        assert!(lib.validate().is_err());
    }

    #[test]
    fn code_examples_must_tokenize() {
        let mut lib = ShotLibrary::builtin();
        lib.strategies.get_mut(&Strategy::Direct).unwrap().code[0].code_text = "print('unterminated".into();
        assert!(lib.validate().is_err());
    }
}
