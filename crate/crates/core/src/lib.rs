//! Knowledge-aware code generation: corpus tooling, knowledge matching, a
//! two-stage LLM pipeline, and a sandboxed Pass@k judge.

pub mod cleanse;
pub mod cli;
pub mod corpus;
pub mod judge;
pub mod knowledge;
pub mod llmgateway;
pub mod pipeline;
