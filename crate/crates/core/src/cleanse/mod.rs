//! Solution-code cleaning: comment removal and near-duplicate elimination.

mod minhash;
mod strip;
pub mod tokenize;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SourceText;
pub use minhash::{
    exact_jaccard, jaccard_estimate, minhash, shingle_set, shingles, signature_of_tokens, token_stream,
    MinHashSignature,
};
pub use strip::{strip_comments, strip_or_keep, strip_python, StripOutcome};
pub use tokenize::TokenizeError;

#[derive(Debug, Error)]
pub enum CleanseError {
    #[error("signatures differ in length, shingle width or seed")]
    IncompatibleSignatures,
    #[error("invalid dedup config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub threshold: f64,
    pub num_hashes: usize,
    pub shingle_width: usize,
    pub seed: u64,
    /// Compare exact Jaccard over shingle sets instead of the MinHash estimate.
    pub exact: bool,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            threshold: 0.85,
            num_hashes: 128,
            shingle_width: 5,
            seed: 0x4b61_7265_436f_6465,
            exact: false,
        }
    }
}

impl DedupConfig {
    pub fn validate(&self) -> Result<(), CleanseError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CleanseError::InvalidConfig(format!(
                "threshold {} not in [0, 1]",
                self.threshold
            )));
        }
        if self.num_hashes == 0 || self.shingle_width == 0 {
            return Err(CleanseError::InvalidConfig(
                "num_hashes and shingle_width must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedItem {
    pub index: usize,
    pub duplicate_of: usize,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedItem {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    /// Indices of kept items, in input order.
    pub kept: Vec<usize>,
    pub dropped: Vec<DroppedItem>,
    /// Items that failed to tokenize; they are kept and never compared.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flagged: Vec<FlaggedItem>,
}

impl DedupReport {
    pub fn kept_sources<'a>(&self, corpus: &'a [SourceText]) -> Vec<&'a SourceText> {
        self.kept.iter().map(|&i| &corpus[i]).collect()
    }
}

enum Fingerprint {
    Signature(MinHashSignature),
    Shingles(HashSet<Vec<String>>),
}

impl Fingerprint {
    fn similarity(&self, other: &Fingerprint) -> Result<f64, CleanseError> {
        match (self, other) {
            (Fingerprint::Signature(a), Fingerprint::Signature(b)) => jaccard_estimate(a, b),
            (Fingerprint::Shingles(a), Fingerprint::Shingles(b)) => Ok(exact_jaccard(a, b)),
            _ => Err(CleanseError::IncompatibleSignatures),
        }
    }
}

/// Greedy first-wins near-duplicate removal: scanning in input order, an item
/// is dropped when its similarity to an already-kept item reaches the
/// threshold.
pub fn dedup(corpus: &[SourceText], cfg: &DedupConfig) -> Result<DedupReport, CleanseError> {
    cfg.validate()?;
    let prints: Vec<Result<Fingerprint, TokenizeError>> = corpus
        .par_iter()
        .map(|s| {
            if cfg.exact {
                shingle_set(s, cfg.shingle_width).map(Fingerprint::Shingles)
            } else {
                minhash(s, cfg).map(Fingerprint::Signature)
            }
        })
        .collect();

    let mut report = DedupReport::default();
    let mut kept_prints: Vec<(usize, &Fingerprint)> = Vec::new();
    for (index, fp) in prints.iter().enumerate() {
        let fp = match fp {
            Ok(fp) => fp,
            Err(e) => {
                log::warn!("dedup: item {index} kept unchecked: {e}");
                report.flagged.push(FlaggedItem {
                    index,
                    error: e.to_string(),
                });
                report.kept.push(index);
                continue;
            }
        };
        let mut shadow = None;
        for &(kept_index, kept_fp) in &kept_prints {
            let sim = fp.similarity(kept_fp)?;
            if sim >= cfg.threshold {
                shadow = Some((kept_index, sim));
                break;
            }
        }
        match shadow {
            Some((duplicate_of, estimate)) => report.dropped.push(DroppedItem {
                index,
                duplicate_of,
                estimate,
            }),
            None => {
                report.kept.push(index);
                kept_prints.push((index, fp));
            }
        }
    }
    Ok(report)
}
