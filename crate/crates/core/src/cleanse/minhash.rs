//! Token-shingle MinHash signatures.
//!
//! Each shingle gets one seeded 128-bit xxh3 digest, split into halves
//! `(a, b)`; the i-th hash function is `a + i * b` (mod 2^64, with `b` forced
//! odd). Signature slot i keeps the minimum of that function over all
//! shingles.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::Xxh3;

use super::tokenize::{significant_tokens, tokenize, Language, TokenizeError};
use super::{CleanseError, DedupConfig};
use crate::corpus::SourceText;

/// Fills short token streams up to one full shingle.
const PAD_TOKEN: &str = "\u{0}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
    pub shingle_width: usize,
    pub seed: u64,
}

impl MinHashSignature {
    pub fn num_hashes(&self) -> usize {
        self.values.len()
    }

    fn compatible(&self, other: &Self) -> bool {
        self.values.len() == other.values.len() && self.shingle_width == other.shingle_width && self.seed == other.seed
    }
}

/// Normalized token stream: significant tokens only.
pub fn token_stream(source: &SourceText) -> Result<Vec<String>, TokenizeError> {
    let language = Language::from_id(&source.language_id)?;
    let tokens = tokenize(&source.body, language)?;
    Ok(significant_tokens(&source.body, &tokens)
        .into_iter()
        .map(str::to_owned)
        .collect())
}

/// Contiguous windows of `width` tokens; a stream shorter than `width`
/// yields one window padded with a reserved token.
pub fn shingles(tokens: &[String], width: usize) -> Vec<Vec<&str>> {
    assert!(width >= 1, "shingle width must be positive");
    if tokens.len() < width {
        let mut one: Vec<&str> = tokens.iter().map(String::as_str).collect();
        one.resize(width, PAD_TOKEN);
        return vec![one];
    }
    tokens
        .windows(width)
        .map(|w| w.iter().map(String::as_str).collect())
        .collect()
}

pub fn shingle_set(source: &SourceText, width: usize) -> Result<HashSet<Vec<String>>, TokenizeError> {
    let tokens = token_stream(source)?;
    Ok(shingles(&tokens, width)
        .into_iter()
        .map(|s| s.into_iter().map(str::to_owned).collect())
        .collect())
}

fn shingle_digest(shingle: &[&str], seed: u64) -> (u64, u64) {
    let mut h = Xxh3::with_seed(seed);
    for tok in shingle {
        h.update(&(tok.len() as u32).to_le_bytes());
        h.update(tok.as_bytes());
    }
    let d = h.digest128();
    (d as u64, ((d >> 64) as u64) | 1)
}

/// Signature of a token stream.
pub fn signature_of_tokens(tokens: &[String], cfg: &DedupConfig) -> MinHashSignature {
    let mut values = vec![u64::MAX; cfg.num_hashes];
    for shingle in shingles(tokens, cfg.shingle_width) {
        let (a, b) = shingle_digest(&shingle, cfg.seed);
        let mut h = a;
        for slot in values.iter_mut() {
            if h < *slot {
                *slot = h;
            }
            h = h.wrapping_add(b);
        }
    }
    MinHashSignature {
        values,
        shingle_width: cfg.shingle_width,
        seed: cfg.seed,
    }
}

pub fn minhash(source: &SourceText, cfg: &DedupConfig) -> Result<MinHashSignature, TokenizeError> {
    Ok(signature_of_tokens(&token_stream(source)?, cfg))
}

/// Fraction of signature slots that agree.
pub fn jaccard_estimate(a: &MinHashSignature, b: &MinHashSignature) -> Result<f64, CleanseError> {
    if !a.compatible(b) || a.values.is_empty() {
        return Err(CleanseError::IncompatibleSignatures);
    }
    let agree = a.values.iter().zip(&b.values).filter(|(x, y)| x == y).count();
    Ok(agree as f64 / a.values.len() as f64)
}

/// Exact Jaccard index of two sets; two empty sets count as identical.
pub fn exact_jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}
