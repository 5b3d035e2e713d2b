//! Unbiased Pass@k estimation and per-problem aggregation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{GenerationRun, JudgeError};

/// Probability that at least one of `k` samples drawn without replacement
/// from `n` generations (of which `c` are correct) is correct:
/// `1 - C(n-c, k) / C(n, k)`.
///
/// When both binomials fit in a `u128` the ratio is formed exactly and divided
/// once; otherwise the product `1 - prod_{j=n-c+1}^{n} (1 - k/j)` is used.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, JudgeError> {
    if n == 0 || c > n || k == 0 || k > n {
        return Err(JudgeError::Domain { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    if let (Some(total), Some(misses)) = (binomial(n, k), binomial(n - c, k)) {
        let hits = total - misses;
        return Ok(hits as f64 / total as f64);
    }
    let miss: f64 = ((n - c + 1)..=n).map(|j| 1.0 - k as f64 / j as f64).product();
    Ok(1.0 - miss)
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub problems: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassKReport {
    pub k_values: Vec<u64>,
    pub per_problem: BTreeMap<String, BTreeMap<u64, f64>>,
    pub aggregate: BTreeMap<u64, f64>,
    pub counts: ReportCounts,
}

/// Pass@k per problem and the arithmetic mean over problems.
pub fn score_runs(runs: &[GenerationRun], k_values: &[u64]) -> Result<PassKReport, JudgeError> {
    if runs.is_empty() {
        return Err(JudgeError::EmptyReport);
    }
    let ks: Vec<u64> = k_values.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ks.is_empty() || ks[0] == 0 {
        return Err(JudgeError::InvalidK);
    }
    let max_k = *ks.last().unwrap();

    let mut per_problem = BTreeMap::new();
    let mut candidates = 0;
    for run in runs {
        let n = run.n() as u64;
        if n < max_k {
            return Err(JudgeError::InsufficientSamples {
                problem_id: run.problem_id.clone(),
                n,
                k: max_k,
            });
        }
        let c = run.c() as u64;
        let mut values = BTreeMap::new();
        for &k in &ks {
            values.insert(k, pass_at_k(n, c, k)?);
        }
        if per_problem.insert(run.problem_id.clone(), values).is_some() {
            return Err(JudgeError::DuplicateProblem(run.problem_id.clone()));
        }
        candidates += run.candidates.len();
    }

    let mut aggregate = BTreeMap::new();
    for &k in &ks {
        // sum in problem-id order so the mean does not depend on run order
        let sum: f64 = per_problem.values().map(|m| m[&k]).sum();
        aggregate.insert(k, sum / per_problem.len() as f64);
    }
    Ok(PassKReport {
        k_values: ks,
        counts: ReportCounts {
            problems: per_problem.len(),
            candidates,
        },
        per_problem,
        aggregate,
    })
}
