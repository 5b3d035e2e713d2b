//! Scoring judged run records and rendering the Pass@k tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde_json::{json, Value};

use super::CliError;
use crate::corpus::{DifficultyBounds, DifficultyBucket, Problem};
use crate::judge::{score_runs, Judge, PassKReport};
use crate::pipeline::{RunRecord, Strategy};

/// Records sharing one configuration, under a display label.
#[derive(Debug, Clone)]
pub struct RunGroup {
    pub label: String,
    pub records: Vec<RunRecord>,
}

fn base_label(r: &RunRecord) -> String {
    let mut label = format!("{} {}-shot", r.strategy, r.shots);
    if r.strategy.uses_knowledge() {
        let _ = write!(label, " {}", r.knowledge_format);
    }
    label
}

/// Group records by configuration. Groups are ordered by strategy, then shot
/// count, then label; labels that would collide get a hash suffix.
pub fn group_records(records: Vec<RunRecord>) -> Vec<RunGroup> {
    let mut by_hash: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        by_hash.entry(r.config_hash.clone()).or_default().push(r);
    }
    let mut label_uses: HashMap<String, usize> = HashMap::new();
    for recs in by_hash.values() {
        *label_uses.entry(base_label(&recs[0])).or_default() += 1;
    }
    let mut groups: Vec<(Strategy, usize, RunGroup)> = by_hash
        .into_iter()
        .map(|(hash, records)| {
            let mut label = base_label(&records[0]);
            if label_uses[&label] > 1 {
                let _ = write!(label, " [{}]", &hash[..hash.len().min(8)]);
            }
            (records[0].strategy, records[0].shots, RunGroup { label, records })
        })
        .collect();
    groups.sort_by(|a, b| (a.0, a.1, &a.2.label).cmp(&(b.0, b.1, &b.2.label)));
    groups.into_iter().map(|(_, _, g)| g).collect()
}

/// Fill in verdicts for records that have none (or a stale set).
pub fn judge_records(
    records: &mut [RunRecord],
    problems: &HashMap<String, &Problem>,
    judge: &Judge,
) -> Result<usize, CliError> {
    let mut judged = 0;
    for r in records.iter_mut() {
        if r.verdicts.as_ref().is_some_and(|v| v.len() == r.candidates.len()) {
            continue;
        }
        let problem = problems
            .get(&r.problem_id)
            .ok_or_else(|| CliError::data(format!("run for unknown problem {:?}", r.problem_id)))?;
        log::info!(
            "judging {} candidates of {} ({})",
            r.candidates.len(),
            r.problem_id,
            r.strategy
        );
        r.verdicts = Some(judge.judge_all(&r.sources(), &problem.test_cases));
        judged += 1;
    }
    Ok(judged)
}

fn score(records: &[&RunRecord], k_values: &[u64]) -> Result<PassKReport, CliError> {
    let runs: Vec<_> = records.iter().map(|r| r.generation_run()).collect();
    score_runs(&runs, k_values).map_err(CliError::from)
}

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub label: String,
    pub report: PassKReport,
    pub by_difficulty: Option<BTreeMap<DifficultyBucket, Option<PassKReport>>>,
}

pub fn build_reports(
    groups: &[RunGroup],
    k_values: &[u64],
    by_difficulty: Option<(&HashMap<String, &Problem>, DifficultyBounds)>,
) -> Result<Vec<GroupReport>, CliError> {
    let mut out = Vec::new();
    for g in groups {
        let all: Vec<&RunRecord> = g.records.iter().collect();
        let report = score(&all, k_values).map_err(|e| CliError {
            message: format!("{}: {}", g.label, e.message),
            ..e
        })?;
        let slices = match by_difficulty {
            None => None,
            Some((problems, bounds)) => {
                let mut buckets: BTreeMap<DifficultyBucket, Vec<&RunRecord>> = BTreeMap::new();
                for r in &all {
                    let p = problems
                        .get(&r.problem_id)
                        .ok_or_else(|| CliError::data(format!("run for unknown problem {:?}", r.problem_id)))?;
                    let b = bounds
                        .bucket(p.difficulty_rating)
                        .map_err(|e| CliError::data(format!("{}: {e}", p.id)))?;
                    buckets.entry(b).or_default().push(r);
                }
                let mut slices = BTreeMap::new();
                for b in DifficultyBucket::RATED {
                    let recs = buckets.remove(&b).unwrap_or_default();
                    slices.insert(
                        b,
                        if recs.is_empty() {
                            None
                        } else {
                            Some(score(&recs, k_values)?)
                        },
                    );
                }
                if let Some(recs) = buckets.remove(&DifficultyBucket::Unrated) {
                    slices.insert(DifficultyBucket::Unrated, Some(score(&recs, k_values)?));
                }
                Some(slices)
            }
        };
        out.push(GroupReport {
            label: g.label.clone(),
            report,
            by_difficulty: slices,
        });
    }
    Ok(out)
}

fn bucket_key(b: DifficultyBucket) -> String {
    b.to_string().to_lowercase()
}

fn report_value(g: &GroupReport) -> Value {
    let mut v = serde_json::to_value(&g.report).expect("report serializes");
    let obj = v.as_object_mut().expect("report is an object");
    obj.insert("strategy".into(), Value::String(g.label.clone()));
    if let Some(slices) = &g.by_difficulty {
        let m: serde_json::Map<String, Value> = slices
            .iter()
            .map(|(b, r)| {
                (
                    bucket_key(*b),
                    r.as_ref()
                        .map_or(Value::Null, |r| serde_json::to_value(r).expect("serializes")),
                )
            })
            .collect();
        obj.insert("by_difficulty".into(), Value::Object(m));
    }
    v
}

/// A single configuration yields one report object; several yield
/// `{"reports": [...]}`.
pub fn reports_json(reports: &[GroupReport]) -> String {
    let v = match reports {
        [one] => report_value(one),
        many => json!({ "reports": many.iter().map(report_value).collect::<Vec<_>>() }),
    };
    let mut s = serde_json::to_string_pretty(&v).expect("json serializes");
    s.push('\n');
    s
}

fn table(rows: &[(&str, Option<&PassKReport>)], k_values: &[u64]) -> String {
    let width = rows
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max("Strategy".len());
    let mut s = format!("{:<width$}", "Strategy");
    for k in k_values {
        let _ = write!(s, "  {:>8}", format!("Pass@{k}"));
    }
    s.push_str("  Problems  Candidates\n");
    for (label, report) in rows {
        let _ = write!(s, "{label:<width$}");
        match report {
            Some(r) => {
                for k in k_values {
                    let _ = write!(s, "  {:>7.2}%", r.aggregate[k] * 100.0);
                }
                let _ = writeln!(s, "  {:>8}  {:>10}", r.counts.problems, r.counts.candidates);
            }
            None => s.push_str("  (no problems)\n"),
        }
    }
    s
}

pub fn render_tables(reports: &[GroupReport], k_values: &[u64]) -> String {
    let mut ks: Vec<u64> = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let rows: Vec<_> = reports.iter().map(|g| (g.label.as_str(), Some(&g.report))).collect();
    let mut s = table(&rows, &ks);
    let buckets: Vec<DifficultyBucket> = reports
        .iter()
        .filter_map(|g| g.by_difficulty.as_ref())
        .flat_map(|m| m.keys().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for b in buckets {
        let rows: Vec<_> = reports
            .iter()
            .map(|g| {
                (
                    g.label.as_str(),
                    g.by_difficulty
                        .as_ref()
                        .and_then(|m| m.get(&b))
                        .and_then(Option::as_ref),
                )
            })
            .collect();
        let _ = write!(s, "\n[{b}]\n{}", table(&rows, &ks));
    }
    s
}
