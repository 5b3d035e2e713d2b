use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde_json::json;

use super::config::{AppConfig, ModeName};
use super::report::{build_reports, group_records, judge_records, render_tables, reports_json};
use super::*;
use crate::cleanse::{dedup, strip_or_keep, DedupConfig, DedupReport};
use crate::corpus::{
    corpus_files, load_corpus, parse_problem, save_corpus, split_by_date, tag_distribution, validate_solutions,
    DifficultyBounds, DifficultyBucket, LoadOptions, Problem, SourceText,
};
use crate::judge::{ExecLimits, Judge};
use crate::knowledge::{load_library, KnowledgeLibrary};
use crate::llmgateway::{Gateway, GatewayMode, RetryPolicy};
use crate::pipeline::{run_strategy, RunConfig, RunRecord, ShotLibrary};

pub(super) fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    match cli.command {
        Command::Corpus(c) => match c {
            CorpusCmd::Validate(a) => cmd_validate(&cfg, a),
            CorpusCmd::Split(a) => cmd_split(&cfg, a),
            CorpusCmd::Stats(a) => cmd_stats(&cfg, a),
            CorpusCmd::Strip(a) => cmd_strip(&cfg, a),
            CorpusCmd::Dedup(a) => cmd_dedup(&cfg, a),
        },
        Command::Cleanse(c) => match c {
            CleanseCmd::Strip(a) => cmd_strip(&cfg, a),
            CleanseCmd::Dedup(a) => cmd_dedup(&cfg, a),
        },
        Command::Generate(a) => cmd_generate(&cfg, a),
        Command::Judge(JudgeCmd::Eval(a)) => cmd_report(&cfg, a, false),
        Command::Report(a) => cmd_report(&cfg, a.eval, a.by_difficulty),
    }
}

fn existing(path: PathBuf, what: &str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::data(format!("{what} {} does not exist", path.display())))
    }
}

fn corpus_path(flag: &CorpusPath, cfg: &AppConfig) -> Result<PathBuf, CliError> {
    let p = flag
        .corpus
        .clone()
        .or_else(|| cfg.corpus_path.clone())
        .ok_or_else(|| CliError::config("no corpus given: pass --corpus or set corpus_path in the config"))?;
    existing(p, "corpus")
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn judge_limits(cfg: &AppConfig, opts: &JudgeOpts) -> Result<(ExecLimits, usize), CliError> {
    let mut limits = cfg.judge.limits;
    if let Some(t) = opts.timeout {
        limits.wall_time = Duration::try_from_secs_f64(t)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| CliError::config(format!("--timeout must be positive, got {t}")))?;
    }
    limits.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok((limits, opts.workers.unwrap_or(cfg.judge.workers)))
}

fn cmd_validate(cfg: &AppConfig, a: ValidateArgs) -> Result<(), CliError> {
    let problems = load_corpus(&corpus_path(&a.corpus, cfg)?)?;
    let (limits, workers) = judge_limits(cfg, &a.judge)?;
    cfg.judge.interpreter.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::external(e.to_string()))?;
    let reports = pool.install(|| {
        problems
            .iter()
            .map(|p| validate_solutions(p, &limits, &cfg.judge.interpreter))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let width = problems
        .iter()
        .map(|p| p.id.len())
        .max()
        .unwrap_or(0)
        .max("Problem".len());
    println!("{:<width$}  Solution  Verdict", "Problem");
    let mut failures = Vec::new();
    for r in &reports {
        for s in &r.solutions {
            let mut verdict = s.verdict.label().to_string();
            if let Some(c) = s.verdict.failed_case() {
                verdict.push_str(&format!(" (case {c})"));
            }
            println!("{:<width$}  {:>8}  {verdict}", r.problem_id, s.index);
            if !s.verdict.is_accepted() {
                failures.push(format!("{} solution {}: {verdict}", r.problem_id, s.index));
            }
        }
    }
    if failures.is_empty() {
        println!(
            "all {} solutions of {} problems pass",
            reports.iter().map(|r| r.solutions.len()).sum::<usize>(),
            reports.len()
        );
        Ok(())
    } else {
        Err(CliError::data(format!(
            "{} failing reference solution(s): {}",
            failures.len(),
            failures.join("; ")
        )))
    }
}

fn cmd_split(cfg: &AppConfig, a: SplitArgs) -> Result<(), CliError> {
    let cutoff = NaiveDate::parse_from_str(&a.cutoff, "%Y-%m-%d")
        .map_err(|e| CliError::config(format!("--cutoff {:?}: {e}", a.cutoff)))?;
    let problems = load_corpus(&corpus_path(&a.corpus, cfg)?)?;
    let split = split_by_date(&problems, cutoff)?;
    save_corpus(&split.pre_cutoff, &a.out.join("pre"))?;
    save_corpus(&split.post_cutoff, &a.out.join("post"))?;
    println!(
        "pre: {} problems, post: {} problems (cutoff {cutoff})",
        split.pre_cutoff.len(),
        split.post_cutoff.len()
    );
    Ok(())
}

fn cmd_stats(cfg: &AppConfig, a: StatsArgs) -> Result<(), CliError> {
    let problems = load_corpus(&corpus_path(&a.corpus, cfg)?)?;
    let bounds = DifficultyBounds::default();
    let mut difficulty: BTreeMap<DifficultyBucket, usize> = [
        DifficultyBucket::Simple,
        DifficultyBucket::Medium,
        DifficultyBucket::Hard,
        DifficultyBucket::Unrated,
    ]
    .into_iter()
    .map(|b| (b, 0))
    .collect();
    for p in &problems {
        let b = bounds
            .bucket(p.difficulty_rating)
            .map_err(|e| CliError::data(format!("{}: {e}", p.id)))?;
        *difficulty.entry(b).or_default() += 1;
    }
    let tags = tag_distribution(&problems);
    if a.json {
        let d: BTreeMap<String, usize> = difficulty
            .iter()
            .map(|(b, n)| (b.to_string().to_lowercase(), *n))
            .collect();
        let v = json!({"problems": problems.len(), "difficulty": d, "tags": tags});
        println!("{}", serde_json::to_string_pretty(&v).expect("json serializes"));
        return Ok(());
    }
    println!("problems: {}", problems.len());
    println!("difficulty:");
    for (b, n) in &difficulty {
        println!("  {:<8} {n}", b.to_string());
    }
    println!("tags:");
    let width = tags.keys().map(String::len).max().unwrap_or(0);
    for (t, n) in &tags {
        println!("  {t:<width$} {n}");
    }
    Ok(())
}

fn load_with_paths(path: &Path) -> Result<Vec<(PathBuf, Problem)>, CliError> {
    let mut out = Vec::new();
    for file in corpus_files(path)? {
        let text = fs::read_to_string(&file).map_err(|e| CliError::data(format!("{}: {e}", file.display())))?;
        let p = parse_problem(&text, &file, LoadOptions::default())?;
        out.push((file, p));
    }
    Ok(out)
}

fn write_problems(problems: Vec<(PathBuf, Problem)>, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            let ps: Vec<Problem> = problems.into_iter().map(|(_, p)| p).collect();
            save_corpus(&ps, dir)?;
        }
        None => {
            for (path, p) in problems {
                let mut text = serde_json::to_string_pretty(&p).expect("problem serializes");
                text.push('\n');
                write_file(&path, &text)?;
            }
        }
    }
    Ok(())
}

fn cmd_strip(cfg: &AppConfig, a: StripArgs) -> Result<(), CliError> {
    let mut problems = load_with_paths(&corpus_path(&a.corpus, cfg)?)?;
    let (mut stripped, mut kept) = (0, 0);
    for (_, p) in &mut problems {
        for (i, sol) in p.solutions.iter_mut().enumerate() {
            let outcome = strip_or_keep(sol);
            if let Some(e) = outcome.error {
                log::warn!("{} solution {i}: left unchanged ({e})", p.id);
                kept += 1;
            } else {
                stripped += 1;
            }
            *sol = outcome.source;
        }
    }
    write_problems(problems, a.out.as_deref())?;
    println!("stripped {stripped} solutions, left {kept} unchanged");
    Ok(())
}

fn language_for(path: &Path) -> String {
    match path.extension().and_then(|e| e.to_str()) {
        Some("py") | None => "python".into(),
        Some(other) => other.to_string(),
    }
}

fn cmd_dedup(cfg: &AppConfig, a: DedupArgs) -> Result<(), CliError> {
    let dcfg = DedupConfig {
        threshold: a.threshold,
        num_hashes: a.num_hashes,
        shingle_width: a.shingle_width,
        exact: a.exact,
        ..DedupConfig::default()
    };
    dcfg.validate()?;
    let report_text = if let Some(dir) = a.sources.clone() {
        let dir = existing(dir, "sources directory")?;
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let sources = files
            .iter()
            .map(|f| {
                fs::read_to_string(f)
                    .map(|body| SourceText::new(language_for(f), body))
                    .map_err(|e| CliError::data(format!("{}: {e}", f.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let report = dedup(&sources, &dcfg)?;
        if let Some(out) = &a.out {
            fs::create_dir_all(out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
            for &i in &report.kept {
                let name = files[i].file_name().expect("file has a name");
                fs::copy(&files[i], out.join(name))
                    .map_err(|e| CliError::data(format!("{}: {e}", files[i].display())))?;
            }
        }
        eprintln!("kept {} of {} files", report.kept.len(), files.len());
        let names: Vec<String> = files
            .iter()
            .map(|f| f.file_name().expect("file has a name").to_string_lossy().into_owned())
            .collect();
        let mut v = serde_json::to_value(&report).expect("report serializes");
        v["items"] = json!(names);
        v
    } else {
        let mut problems = load_with_paths(&corpus_path(&a.corpus, cfg)?)?;
        let mut per_problem = Vec::new();
        let (mut total, mut kept) = (0, 0);
        for (_, p) in &mut problems {
            let report: DedupReport = dedup(&p.solutions, &dcfg)?;
            total += p.solutions.len();
            kept += report.kept.len();
            p.solutions = report.kept_sources(&p.solutions).into_iter().cloned().collect();
            let mut v = serde_json::to_value(&report).expect("report serializes");
            v["problem_id"] = json!(p.id);
            per_problem.push(v);
        }
        write_problems(problems, a.out.as_deref())?;
        eprintln!("kept {kept} of {total} solutions");
        json!({ "problems": per_problem })
    };
    let mut text = serde_json::to_string_pretty(&report_text).expect("json serializes");
    text.push('\n');
    match &a.report {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn build_gateway(cfg: &AppConfig, a: &GenerateArgs) -> Result<Gateway, CliError> {
    let g = &cfg.gateway;
    let endpoint = a.endpoint.clone().unwrap_or_else(|| g.endpoint.clone());
    let mode = if let Some(store) = &a.replay {
        (ModeName::Replay, Some(store.clone()))
    } else if let Some(store) = &a.record {
        (ModeName::Record, Some(store.clone()))
    } else if a.live {
        (ModeName::Live, None)
    } else {
        match g.mode {
            Some(m) => (m, g.store.clone()),
            None => {
                return Err(CliError::config(
                    "choose a gateway mode: --replay STORE, --record STORE or --live",
                ))
            }
        }
    };
    let live_key = || {
        let key = g.api_key().map(|s| s.expose().to_string());
        if key.is_none() {
            log::warn!(
                "no API key found in {}; sending unauthenticated requests",
                g.api_key_env
            );
        }
        key
    };
    let mode = match mode {
        (ModeName::Replay, Some(store)) => {
            if !store.is_dir() {
                return Err(CliError::config(format!(
                    "transcript store {} does not exist",
                    store.display()
                )));
            }
            GatewayMode::Replay { store }
        }
        (ModeName::Record, Some(store)) => GatewayMode::Record {
            endpoint,
            api_key: live_key(),
            store,
        },
        (ModeName::Live, _) => GatewayMode::Live {
            endpoint,
            api_key: live_key(),
        },
        (m, None) => return Err(CliError::config(format!("{m:?} mode needs a transcript store"))),
    };
    Ok(Gateway::new(mode, g.timeout()?)?
        .retry_policy(RetryPolicy {
            max_attempts: g.max_attempts.max(1),
            ..RetryPolicy::default()
        })
        .max_in_flight(g.max_in_flight))
}

fn run_config(cfg: &AppConfig, a: &GenerateArgs) -> RunConfig {
    let mut rc = cfg.defaults.clone();
    if let Some(s) = a.strategy {
        rc.strategy = s;
    }
    if let Some(n) = a.shots {
        rc.shots = n;
    }
    if let Some(n) = a.samples {
        rc.sampling.n_samples = n;
    }
    if let Some(t) = a.temperature {
        rc.sampling.temperature = t;
    }
    if let Some(p) = a.top_p {
        rc.sampling.top_p = p;
    }
    if let Some(m) = a.max_tokens {
        rc.sampling.max_tokens = Some(m);
    }
    if let Some(m) = &a.model {
        rc.sampling.model_id = m.clone();
    }
    if let Some(f) = a.knowledge_format {
        rc.knowledge_format = f;
    }
    if let Some(s) = &a.system_prompt {
        rc.system_prompt = Some(s.clone());
    }
    if let Some(n) = a.prompt_samples {
        rc.prompt_samples = n;
    }
    rc.generate_tags |= a.generate_tags;
    rc
}

fn read_runs(path: &Path) -> Result<Vec<RunRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("runs file {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

fn cmd_generate(cfg: &AppConfig, a: GenerateArgs) -> Result<(), CliError> {
    let rc = run_config(cfg, &a);
    rc.validate()?;
    let problems = load_corpus(&corpus_path(&a.corpus, cfg)?)?;
    let library: Option<KnowledgeLibrary> = match a.library.clone().or_else(|| cfg.library_path.clone()) {
        Some(p) => Some(load_library(&existing(p, "knowledge library")?)?),
        None if rc.strategy.uses_knowledge() || rc.generate_tags => {
            return Err(CliError::config(format!(
                "strategy {} needs a knowledge library: pass --library or set library_path",
                rc.strategy
            )))
        }
        None => None,
    };
    let shots = match a.shots_file.clone().or_else(|| cfg.shots_path.clone()) {
        Some(p) => ShotLibrary::load(&p)?,
        None => ShotLibrary::builtin(),
    };
    shots.select(rc.strategy, rc.shots)?;
    let gateway = build_gateway(cfg, &a)?;

    let selected: Vec<&Problem> = if a.problems.is_empty() {
        problems.iter().collect()
    } else {
        let by_id: HashMap<&str, &Problem> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
        a.problems
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| CliError::data(format!("unknown problem {id:?}")))
            })
            .collect::<Result<_, _>>()?
    };

    let out = a
        .out
        .clone()
        .unwrap_or_else(|| cfg.output_dir.clone().unwrap_or_default().join("runs.jsonl"));
    let done: HashSet<String> = if out.exists() {
        read_runs(&out)?.into_iter().map(|r| r.run_id).collect()
    } else {
        HashSet::new()
    };
    let todo: Vec<&Problem> = selected
        .into_iter()
        .filter(|p| !done.contains(&rc.run_id(&p.id)))
        .collect();
    let skipped = if a.problems.is_empty() {
        problems.len()
    } else {
        a.problems.len()
    } - todo.len();

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&out)
        .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    let (mut written, mut failed) = (0, 0);
    let chunk = cfg.gateway.max_in_flight.max(1) * 2;
    for batch in todo.chunks(chunk) {
        let records = batch
            .par_iter()
            .map(|p| run_strategy(p, library.as_ref(), &rc, &shots, &gateway))
            .collect::<Result<Vec<_>, _>>()?;
        let mut lines = String::new();
        for r in &records {
            failed += usize::from(r.error.is_some());
            lines.push_str(&serde_json::to_string(r).expect("record serializes"));
            lines.push('\n');
        }
        file.write_all(lines.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
        written += records.len();
    }
    println!(
        "{}: wrote {written} run records ({skipped} already present, {failed} with errors) to {}",
        rc.strategy,
        out.display()
    );
    Ok(())
}

fn cmd_report(cfg: &AppConfig, a: EvalArgs, by_difficulty: bool) -> Result<(), CliError> {
    let runs_path = existing(a.runs.clone(), "runs file")?;
    let problems = load_corpus(&corpus_path(&a.corpus, cfg)?)?;
    let by_id: HashMap<String, &Problem> = problems.iter().map(|p| (p.id.clone(), p)).collect();
    let mut records = read_runs(&runs_path)?;
    if let Some(s) = a.strategy {
        records.retain(|r| r.strategy == s);
    }
    if records.is_empty() {
        return Err(CliError::data(format!("no runs to score in {}", runs_path.display())));
    }
    if records
        .iter()
        .any(|r| r.verdicts.as_ref().map(Vec::len) != Some(r.candidates.len()))
    {
        let (limits, workers) = judge_limits(cfg, &a.judge)?;
        let judge = Judge::new(limits, cfg.judge.interpreter.clone(), workers)?;
        cfg.judge.interpreter.resolve()?;
        let n = judge_records(&mut records, &by_id, &judge)?;
        log::info!("judged {n} runs");
    }
    if let Some(path) = &a.judged_out {
        let mut text = String::new();
        for r in &records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        write_file(path, &text)?;
    }
    let groups = group_records(records);
    let slicing = by_difficulty.then_some((&by_id, DifficultyBounds::default()));
    let reports = build_reports(&groups, &a.k, slicing)?;
    let json = reports_json(&reports);
    let table = render_tables(&reports, &a.k);
    match &a.out {
        Some(path) => {
            write_file(path, &json)?;
            print!("{table}");
        }
        None => {
            print!("{json}");
            eprint!("{table}");
        }
    }
    Ok(())
}
