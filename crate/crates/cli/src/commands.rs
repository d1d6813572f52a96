use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use promst::llm::{BackendSpec, ChatBackend, TapeRecorder};
use promst::optimizer::{Backends, Optimizer};
use promst::surrogate::{ExternalKind, PredictorKind, RidgeKind, Transport};
use promst::trial::Evaluator;
use promst::{human_prompt, FeedbackTemplates, Ledger, MetaPrompts, RunConfig};
use promst_envs::{generate_instances, EnvInstance, SizeParams};
use serde::Serialize;

use crate::args::{EvaluateArgs, OptimizeArgs, ReportArgs, RunArgs};
use crate::exit::UsageError;

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))
}

fn config(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &run.config {
        Some(p) => RunConfig::from_json(&read(p, "config")?)?,
        None => RunConfig::default(),
    };
    run.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn instances(run: &RunArgs, cfg: &RunConfig) -> Result<Vec<EnvInstance>> {
    let size: SizeParams = match &run.size {
        Some(text) => serde_json::from_str(text).map_err(|e| UsageError(format!("--size: {e}")))?,
        None => SizeParams::default(),
    };
    Ok(generate_instances(run.env, cfg.rng_seed, cfg.trials_per_prompt, &size)?)
}

fn templates(run: &RunArgs) -> Result<FeedbackTemplates> {
    Ok(match &run.templates {
        Some(p) => FeedbackTemplates::load(p)?,
        None => FeedbackTemplates::builtin(),
    })
}

fn backend(spec: Option<&String>, role: &str, run: &RunArgs, cfg: &RunConfig) -> Result<Arc<dyn ChatBackend>> {
    let spec = spec
        .or(run.backend.as_ref())
        .ok_or_else(|| UsageError(format!("no {role} backend: pass --backend or --{role}-backend")))?;
    let spec: BackendSpec = spec.parse()?;
    let built = spec.build(&run.api_key_var, Duration::from_secs(cfg.request_timeout_secs), cfg.jobs)?;
    Ok(match &run.record_tape {
        Some(path) => Arc::new(TapeRecorder::create(built, path)?),
        None => built,
    })
}

fn start_tape(run: &RunArgs) -> Result<()> {
    if let Some(path) = &run.record_tape {
        std::fs::write(path, "").with_context(|| format!("creating tape {}", path.display()))?;
    }
    Ok(())
}

fn prompt_text(path: Option<&PathBuf>, run: &RunArgs) -> Result<String> {
    match path {
        Some(p) => read(p, "prompt"),
        None => Ok(human_prompt(run.env).to_string()),
    }
}

fn predictor(spec: &str) -> Result<Box<dyn PredictorKind>> {
    let (head, rest) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match head {
        "ridge" if rest.is_empty() => Box::new(RidgeKind::default()),
        "process" if !rest.trim().is_empty() => Box::new(ExternalKind::new(Transport::Process(
            rest.split_whitespace().map(String::from).collect(),
        ))),
        "tcp" if !rest.is_empty() => Box::new(ExternalKind::new(Transport::Tcp(rest.to_string()))),
        _ => {
            return Err(UsageError(format!(
                "unknown predictor '{spec}' (expected ridge, process:COMMAND or tcp:HOST:PORT)"
            ))
            .into())
        }
    })
}

pub fn optimize(args: &OptimizeArgs, out: &mut dyn Write) -> Result<()> {
    let run = &args.run;
    let cfg = config(run)?;
    let instances = instances(run, &cfg)?;
    let templates = templates(run)?;
    let meta = MetaPrompts::load(args.sum_meta.as_deref(), args.gen_meta.as_deref())?;
    let predictor = predictor(&args.predictor)?;
    start_tape(run)?;
    let backends = Backends::split(
        backend(run.task_backend.as_ref(), "task", run, &cfg)?,
        backend(args.prompt_backend.as_ref(), "prompt", run, &cfg)?,
    );
    let optimizer = Optimizer {
        cfg: &cfg,
        instances: &instances,
        templates: &templates,
        meta: &meta,
        backends: &backends,
        predictor: predictor.as_ref(),
        dump_dir: run.dump_transcripts.clone(),
    };
    let outcome = if args.resume {
        optimizer.resume(&args.ledger)?
    } else {
        let initial = prompt_text(args.seed_prompt.as_ref(), run)?;
        optimizer.optimize(&initial, Some(&args.ledger))?
    };
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| with_suffix(&args.ledger, ".report.json"));
    let json = serde_json::to_string_pretty(&outcome.report)?;
    std::fs::write(&report_path, json + "\n").with_context(|| format!("writing report {}", report_path.display()))?;

    let r = &outcome.report;
    write!(out, "{}", r.curve_table())?;
    writeln!(out, "best_id: {}", outcome.best.id())?;
    writeln!(out, "best_score: {:.6}", r.best_score)?;
    writeln!(out, "prompts_evaluated: {}", r.prompts_evaluated)?;
    let c = &r.calls_by_backend;
    writeln!(
        out,
        "calls: task {} summarizer {} generator {}",
        c.task, c.summarizer, c.generator
    )?;
    writeln!(out, "ledger: {}", args.ledger.display())?;
    writeln!(out, "report: {}", report_path.display())?;
    writeln!(out, "best_prompt:\n{}", r.best_prompt)?;
    Ok(())
}

#[derive(Serialize)]
struct TrialRow {
    trial: usize,
    score: f64,
    progress: f64,
    steps: usize,
    collisions: usize,
    success: bool,
    error: Option<String>,
    loop_action: Option<String>,
}

#[derive(Serialize)]
struct EvaluationReport {
    env: String,
    seed: u64,
    mean_score: f64,
    trials: Vec<TrialRow>,
    feedback: Vec<promst::FeedbackItem>,
}

pub fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let run = &args.run;
    let cfg = config(run)?;
    let instances = instances(run, &cfg)?;
    let templates = templates(run)?;
    start_tape(run)?;
    let task = backend(run.task_backend.as_ref(), "task", run, &cfg)?;
    let prompt = prompt_text(args.prompt.as_ref(), run)?;
    if prompt.trim().is_empty() {
        return Err(UsageError("the prompt is empty".into()).into());
    }
    let eval = Evaluator::new(&instances, task.as_ref(), &templates, &cfg)?
        .with_dump_dir(run.dump_transcripts.clone())
        .evaluate("eval", &prompt)?;
    let n = eval.per_trial_scores.len();
    let mean = eval.per_trial_scores.iter().sum::<f64>() / n as f64;
    let rows: Vec<TrialRow> = eval
        .trials
        .iter()
        .map(|t| TrialRow {
            trial: t.trial,
            score: t.final_score,
            progress: t.progress,
            steps: t.steps_taken,
            collisions: t.collisions,
            success: t.success,
            error: t.error.map(|e| e.as_str().to_string()),
            loop_action: t.loop_action.clone(),
        })
        .collect();

    writeln!(out, "env: {}", run.env.as_str())?;
    writeln!(out, "seed: {}", cfg.rng_seed)?;
    writeln!(out, "trials: {n}")?;
    writeln!(out, "mean_score: {mean:.6}")?;
    writeln!(out, "trial,score,progress,steps,collisions,success,error")?;
    for r in &rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{},{},{},{}",
            r.trial,
            r.score,
            r.progress,
            r.steps,
            r.collisions,
            r.success,
            r.error.as_deref().unwrap_or("")
        )?;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        if let Some(e) = &r.error {
            *counts.entry(e).or_default() += 1;
        }
    }
    if counts.is_empty() {
        writeln!(out, "errors: none")?;
    }
    for (kind, c) in &counts {
        writeln!(out, "errors: {kind} {c}/{n} ({:.1}%)", 100.0 * *c as f64 / n as f64)?;
    }

    if let Some(path) = &args.json {
        let report = EvaluationReport {
            env: run.env.as_str().into(),
            seed: cfg.rng_seed,
            mean_score: mean,
            trials: rows,
            feedback: eval.feedback,
        };
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Whitespace-separated token count.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    if !args.ledger.exists() {
        return Err(UsageError(format!("ledger {} does not exist", args.ledger.display())).into());
    }
    let ledger = Ledger::load(&args.ledger)?;
    if ledger.is_empty() {
        return Err(UsageError(format!("ledger {} is empty", args.ledger.display())).into());
    }
    let mut levels: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in ledger.records() {
        let e = levels.entry(r.prompt.level).or_insert((f64::NEG_INFINITY, 0));
        e.0 = e.0.max(r.mean_score);
        e.1 += 1;
    }

    let levels_path = args
        .levels
        .clone()
        .unwrap_or_else(|| with_suffix(&args.ledger, ".levels.csv"));
    let mut w = csv::Writer::from_path(&levels_path).with_context(|| format!("writing {}", levels_path.display()))?;
    w.write_record(["level", "max_score", "prompts"])?;
    for (level, (max, count)) in &levels {
        w.write_record([level.to_string(), format!("{max:.6}"), count.to_string()])?;
    }
    w.flush()?;

    let tokens_path = args
        .tokens
        .clone()
        .unwrap_or_else(|| with_suffix(&args.ledger, ".tokens.csv"));
    let mut w = csv::Writer::from_path(&tokens_path).with_context(|| format!("writing {}", tokens_path.display()))?;
    w.write_record(["id", "level", "token_count", "score"])?;
    for r in ledger.records() {
        w.write_record([
            r.id().to_string(),
            r.prompt.level.to_string(),
            token_count(&r.prompt.text).to_string(),
            format!("{:.6}", r.mean_score),
        ])?;
    }
    w.flush()?;

    writeln!(out, "level,max_score,prompts")?;
    for (level, (max, count)) in &levels {
        writeln!(out, "{level},{max:.6},{count}")?;
    }
    writeln!(out, "levels: {}", levels_path.display())?;
    writeln!(out, "tokens: {}", tokens_path.display())?;
    Ok(())
}
