mod support {
    pub mod world;
}

use std::sync::atomic::Ordering;

use promst::surrogate::{PredictorKind, RidgeKind};
use promst::{Backends, FeedbackTemplates, Ledger, MetaPrompts, OptimizeError, Optimizer, PromptId, RunConfig, RunOutcome};
use support::world::{self, RejectAll};

fn backends(step: f64) -> Backends {
    Backends::new(
        world::task_backend(),
        world::summarizer_backend(),
        world::generator_backend(step),
    )
}

fn run(
    cfg: &RunConfig,
    b: &Backends,
    predictor: &dyn PredictorKind,
    ledger: Option<&std::path::Path>,
) -> Result<RunOutcome, OptimizeError> {
    let instances = world::instances(cfg.trials_per_prompt);
    let templates = FeedbackTemplates::builtin();
    let meta = MetaPrompts::builtin();
    let opt = Optimizer {
        cfg,
        instances: &instances,
        templates: &templates,
        meta: &meta,
        backends: b,
        predictor,
        dump_dir: None,
    };
    opt.optimize(&world::tagged(0.0, "start"), ledger)
}

fn ids(range: std::ops::Range<usize>) -> Vec<PromptId> {
    range.map(PromptId::from_seq).collect()
}

#[test]
fn small_beam_hand_trace() {
    let cfg = RunConfig {
        beam_width: 1,
        expansion_first: 2,
        expansion_rest: 2,
        max_depth: 4,
        ..world::config()
    };
    let b = backends(0.1);
    let out = run(&cfg, &b, &RidgeKind::default(), None).unwrap();
    assert!((out.best.mean_score - 0.3).abs() < 1e-12);
    assert_eq!(out.best.prompt.level, 3);
    let parents: Vec<Vec<PromptId>> = out.levels.iter().map(|l| l.parents.clone()).collect();
    assert_eq!(parents, vec![ids(0..1), ids(1..2), ids(3..4)]);
    assert!(out.levels.iter().all(|l| l.evaluated.len() == 2 && !l.surrogate_fitted));
    assert_eq!(out.report.prompts_evaluated, 7);
    assert_eq!(out.report.calls_by_backend.task, 7 * cfg.trials_per_prompt);
    assert_eq!(out.report.calls_by_backend.generator, 6);
}

#[test]
fn default_beam_with_rejecting_filter() {
    let cfg = world::config();
    let b = backends(0.1);
    let reject = RejectAll::default();
    let out = run(&cfg, &b, &reject, None).unwrap();
    let counts: Vec<usize> = out.levels.iter().map(|l| l.evaluated.len()).collect();
    assert_eq!(counts, vec![20, 40, 40, 0, 0, 0]);
    assert_eq!(out.levels[0].parents, ids(0..1));
    assert_eq!(out.levels[1].parents, ids(1..6));
    assert_eq!(out.levels[2].parents, ids(21..26));
    assert_eq!(out.levels[3].parents, ids(61..66));
    for l in &out.levels[..3] {
        assert_eq!((l.surrogate_fitted, l.accept_calls), (false, 0));
    }
    for l in &out.levels[3..] {
        assert!(l.surrogate_fitted);
        assert_eq!(l.slots_per_parent, vec![24; 5]);
        assert_eq!(l.accept_calls, 120);
        assert_eq!(l.rejected, 120);
    }
    assert_eq!(reject.trained.load(Ordering::SeqCst), 15);
    assert_eq!(out.progress.completed_levels, 7);
    assert!((out.report.best_score - 0.3).abs() < 1e-12);
    let attempts: usize = out.levels.iter().map(|l| l.generator_calls).sum();
    assert_eq!(out.report.calls_by_backend.generator, attempts);
    assert_eq!(out.report.calls_by_backend.task, 101 * cfg.trials_per_prompt);
}

#[test]
fn flat_scores_stop_after_patience() {
    let cfg = world::config();
    let b = backends(0.0);
    let out = run(&cfg, &b, &RidgeKind::default(), None).unwrap();
    assert_eq!(out.levels.len(), 3);
    assert_eq!(out.progress.stagnant_levels, 3);
    assert!(out.progress.finished);
}

#[test]
fn same_seed_same_ledger_and_resume() {
    let cfg = RunConfig {
        max_depth: 5,
        ..world::config()
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        dir.path().join("a.jsonl"),
        dir.path().join("b.jsonl"),
        dir.path().join("c.jsonl"),
    );
    let ridge = RidgeKind::default();
    let full = run(&cfg, &backends(0.1), &ridge, Some(&a)).unwrap();
    run(&cfg, &backends(0.1), &ridge, Some(&b)).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let through_level_2 = (1 + 20 + 40) * cfg.trials_per_prompt;
    let broken = Backends::new(
        world::failing_task_backend(through_level_2),
        world::summarizer_backend(),
        world::generator_backend(0.1),
    );
    assert!(matches!(run(&cfg, &broken, &ridge, Some(&c)), Err(OptimizeError::Llm(_))));
    assert_eq!(Ledger::load(&c).unwrap().len(), 61);

    let instances = world::instances(cfg.trials_per_prompt);
    let (templates, meta) = (FeedbackTemplates::builtin(), MetaPrompts::builtin());
    let healthy = backends(0.1);
    let opt = Optimizer {
        cfg: &cfg,
        instances: &instances,
        templates: &templates,
        meta: &meta,
        backends: &healthy,
        predictor: &ridge,
        dump_dir: None,
    };
    let resumed = opt.resume(&c).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    assert_eq!(resumed.best, full.best);
    assert_eq!(resumed.report.per_level_max, full.report.per_level_max);

    let idle = backends(0.1);
    let opt = Optimizer { backends: &idle, ..opt };
    let again = opt.resume(&c).unwrap();
    assert!(again.levels.is_empty());
    assert_eq!(idle.calls(), Default::default());
    assert_eq!(again.best, full.best);

    let text = std::fs::read_to_string(&c).unwrap();
    let lines = text.lines().count();
    std::fs::write(&c, &text[..text.len() - 10]).unwrap();
    match opt.resume(&c) {
        Err(OptimizeError::Ledger(promst::LedgerError::Parse { line, .. })) => assert_eq!(line, lines),
        other => panic!("expected a parse error, got {:?}", other.err()),
    }
}

#[test]
fn curve_table_lists_levels() {
    let cfg = RunConfig {
        beam_width: 1,
        expansion_first: 2,
        expansion_rest: 2,
        max_depth: 4,
        ..world::config()
    };
    let out = run(&cfg, &backends(0.1), &RidgeKind::default(), None).unwrap();
    let table = out.report.curve_table();
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().last().unwrap().trim_start().starts_with("3"));
}
