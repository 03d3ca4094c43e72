mod common;

use common::{keyword_backends, ten_paper_corpus};
use litsearch_core::backend::{BackendFailure, TokenUsage};
use litsearch_core::channels::SearchStrategy;
use litsearch_core::corpus::PaperId;
use litsearch_core::encoder::HashingEncoder;
use litsearch_core::orchestrator::{
    AuditEvent, Backends, EngineConfig, FnNavigator, NavigatorBackend, Plan, Rate, RateTable, Reflection, Role, ScriptedNavigator,
    SearchEngine, SearchError, SearchIntent, TerminationReason,
};
use litsearch_core::verify::{Checklist, CheckpointJudgment, FnScorer, JudgeRequest, Judged, Judgment, ScorerBackend};
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

const JUDGE_MODEL: &str = "judge-model";

fn seeds(ids: &[&str]) -> SearchStrategy {
    SearchStrategy {
        seed_paper_ids: ids.iter().map(|s| PaperId::from(*s)).collect(),
        expansion_depth: 1,
        ..SearchStrategy::default()
    }
}

fn checklist(items: &[&str]) -> Checklist {
    Checklist::from_texts(items.iter().copied())
}

/// Scorer giving every checkpoint `score` and the given confidence, except
/// that papers in `broken` get an out-of-range score. Counts calls.
fn fixed_scorer(score: i64, confidence: f64, broken: &'static [&'static str], calls: Arc<AtomicUsize>) -> impl ScorerBackend {
    FnScorer::new("fixed", move |req: &JudgeRequest| {
        calls.fetch_add(1, Ordering::SeqCst);
        let bad = broken.contains(&req.paper.paper_id.as_str());
        Ok(Judged {
            judgment: Judgment {
                scores: req
                    .checklist
                    .checkpoints
                    .iter()
                    .map(|c| CheckpointJudgment {
                        checkpoint_id: c.checkpoint_id,
                        score: if bad { 9 } else { score },
                        rationale: String::new(),
                        cited_chunks: req
                            .paper
                            .evidence
                            .iter()
                            .filter(|p| p.checkpoint_id == c.checkpoint_id)
                            .map(|p| p.chunk_index)
                            .take(1)
                            .collect(),
                    })
                    .collect(),
                confidence,
            },
            usage: TokenUsage::new(JUDGE_MODEL, 1000, 200),
        })
    })
}

fn engine(nav: Arc<dyn NavigatorBackend>, scorer: impl ScorerBackend + 'static, config: EngineConfig, rates: RateTable) -> SearchEngine {
    let backends = Backends::new(Arc::new(HashingEncoder::default()), nav, Arc::new(scorer));
    SearchEngine::new(Arc::new(ten_paper_corpus()), backends, config, rates).unwrap()
}

fn scripted(plan: SearchStrategy, reflections: Vec<SearchStrategy>) -> Arc<ScriptedNavigator> {
    let list = checklist(&["molecular graphs", "property prediction"]);
    Arc::new(ScriptedNavigator {
        plan: Plan {
            strategy: plan,
            checklist: list.clone(),
        },
        reflections: reflections
            .into_iter()
            .map(|strategy| Reflection {
                strategy,
                checklist: list.clone(),
                stop: false,
            })
            .collect(),
    })
}

#[test]
fn scores_are_cached_until_the_checklist_changes() {
    let calls = Arc::new(AtomicUsize::new(0));
    let nav = scripted(seeds(&["p01"]), vec![]);
    let engine = engine(nav, fixed_scorer(4, 0.8, &[], calls.clone()), EngineConfig::default(), RateTable::new());
    let mut session = engine.start_session(SearchIntent::new("molecules"));
    let first = checklist(&["molecular graphs"]);

    let pool = engine.run_round(&mut session, &seeds(&["p01"]), &first).unwrap().pool.len();
    assert_eq!(calls.load(Ordering::SeqCst), pool);

    let record = engine.run_round(&mut session, &seeds(&["p03"]), &first).unwrap();
    let added = record.new_candidates.len();
    let pool_after = record.pool.len();
    assert!(added > 0);
    assert_eq!(calls.load(Ordering::SeqCst), pool + added);

    let second = checklist(&["molecular graphs", "attention"]);
    engine.run_round(&mut session, &seeds(&["p03"]), &second).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), pool + added + pool_after);
    for s in &session.history[2].scored {
        assert_eq!(s.checklist_fingerprint, second.fingerprint());
        assert_eq!(s.checkpoint_scores.len(), 2);
    }
}

#[test]
fn unknown_seeds_exhaust_the_session() {
    let nav = scripted(seeds(&["nowhere"]), vec![]);
    let engine = engine(nav, fixed_scorer(5, 0.9, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    let (ranked, session) = engine.run_search(SearchIntent::new("anything")).unwrap();
    let t = session.termination.unwrap();
    assert_eq!((t.reason, t.rounds), (TerminationReason::Exhausted, 1));
    assert!(ranked.is_empty());
}

#[test]
fn weak_rounds_stop_with_no_new_relevant() {
    let nav = scripted(seeds(&["p01"]), vec![seeds(&["p03"])]);
    let engine = engine(nav, fixed_scorer(1, 0.01, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    let (ranked, session) = engine.run_search(SearchIntent::new("molecules")).unwrap();
    let t = session.termination.unwrap();
    assert_eq!((t.reason, t.rounds), (TerminationReason::NoNewRelevant, 1));
    // Weak papers are still ranked.
    assert!(!ranked.is_empty());
}

#[test]
fn final_ranking_covers_every_round() {
    let nav = scripted(seeds(&["p01"]), vec![seeds(&["p03"]), seeds(&["p07"])]);
    let config = EngineConfig {
        max_rounds: 2,
        ..EngineConfig::default()
    };
    let engine = engine(nav, fixed_scorer(5, 0.9, &[], Arc::default()), config, RateTable::new());
    let (ranked, session) = engine.run_search(SearchIntent::new("molecules")).unwrap();
    let t = session.termination.as_ref().unwrap();
    assert_eq!((t.reason, t.rounds), (TerminationReason::MaxRounds, 2));
    let ids: BTreeSet<PaperId> = ranked.ids().into_iter().collect();
    for record in &session.history {
        for id in record.pool.ids() {
            assert!(ids.contains(id), "{id} from round {} missing", record.round);
        }
    }
    assert!(ids.contains("p02") && ids.contains("p04"));
}

#[test]
fn navigator_stop_ends_after_first_round() {
    let nav = scripted(seeds(&["p01"]), vec![]);
    let engine = engine(nav, fixed_scorer(5, 0.9, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    let (_, session) = engine.run_search(SearchIntent::new("molecules")).unwrap();
    let t = session.termination.unwrap();
    assert_eq!((t.reason, t.rounds), (TerminationReason::NavigatorStop, 1));
}

fn fn_navigator(reflect: impl Fn() -> Result<Reflection, BackendFailure> + Send + Sync + 'static) -> Arc<FnNavigator> {
    Arc::new(FnNavigator::new(
        "fn-nav",
        |_| {
            Ok(Plan {
                strategy: seeds(&["p01"]),
                checklist: checklist(&["molecular graphs"]),
            })
        },
        move |_| reflect(),
    ))
}

#[test]
fn invalid_reflection_keeps_last_ranking() {
    let nav = fn_navigator(|| {
        Ok(Reflection {
            strategy: seeds(&["p03"]),
            checklist: Checklist::from_texts(Vec::<String>::new()),
            stop: false,
        })
    });
    let engine = engine(nav, fixed_scorer(5, 0.9, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    let (ranked, session) = engine.run_search(SearchIntent::new("molecules")).unwrap();
    let t = session.termination.clone().unwrap();
    assert_eq!((t.reason, t.rounds), (TerminationReason::InvalidReflection, 1));
    assert!(t.detail.is_some());
    assert_eq!(ranked.ids(), session.history[0].ranked.ids());
}

#[test]
fn failing_reflect_is_a_backend_failure() {
    let nav = fn_navigator(|| Err(BackendFailure::new("fn-nav", "connection reset")));
    let engine = engine(nav, fixed_scorer(5, 0.9, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    let (ranked, session) = engine.run_search(SearchIntent::new("molecules")).unwrap();
    let t = session.termination.unwrap();
    assert_eq!(t.reason, TerminationReason::BackendFailure);
    assert!(t.detail.unwrap().contains("connection reset"));
    assert!(!ranked.is_empty());
}

#[test]
fn bad_plans_are_errors() {
    let empty = Arc::new(FnNavigator::new(
        "fn-nav",
        |_| {
            Ok(Plan {
                strategy: seeds(&["p01"]),
                checklist: Checklist::from_texts(Vec::<String>::new()),
            })
        },
        |_| unreachable!(),
    ));
    let e = engine(empty, fixed_scorer(5, 0.9, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    assert!(matches!(e.run_search(SearchIntent::new("q")), Err(SearchError::InvalidPlan(_))));

    let failing = Arc::new(FnNavigator::new("fn-nav", |_| Err(BackendFailure::new("fn-nav", "down")), |_| unreachable!()));
    let e = engine(failing, fixed_scorer(5, 0.9, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    assert!(matches!(e.run_search(SearchIntent::new("q")), Err(SearchError::Backend(_))));

    let e = engine(scripted(seeds(&["p01"]), vec![]), fixed_scorer(5, 0.9, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    assert!(matches!(e.run_search(SearchIntent::new("   ")), Err(SearchError::InvalidPlan(_))));
}

#[test]
fn malformed_judgments_are_excluded_and_audited() {
    let calls = Arc::new(AtomicUsize::new(0));
    let nav = scripted(seeds(&["p01"]), vec![]);
    let engine = engine(nav, fixed_scorer(5, 0.9, &["p02"], calls), EngineConfig::default(), RateTable::new());
    let (ranked, session) = engine.run_search(SearchIntent::new("molecules")).unwrap();
    assert!(session.pool().contains(&PaperId::from("p02")));
    assert!(!ranked.ids().iter().any(|id| id.as_str() == "p02"));
    let unscored = &session.history[0].unscored;
    assert_eq!(unscored.len(), 1);
    assert_eq!(unscored[0].paper_id.as_str(), "p02");
    let audited = session.audit.iter().any(|e| {
        matches!(e, AuditEvent::BackendCall { role: Role::Score, paper_id: Some(p), outcome, usage, .. }
            if p.as_str() == "p02" && outcome != "ok" && !usage.is_empty())
    });
    assert!(audited);
}

#[test]
fn ledger_charges_every_judge_call() {
    let calls = Arc::new(AtomicUsize::new(0));
    let mut rates = RateTable::new();
    rates.insert(JUDGE_MODEL.into(), Rate::from_usd(3.0, 15.0).unwrap());
    let nav = scripted(seeds(&["p01"]), vec![seeds(&["p03"])]);
    let engine = engine(nav, fixed_scorer(5, 0.9, &["p06"], calls.clone()), EngineConfig::default(), rates);
    let (_, session) = engine.run_search(SearchIntent::new("molecules")).unwrap();
    let n = calls.load(Ordering::SeqCst) as u128;
    assert!(n > 0);
    // 1000 × 3 µ$ + 200 × 15 µ$ per million tokens = 6e9 pico-dollars a call.
    assert_eq!(session.ledger.total.0, n * 6_000_000_000);
    assert_eq!(session.ledger.input_tokens() as u128, n * 1000);
    assert!(session.ledger.warnings.is_empty());
    let logged = session
        .audit
        .iter()
        .filter(|e| matches!(e, AuditEvent::BackendCall { role: Role::Score, .. }))
        .count() as u128;
    assert_eq!(logged, n);
}

#[test]
fn unpriced_models_are_free_but_flagged() {
    let nav = scripted(seeds(&["p01"]), vec![]);
    let engine = engine(nav, fixed_scorer(5, 0.9, &[], Arc::default()), EngineConfig::default(), RateTable::new());
    let (_, session) = engine.run_search(SearchIntent::new("molecules")).unwrap();
    assert_eq!(session.ledger.total.0, 0);
    assert_eq!(session.ledger.warnings.len(), 1);
}

#[test]
fn concurrent_sessions_match_sequential_runs() {
    let nav = Arc::new(common::evolving_navigator());
    let engine = Arc::new(SearchEngine::new(Arc::new(ten_paper_corpus()), keyword_backends(nav), EngineConfig::default(), RateTable::new()).unwrap());
    let queries = [
        "graph neural networks for molecules",
        "protein structure prediction",
        "crop yield forecasting",
        "attention on graphs",
    ];
    let sequential: Vec<_> = queries
        .iter()
        .map(|q| engine.run_search(SearchIntent::new(*q)).unwrap().0)
        .collect();
    let handles: Vec<_> = queries
        .iter()
        .map(|q| {
            let engine = engine.clone();
            let q = q.to_string();
            std::thread::spawn(move || engine.run_search(SearchIntent::new(q)).unwrap().0)
        })
        .collect();
    for (h, expected) in handles.into_iter().zip(sequential) {
        assert_eq!(h.join().unwrap(), expected);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let run = |workers| {
        let nav = Arc::new(common::evolving_navigator());
        let backends = Backends::new(Arc::new(HashingEncoder::default()), nav, Arc::new(common::random_scorer(7, 4)))
            .with_listwise(common::random_listwise(7));
        let config = EngineConfig {
            workers,
            ..EngineConfig::default()
        };
        let engine = SearchEngine::new(Arc::new(ten_paper_corpus()), backends, config, RateTable::new()).unwrap();
        let (ranked, session) = engine.run_search(SearchIntent::new("molecular graph networks")).unwrap();
        let mut log = Vec::new();
        session.write_audit_log(&mut log).unwrap();
        (ranked, log)
    };
    let one = run(1);
    assert_eq!(run(8), one);
    assert_eq!(run(3), one);
}
