//! The plan → retrieve → verify → rerank → reflect loop.
//!
//! A [`SearchEngine`] owns a read-only corpus, the backends and a worker pool
//! of librarians. Each session is a sequential loop of rounds. Inside a round
//! the retrieval channels and candidate verification fan out across the pool
//! and join in paper-id order, so output never depends on worker count or
//! scheduling.

mod cost;
mod navigator;

pub use cost::{CostEntry, CostError, CostLedger, PicoUsd, Rate, RateTable};
pub use navigator::{
    FnNavigator, HeuristicNavigator, NavigatorBackend, Plan, ReflectCandidate, ReflectContext, Reflection,
    ScriptedNavigator, SearchIntent,
};

use crate::backend::{BackendFailure, TokenUsage};
use crate::channels::{merge_candidates, retrieve, CandidatePool, SearchStrategy};
use crate::corpus::{Corpus, PaperId};
use crate::encoder::EncoderBackend;
use crate::rerank::{
    apply_listwise_window, final_rank, listwise_request, rank_order, IdentityListwise, ListwiseBackend, RankedList,
    DEFAULT_CUTOFF, DEFAULT_WINDOW,
};
use crate::verify::{
    score_candidate, Checklist, EvidenceLocator, ScoredPaper, ScorerBackend, VerifyError, DEFAULT_K_EVIDENCE,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_MAX_ROUNDS: u32 = 3;
pub const DEFAULT_THETA_NEW: f64 = 0.5;
pub const DEFAULT_WORKERS: usize = 8;

impl SearchIntent {
    /// Intent with a session id derived from the query text, so identical
    /// invocations produce identical outputs.
    pub fn new(query: impl Into<String>) -> Self {
        let query = query.into();
        let digest = Sha256::digest(query.as_bytes());
        let session_id = format!("s-{}", &crate::verify::hex(&digest)[..16]);
        Self { query, session_id }
    }
}

/// Loop parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Evidence chunks per checkpoint.
    pub k_evidence: usize,
    pub max_rounds: u32,
    /// A round must add at least one new candidate scoring at least this
    /// much, or the session stops.
    pub theta_new: f64,
    /// Librarian workers.
    pub workers: usize,
    /// Listwise window size.
    pub window: usize,
    /// Final cutoff K.
    pub cutoff: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k_evidence: DEFAULT_K_EVIDENCE,
            max_rounds: DEFAULT_MAX_ROUNDS,
            theta_new: DEFAULT_THETA_NEW,
            workers: DEFAULT_WORKERS,
            window: DEFAULT_WINDOW,
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

/// The pluggable models a session talks to.
#[derive(Clone)]
pub struct Backends {
    pub encoder: Arc<dyn EncoderBackend>,
    pub navigator: Arc<dyn NavigatorBackend>,
    pub scorer: Arc<dyn ScorerBackend>,
    pub listwise: Arc<dyn ListwiseBackend>,
}

impl Backends {
    pub fn new(
        encoder: Arc<dyn EncoderBackend>,
        navigator: Arc<dyn NavigatorBackend>,
        scorer: Arc<dyn ScorerBackend>,
    ) -> Self {
        Self {
            encoder,
            navigator,
            scorer,
            listwise: Arc::new(IdentityListwise),
        }
    }

    pub fn with_listwise(mut self, listwise: Arc<dyn ListwiseBackend>) -> Self {
        self.listwise = listwise;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid reflection: {0}")]
    InvalidReflection(String),
    #[error(transparent)]
    Backend(#[from] BackendFailure),
    #[error("reflect requires at least one completed round")]
    NoCompletedRound,
    #[error("worker pool: {0}")]
    WorkerPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    NavigatorStop,
    MaxRounds,
    NoNewRelevant,
    Exhausted,
    BackendFailure,
    InvalidReflection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Termination {
    pub reason: TerminationReason,
    pub rounds: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Plan,
    Reflect,
    Score,
    Listwise,
}

/// One line of the session audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    BackendCall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        round: Option<u32>,
        role: Role,
        backend: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        paper_id: Option<PaperId>,
        outcome: String,
        #[serde(default, skip_serializing_if = "TokenUsage::is_empty")]
        usage: TokenUsage,
    },
    RoundSummary {
        round: u32,
        pool_size: usize,
        new_candidates: usize,
        scored: usize,
        unscored: usize,
        ranked: usize,
        exhausted: bool,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    Termination(Termination),
}

/// A candidate excluded from ranking in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unscored {
    pub paper_id: PaperId,
    pub reason: String,
}

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Round index, from 0.
    pub round: u32,
    pub strategy: SearchStrategy,
    pub checklist: Checklist,
    /// Cumulative pool after this round.
    pub pool: CandidatePool,
    pub new_candidates: Vec<PaperId>,
    /// Cumulative scored pool in rank order.
    pub scored: Vec<ScoredPaper>,
    pub unscored: Vec<Unscored>,
    pub ranked: RankedList,
    pub exhausted: bool,
    pub warnings: Vec<String>,
}

/// Auditable state of one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSession {
    pub intent: SearchIntent,
    pub history: Vec<RoundRecord>,
    pub ledger: CostLedger,
    pub audit: Vec<AuditEvent>,
    pub termination: Option<Termination>,
    pool: CandidatePool,
    scored: BTreeMap<PaperId, ScoredPaper>,
    failed: BTreeMap<PaperId, String>,
    /// Checklist the `scored`/`failed` caches belong to.
    cache_fingerprint: Option<String>,
}

impl SearchSession {
    pub fn new(intent: SearchIntent, rates: RateTable) -> Self {
        Self {
            intent,
            history: Vec::new(),
            ledger: CostLedger::new(rates),
            audit: Vec::new(),
            termination: None,
            pool: CandidatePool::default(),
            scored: BTreeMap::new(),
            failed: BTreeMap::new(),
            cache_fingerprint: None,
        }
    }

    /// Completed rounds.
    pub fn rounds(&self) -> u32 {
        self.history.len() as u32
    }

    pub fn pool(&self) -> &CandidatePool {
        &self.pool
    }

    /// Scored candidates (current checklist) in rank order.
    pub fn ranked_pool(&self) -> Vec<ScoredPaper> {
        let mut v: Vec<ScoredPaper> = self.scored.values().cloned().collect();
        v.sort_by(rank_order);
        v
    }

    /// Ranked list of the latest round, empty before any round.
    pub fn final_ranking(&self, cutoff: usize) -> RankedList {
        self.history
            .last()
            .map(|r| r.ranked.clone())
            .unwrap_or_else(|| RankedList::empty(cutoff))
    }

    pub fn write_audit_log<W: Write>(&self, mut out: W) -> io::Result<()> {
        for event in &self.audit {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    fn record_usage(&mut self, round: Option<u32>, role: Role, backend: &str, paper_id: Option<PaperId>, outcome: String, usage: TokenUsage) {
        if !usage.is_empty() {
            let model = if usage.model.is_empty() { backend } else { usage.model.as_str() };
            // Counts are u64 and always fit after the i64 conversion below.
            let _ = self.ledger.accumulate_cost(
                model,
                i64::try_from(usage.input_tokens).unwrap_or(i64::MAX),
                i64::try_from(usage.output_tokens).unwrap_or(i64::MAX),
            );
        }
        self.audit.push(AuditEvent::BackendCall {
            round,
            role,
            backend: backend.to_string(),
            paper_id,
            outcome,
            usage,
        });
    }

    fn terminate(&mut self, reason: TerminationReason, detail: Option<String>) {
        let t = Termination {
            reason,
            rounds: self.rounds(),
            detail,
        };
        self.audit.push(AuditEvent::Termination(t.clone()));
        self.termination = Some(t);
    }
}

/// Search engine over one read-only corpus. Cheap to share across threads;
/// concurrent sessions are independent.
pub struct SearchEngine {
    corpus: Arc<Corpus>,
    backends: Backends,
    config: EngineConfig,
    rates: RateTable,
    workers: rayon::ThreadPool,
}

impl SearchEngine {
    pub fn new(corpus: Arc<Corpus>, backends: Backends, config: EngineConfig, rates: RateTable) -> Result<Self, SearchError> {
        let workers = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers.max(1))
            .thread_name(|i| format!("librarian-{i}"))
            .build()
            .map_err(|e| SearchError::WorkerPool(e.to_string()))?;
        Ok(Self {
            corpus,
            backends,
            config,
            rates,
            workers,
        })
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn start_session(&self, intent: SearchIntent) -> SearchSession {
        SearchSession::new(intent, self.rates.clone())
    }

    /// Ask the navigator for the first strategy and checklist.
    pub fn plan(&self, session: &mut SearchSession) -> Result<Plan, SearchError> {
        if session.intent.query.trim().is_empty() {
            return Err(SearchError::InvalidPlan("query is empty".into()));
        }
        let nav = &self.backends.navigator;
        let (plan, usage) = match nav.plan(&session.intent) {
            Ok(r) => r,
            Err(e) => {
                session.record_usage(None, Role::Plan, nav.name(), None, e.to_string(), TokenUsage::none());
                return Err(e.into());
            }
        };
        let verdict = plan
            .checklist
            .validate()
            .map_err(|e| e.to_string())
            .and_then(|_| plan.strategy.validate().map_err(|e| e.to_string()));
        let outcome = match &verdict {
            Ok(()) => "ok".to_string(),
            Err(e) => format!("invalid plan: {e}"),
        };
        session.record_usage(None, Role::Plan, nav.name(), None, outcome, usage);
        verdict.map_err(SearchError::InvalidPlan)?;
        Ok(plan)
    }

    /// One retrieve → verify → rerank round, appended to the session history.
    pub fn run_round<'s>(
        &self,
        session: &'s mut SearchSession,
        strategy: &SearchStrategy,
        checklist: &Checklist,
    ) -> Result<&'s RoundRecord, SearchError> {
        strategy
            .validate()
            .map_err(|e| SearchError::InvalidPlan(e.to_string()))?;
        checklist
            .validate()
            .map_err(|e| SearchError::InvalidPlan(e.to_string()))?;
        let round = session.rounds();
        let fingerprint = checklist.fingerprint();
        if session.cache_fingerprint.as_deref() != Some(fingerprint.as_str()) {
            // Scores only mean something against the checklist that produced them.
            session.scored.clear();
            session.failed.clear();
            session.cache_fingerprint = Some(fingerprint);
        }

        let corpus = &*self.corpus;
        let retrieval = self
            .workers
            .install(|| retrieve(strategy, corpus, &*self.backends.encoder));
        let merged = merge_candidates(round, &retrieval.outputs);
        let exhausted = merged.is_empty();
        let new_candidates = session.pool.absorb(&merged);
        let mut warnings = retrieval.warnings;

        let to_score: Vec<PaperId> = session
            .pool
            .ids()
            .filter(|id| !session.scored.contains_key(*id) && !session.failed.contains_key(*id))
            .cloned()
            .collect();

        let mut unscored = Vec::new();
        let mut scored_now = 0;
        if !to_score.is_empty() {
            match EvidenceLocator::new(checklist, &*self.backends.encoder) {
                Ok(locator) => {
                    let results = self.verify_all(&locator, &to_score, &session.intent.query, checklist);
                    let scorer_name = self.backends.scorer.name().to_string();
                    for (id, result) in to_score.iter().zip(results) {
                        match result {
                            Ok((paper, usage)) => {
                                session.record_usage(Some(round), Role::Score, &scorer_name, Some(id.clone()), "ok".into(), usage);
                                session.scored.insert(id.clone(), paper);
                                scored_now += 1;
                            }
                            Err(err) => {
                                let usage = match &err {
                                    VerifyError::MalformedJudgment { usage, .. } => usage.clone(),
                                    _ => TokenUsage::none(),
                                };
                                let reason = err.to_string();
                                session.record_usage(Some(round), Role::Score, &scorer_name, Some(id.clone()), reason.clone(), usage);
                                session.failed.insert(id.clone(), reason.clone());
                                unscored.push(Unscored {
                                    paper_id: id.clone(),
                                    reason,
                                });
                            }
                        }
                    }
                }
                Err(err) => {
                    warnings.push(format!("checklist could not be encoded: {err}"));
                    unscored.extend(to_score.iter().map(|id| Unscored {
                        paper_id: id.clone(),
                        reason: err.to_string(),
                    }));
                }
            }
        }

        let ranked_pool = session.ranked_pool();
        let mut ranked = final_rank(&ranked_pool, self.config.cutoff.max(1));
        if self.config.window > 0 && !ranked.is_empty() {
            let request = listwise_request(&session.intent.query, &ranked, self.config.window, corpus);
            let lw = &self.backends.listwise;
            let (outcome, usage) = match apply_listwise_window(&mut ranked, &request, &**lw) {
                Ok(usage) => ("ok".to_string(), usage),
                Err(e) => (e.to_string(), TokenUsage::none()),
            };
            session.record_usage(Some(round), Role::Listwise, lw.name(), None, outcome, usage);
        }

        session.audit.push(AuditEvent::RoundSummary {
            round,
            pool_size: session.pool.len(),
            new_candidates: new_candidates.len(),
            scored: scored_now,
            unscored: unscored.len(),
            ranked: ranked.len(),
            exhausted,
            warnings: warnings.clone(),
        });
        session.history.push(RoundRecord {
            round,
            strategy: strategy.clone(),
            checklist: checklist.clone(),
            pool: session.pool.clone(),
            new_candidates,
            scored: ranked_pool,
            unscored,
            ranked,
            exhausted,
            warnings,
        });
        Ok(session.history.last().expect("just pushed"))
    }

    fn verify_all(
        &self,
        locator: &EvidenceLocator,
        ids: &[PaperId],
        query: &str,
        checklist: &Checklist,
    ) -> Vec<Result<(ScoredPaper, TokenUsage), VerifyError>> {
        let corpus = &*self.corpus;
        let scorer = &*self.backends.scorer;
        let k = self.config.k_evidence.max(1);
        // Indexed parallel collect keeps input order regardless of which
        // librarian finishes first.
        self.workers.install(|| {
            ids.par_iter()
                .map(|id| {
                    let evidence = locator.locate(id.as_str(), k, corpus)?;
                    score_candidate(id.as_str(), query, checklist, evidence, scorer, corpus)
                })
                .collect()
        })
    }

    /// Let the navigator refine strategy and checklist from the ranked
    /// scored pool.
    pub fn reflect_step(&self, session: &mut SearchSession) -> Result<Reflection, SearchError> {
        let last = session.history.last().ok_or(SearchError::NoCompletedRound)?;
        let context = ReflectContext {
            query: session.intent.query.clone(),
            round: session.rounds(),
            strategy: last.strategy.clone(),
            checklist: last.checklist.clone(),
            ranked: last
                .scored
                .iter()
                .map(|s| ReflectCandidate {
                    paper_id: s.paper_id.clone(),
                    title: self
                        .corpus
                        .paper(s.paper_id.as_str())
                        .map(|p| p.title.clone())
                        .unwrap_or_default(),
                    relevance: s.relevance,
                    mean_score: s.mean_score,
                    checkpoint_scores: s.checkpoint_scores.iter().map(|c| c.score).collect(),
                })
                .collect(),
        };
        let nav = &self.backends.navigator;
        let round = Some(session.rounds() - 1);
        let (reflection, usage) = match nav.reflect(&context) {
            Ok(r) => r,
            Err(e) => {
                session.record_usage(round, Role::Reflect, nav.name(), None, e.to_string(), TokenUsage::none());
                return Err(e.into());
            }
        };
        let verdict = reflection
            .checklist
            .validate()
            .map_err(|e| e.to_string())
            .and_then(|_| reflection.strategy.validate().map_err(|e| e.to_string()));
        let outcome = match &verdict {
            Ok(()) if reflection.stop => "ok; stop".to_string(),
            Ok(()) => "ok".to_string(),
            Err(e) => format!("invalid reflection: {e}"),
        };
        session.record_usage(round, Role::Reflect, nav.name(), None, outcome, usage);
        verdict.map_err(SearchError::InvalidReflection)?;
        Ok(reflection)
    }

    /// Full loop: plan, then rounds until a termination rule fires.
    ///
    /// Stops when a round finds no candidates at all, when a round adds no
    /// new candidate with relevance at least `theta_new`, after
    /// `max_rounds`, or when the navigator asks to stop. Only an invalid
    /// plan or a failing plan call is an error; later failures end the
    /// session with the last ranking.
    pub fn run_search(&self, intent: SearchIntent) -> Result<(RankedList, SearchSession), SearchError> {
        let mut session = self.start_session(intent);
        let plan = self.plan(&mut session)?;
        let (mut strategy, mut checklist) = (plan.strategy, plan.checklist);
        let max_rounds = self.config.max_rounds.max(1);
        loop {
            let record = self.run_round(&mut session, &strategy, &checklist)?;
            let (exhausted, new_candidates) = (record.exhausted, record.new_candidates.clone());
            if exhausted {
                session.terminate(TerminationReason::Exhausted, None);
                break;
            }
            let theta = self.config.theta_new;
            let new_relevant = new_candidates
                .iter()
                .filter(|id| session.scored.get(*id).is_some_and(|s| s.relevance >= theta))
                .count();
            if new_relevant == 0 {
                session.terminate(TerminationReason::NoNewRelevant, None);
                break;
            }
            if session.rounds() >= max_rounds {
                session.terminate(TerminationReason::MaxRounds, None);
                break;
            }
            match self.reflect_step(&mut session) {
                Ok(r) if r.stop => {
                    session.terminate(TerminationReason::NavigatorStop, None);
                    break;
                }
                Ok(r) => {
                    strategy = r.strategy;
                    checklist = r.checklist;
                }
                Err(SearchError::InvalidReflection(msg)) => {
                    session.terminate(TerminationReason::InvalidReflection, Some(msg));
                    break;
                }
                Err(e) => {
                    session.terminate(TerminationReason::BackendFailure, Some(e.to_string()));
                    break;
                }
            }
        }
        Ok((session.final_ranking(self.config.cutoff), session))
    }
}
