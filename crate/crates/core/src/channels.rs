//! Retrieval channels and the candidate-pool union.
//!
//! Three channels feed the pool: semantic search over abstract embeddings,
//! citation-graph expansion from seed papers, and verification of external
//! findings against the repository. Every id a channel emits has been looked
//! up in the corpus, so nothing outside the corpus can enter a pool.

use crate::corpus::{Corpus, Direction, PaperId};
use crate::encoder::{encode, top_k_similar, EncodeError, EncoderBackend};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

pub const DEFAULT_PER_CHANNEL_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Semantic,
    Citation,
    Web,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Semantic => "semantic",
            Channel::Citation => "citation",
            Channel::Web => "web",
        })
    }
}

/// A paper reference found outside the corpus (e.g. by a web search).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalFinding {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
}

/// What to search for in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStrategy {
    #[serde(default)]
    pub semantic_queries: Vec<String>,
    #[serde(default)]
    pub seed_paper_ids: Vec<PaperId>,
    #[serde(default)]
    pub expansion_depth: u32,
    #[serde(default)]
    pub external_findings: Vec<ExternalFinding>,
    #[serde(default = "default_limit")]
    pub per_channel_limit: usize,
}

fn default_limit() -> usize {
    DEFAULT_PER_CHANNEL_LIMIT
}

impl Default for SearchStrategy {
    fn default() -> Self {
        Self {
            semantic_queries: Vec::new(),
            seed_paper_ids: Vec::new(),
            expansion_depth: 0,
            external_findings: Vec::new(),
            per_channel_limit: DEFAULT_PER_CHANNEL_LIMIT,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StrategyError {
    #[error("strategy has no semantic queries, seed papers or external findings")]
    NoChannels,
    #[error("per_channel_limit must be at least 1")]
    ZeroLimit,
    #[error("semantic query {0} is empty")]
    EmptyQuery(usize),
    #[error("external finding {0} has an empty title")]
    EmptyFindingTitle(usize),
}

impl SearchStrategy {
    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.semantic_queries.is_empty() && self.seed_paper_ids.is_empty() && self.external_findings.is_empty() {
            return Err(StrategyError::NoChannels);
        }
        if self.per_channel_limit == 0 {
            return Err(StrategyError::ZeroLimit);
        }
        if let Some(i) = self.semantic_queries.iter().position(|q| q.trim().is_empty()) {
            return Err(StrategyError::EmptyQuery(i));
        }
        if let Some(i) = self.external_findings.iter().position(|f| f.title.trim().is_empty()) {
            return Err(StrategyError::EmptyFindingTitle(i));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("the abstract tier is empty")]
    EmptyTier,
}

/// Top-`limit` papers by cosine between the query and abstract embeddings.
pub fn semantic_direct(
    query_text: &str,
    limit: usize,
    corpus: &Corpus,
    encoder: &dyn EncoderBackend,
) -> Result<Vec<(PaperId, f64)>, ChannelError> {
    assert!(limit >= 1, "limit must be positive");
    let query = encode(query_text, encoder)?;
    if corpus.abstract_count() == 0 {
        return Err(ChannelError::EmptyTier);
    }
    let items = corpus
        .abstracts()
        .map(|a| (&a.paper_id, a.embedding.as_slice()));
    Ok(top_k_similar(&query, items, limit)?
        .into_iter()
        .map(|hit| (hit.item_id.clone(), hit.score))
        .collect())
}

/// Result of a citation expansion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Expansion {
    /// Reached papers and their hop distance from the nearest seed.
    pub reached: BTreeMap<PaperId, u32>,
    /// Seeds that are not in the corpus; dropped.
    pub unknown_seeds: Vec<PaperId>,
}

impl Expansion {
    pub fn ids(&self) -> BTreeSet<PaperId> {
        self.reached.keys().cloned().collect()
    }

    /// Nearest-first, then id ascending.
    pub fn nearest(&self, limit: usize) -> Vec<PaperId> {
        let mut v: Vec<(&PaperId, u32)> = self.reached.iter().map(|(id, d)| (id, *d)).collect();
        v.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        v.into_iter().take(limit).map(|(id, _)| id.clone()).collect()
    }
}

/// Papers within `depth` hops of the seeds along reference and cited-by
/// edges, excluding the seeds.
pub fn citation_expand(seed_ids: &[PaperId], depth: u32, corpus: &Corpus) -> Expansion {
    let mut out = Expansion::default();
    let mut seeds = BTreeSet::new();
    for seed in seed_ids {
        if corpus.contains(seed.as_str()) {
            seeds.insert(seed.clone());
        } else if !out.unknown_seeds.contains(seed) {
            log::warn!("citation expansion: unknown seed `{seed}` dropped");
            out.unknown_seeds.push(seed.clone());
        }
    }
    let mut visited: BTreeMap<PaperId, u32> = seeds.iter().map(|s| (s.clone(), 0)).collect();
    let mut queue: VecDeque<(PaperId, u32)> = seeds.iter().map(|s| (s.clone(), 0)).collect();
    while let Some((id, dist)) = queue.pop_front() {
        if dist == depth {
            continue;
        }
        let neighbors = corpus
            .citation_neighbors(id.as_str(), Direction::Both)
            .expect("visited ids are corpus members");
        for n in neighbors {
            if !visited.contains_key(&n) {
                visited.insert(n.clone(), dist + 1);
                queue.push_back((n, dist + 1));
            }
        }
    }
    out.reached = visited
        .into_iter()
        .filter(|(id, _)| !seeds.contains(id))
        .collect();
    out
}

/// Which rule matched an external finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "matched_by", content = "paper_id", rename_all = "snake_case")]
pub enum WebMatch {
    Doi(PaperId),
    Title(PaperId),
    NoMatch,
}

impl WebMatch {
    pub fn paper_id(&self) -> Option<&PaperId> {
        match self {
            WebMatch::Doi(id) | WebMatch::Title(id) => Some(id),
            WebMatch::NoMatch => None,
        }
    }
}

/// Map an external finding onto a repository entry: exact normalized DOI
/// first, then exact normalized title. No fuzzy matching.
pub fn web_to_repo_verify(finding: &ExternalFinding, corpus: &Corpus) -> WebMatch {
    if let Some(id) = finding.doi.as_deref().and_then(|d| corpus.find_by_doi(d)) {
        return WebMatch::Doi(id.clone());
    }
    if let Some(id) = corpus.find_by_title(&finding.title) {
        return WebMatch::Title(id.clone());
    }
    WebMatch::NoMatch
}

/// Ids emitted by one channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelOutput {
    pub channel: Channel,
    pub ids: Vec<PaperId>,
}

/// Candidate set with per-paper provenance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub entries: BTreeMap<PaperId, BTreeSet<Channel>>,
    pub round_added: BTreeMap<PaperId, u32>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &PaperId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &PaperId> {
        self.entries.keys()
    }

    /// Fold `other` into this pool. Provenance merges; the earliest round a
    /// paper was seen is kept. Returns ids that were not present before, in
    /// id order.
    pub fn absorb(&mut self, other: &CandidatePool) -> Vec<PaperId> {
        let mut added = Vec::new();
        for (id, provenance) in &other.entries {
            let slot = self.entries.entry(id.clone()).or_insert_with(|| {
                added.push(id.clone());
                BTreeSet::new()
            });
            slot.extend(provenance.iter().copied());
            let round = other.round_added.get(id).copied().unwrap_or(0);
            self.round_added
                .entry(id.clone())
                .and_modify(|r| *r = (*r).min(round))
                .or_insert(round);
        }
        added
    }
}

/// Union of channel outputs with merged provenance, all stamped with `round`.
pub fn merge_candidates(round: u32, outputs: &[ChannelOutput]) -> CandidatePool {
    let mut pool = CandidatePool::default();
    for out in outputs {
        for id in &out.ids {
            pool.entries.entry(id.clone()).or_default().insert(out.channel);
            pool.round_added.insert(id.clone(), round);
        }
    }
    pool
}

/// Outcome of running every channel of a strategy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Retrieval {
    pub outputs: Vec<ChannelOutput>,
    /// Non-fatal channel problems (unknown seeds, unmatched findings,
    /// semantic errors).
    pub warnings: Vec<String>,
}

/// Run the three channels of `strategy` concurrently and collect their
/// outputs in a fixed channel order.
pub fn retrieve(strategy: &SearchStrategy, corpus: &Corpus, encoder: &dyn EncoderBackend) -> Retrieval {
    let limit = strategy.per_channel_limit.max(1);
    let ((semantic, citation), web) = rayon::join(
        || {
            rayon::join(
                || run_semantic(strategy, limit, corpus, encoder),
                || run_citation(strategy, limit, corpus),
            )
        },
        || run_web(strategy, corpus),
    );
    let mut retrieval = Retrieval::default();
    for (channel, (ids, warnings)) in [
        (Channel::Semantic, semantic),
        (Channel::Citation, citation),
        (Channel::Web, web),
    ] {
        retrieval.warnings.extend(warnings);
        retrieval.outputs.push(ChannelOutput { channel, ids });
    }
    retrieval
}

type ChannelRun = (Vec<PaperId>, Vec<String>);

fn run_semantic(strategy: &SearchStrategy, limit: usize, corpus: &Corpus, encoder: &dyn EncoderBackend) -> ChannelRun {
    let mut best: BTreeMap<PaperId, f64> = BTreeMap::new();
    let mut warnings = Vec::new();
    for query in &strategy.semantic_queries {
        match semantic_direct(query, limit, corpus, encoder) {
            Ok(hits) => {
                for (id, score) in hits {
                    let slot = best.entry(id).or_insert(f64::NEG_INFINITY);
                    *slot = slot.max(score);
                }
            }
            Err(e) => warnings.push(format!("semantic channel: query {query:?}: {e}")),
        }
    }
    let mut ranked: Vec<(PaperId, f64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    (ranked.into_iter().take(limit).map(|(id, _)| id).collect(), warnings)
}

fn run_citation(strategy: &SearchStrategy, limit: usize, corpus: &Corpus) -> ChannelRun {
    if strategy.seed_paper_ids.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let expansion = citation_expand(&strategy.seed_paper_ids, strategy.expansion_depth, corpus);
    let warnings = expansion
        .unknown_seeds
        .iter()
        .map(|s| format!("citation channel: unknown seed `{s}` dropped"))
        .collect();
    (expansion.nearest(limit), warnings)
}

fn run_web(strategy: &SearchStrategy, corpus: &Corpus) -> ChannelRun {
    let mut ids = Vec::new();
    let mut warnings = Vec::new();
    for finding in &strategy.external_findings {
        match web_to_repo_verify(finding, corpus) {
            WebMatch::NoMatch => warnings.push(format!(
                "web channel: finding {:?} has no repository match; discarded",
                finding.title
            )),
            m => {
                let id = m.paper_id().expect("matched").clone();
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
        }
    }
    ids.truncate(strategy.per_channel_limit.max(1));
    (ids, warnings)
}
