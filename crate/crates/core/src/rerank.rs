//! Final ordering of scored candidates and the listwise window step.

use crate::backend::{BackendFailure, TokenUsage};
use crate::corpus::{ChunkRef, Corpus, PaperId};
use crate::verify::{CheckpointScore, ScoredPaper};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::{self, Write};
use thiserror::Error;

pub const DEFAULT_CUTOFF: usize = 20;
pub const DEFAULT_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: u32,
    pub paper_id: PaperId,
    pub relevance: f64,
    pub mean_score: f64,
    pub confidence: f64,
    pub checkpoint_scores: Vec<CheckpointScore>,
    pub evidence: Vec<ChunkRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub cutoff: usize,
    pub entries: Vec<RankedEntry>,
    /// Score order before a listwise backend permuted the window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_rerank_order: Option<Vec<PaperId>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub audit: Vec<String>,
}

impl RankedList {
    pub fn empty(cutoff: usize) -> Self {
        Self {
            cutoff,
            entries: Vec::new(),
            pre_rerank_order: None,
            audit: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<PaperId> {
        self.entries.iter().map(|e| e.paper_id.clone()).collect()
    }

    fn renumber(&mut self) {
        for (i, e) in self.entries.iter_mut().enumerate() {
            e.rank = i as u32 + 1;
        }
    }
}

/// Relevance descending, then mean score descending, then id ascending.
pub fn rank_order(a: &ScoredPaper, b: &ScoredPaper) -> Ordering {
    b.relevance
        .total_cmp(&a.relevance)
        .then_with(|| b.mean_score.total_cmp(&a.mean_score))
        .then_with(|| a.paper_id.cmp(&b.paper_id))
}

/// Sort scored candidates and keep the best `cutoff`.
pub fn final_rank<'a, I>(scored: I, cutoff: usize) -> RankedList
where
    I: IntoIterator<Item = &'a ScoredPaper>,
{
    assert!(cutoff >= 1, "cutoff must be positive");
    let mut all: Vec<&ScoredPaper> = scored.into_iter().collect();
    all.sort_by(|a, b| rank_order(a, b));
    all.dedup_by(|a, b| a.paper_id == b.paper_id);
    let mut list = RankedList::empty(cutoff);
    list.entries = all
        .into_iter()
        .take(cutoff)
        .map(|s| RankedEntry {
            rank: 0,
            paper_id: s.paper_id.clone(),
            relevance: s.relevance,
            mean_score: s.mean_score,
            confidence: s.confidence,
            checkpoint_scores: s.checkpoint_scores.clone(),
            evidence: s.evidence.chunk_refs().into_iter().collect(),
        })
        .collect();
    list.renumber();
    list
}

/// What a listwise backend sees for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListwiseCandidate {
    pub paper_id: PaperId,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
    pub relevance: f64,
    pub mean_score: f64,
    pub rationales: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListwiseRequest {
    pub query: String,
    pub candidates: Vec<ListwiseCandidate>,
}

/// Listwise reranker contract: return a permutation of the request ids.
pub trait ListwiseBackend: Send + Sync {
    fn name(&self) -> &str;

    fn reorder(&self, request: &ListwiseRequest) -> Result<(Vec<PaperId>, TokenUsage), BackendFailure>;
}

/// Leaves the window as it is.
#[derive(Debug, Clone, Default)]
pub struct IdentityListwise;

impl ListwiseBackend for IdentityListwise {
    fn name(&self) -> &str {
        "identity"
    }

    fn reorder(&self, request: &ListwiseRequest) -> Result<(Vec<PaperId>, TokenUsage), BackendFailure> {
        Ok((
            request.candidates.iter().map(|c| c.paper_id.clone()).collect(),
            TokenUsage::none(),
        ))
    }
}

/// Listwise backend driven by a closure over the window ids.
pub struct FnListwise<F> {
    name: String,
    f: F,
}

impl<F> FnListwise<F>
where
    F: Fn(&[PaperId]) -> Vec<PaperId> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> ListwiseBackend for FnListwise<F>
where
    F: Fn(&[PaperId]) -> Vec<PaperId> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn reorder(&self, request: &ListwiseRequest) -> Result<(Vec<PaperId>, TokenUsage), BackendFailure> {
        let ids: Vec<PaperId> = request.candidates.iter().map(|c| c.paper_id.clone()).collect();
        Ok(((self.f)(&ids), TokenUsage::none()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RerankError {
    #[error("listwise backend returned an invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error(transparent)]
    Backend(#[from] BackendFailure),
}

/// Build the backend request for the top `window` entries.
pub fn listwise_request(query: &str, ranked: &RankedList, window: usize, corpus: &Corpus) -> ListwiseRequest {
    let window = window.min(ranked.len());
    ListwiseRequest {
        query: query.to_string(),
        candidates: ranked.entries[..window]
            .iter()
            .map(|e| ListwiseCandidate {
                paper_id: e.paper_id.clone(),
                title: corpus
                    .paper(e.paper_id.as_str())
                    .map(|p| p.title.clone())
                    .unwrap_or_default(),
                abstract_text: corpus
                    .abstract_of(e.paper_id.as_str())
                    .ok()
                    .map(|a| a.abstract_text.clone()),
                relevance: e.relevance,
                mean_score: e.mean_score,
                rationales: e.checkpoint_scores.iter().map(|c| c.rationale.clone()).collect(),
            })
            .collect(),
    }
}

/// Replace the top-`window` entries by the backend's permutation.
///
/// On an invalid permutation or backend failure the list is left unchanged,
/// an audit line is appended, and the error is returned.
pub fn apply_listwise_window(
    ranked: &mut RankedList,
    request: &ListwiseRequest,
    backend: &dyn ListwiseBackend,
) -> Result<TokenUsage, RerankError> {
    let window = request.candidates.len().min(ranked.len());
    if window == 0 {
        return Ok(TokenUsage::none());
    }
    let expected: Vec<PaperId> = ranked.entries[..window].iter().map(|e| e.paper_id.clone()).collect();
    let (order, usage) = match backend.reorder(request) {
        Ok(r) => r,
        Err(e) => {
            ranked.audit.push(format!("listwise `{}` failed; window kept: {e}", backend.name()));
            return Err(e.into());
        }
    };
    if let Err(reason) = check_permutation(&expected, &order) {
        ranked
            .audit
            .push(format!("listwise `{}` rejected; window kept: {reason}", backend.name()));
        return Err(RerankError::InvalidPermutation(reason));
    }
    if order == expected {
        return Ok(usage);
    }
    let before = ranked.ids();
    let mut window_entries: Vec<Option<RankedEntry>> = ranked.entries.drain(..window).map(Some).collect();
    let mut reordered = Vec::with_capacity(window);
    for id in &order {
        let slot = window_entries
            .iter_mut()
            .find(|e| e.as_ref().is_some_and(|e| &e.paper_id == id))
            .expect("validated permutation");
        reordered.push(slot.take().expect("each id used once"));
    }
    reordered.append(&mut ranked.entries);
    ranked.entries = reordered;
    ranked.renumber();
    ranked.pre_rerank_order.get_or_insert(before);
    ranked
        .audit
        .push(format!("listwise `{}` reordered top {window}", backend.name()));
    Ok(usage)
}

fn check_permutation(expected: &[PaperId], got: &[PaperId]) -> Result<(), String> {
    if got.len() != expected.len() {
        return Err(format!("expected {} ids, got {}", expected.len(), got.len()));
    }
    let want: BTreeSet<&PaperId> = expected.iter().collect();
    let mut seen = BTreeSet::new();
    for id in got {
        if !want.contains(id) {
            return Err(format!("id `{id}` is not in the window"));
        }
        if !seen.insert(id) {
            return Err(format!("id `{id}` appears twice"));
        }
    }
    Ok(())
}

/// One line of the ranked-list output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub rank: u32,
    pub paper_id: PaperId,
    pub relevance: f64,
    pub mean_score: f64,
    pub confidence: f64,
    pub checkpoint_scores: Vec<LineCheckpoint>,
    pub evidence: Vec<String>,
    pub title: String,
    pub authors: Vec<String>,
    pub date: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCheckpoint {
    pub checkpoint_id: u32,
    pub score: u8,
    pub rationale: String,
    pub cited_chunks: Vec<String>,
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Render entries as output lines, copying citation fields from the corpus.
pub fn ranked_lines(ranked: &RankedList, corpus: &Corpus, task_id: Option<&str>, cost_usd: Option<f64>) -> Vec<RankedLine> {
    ranked
        .entries
        .iter()
        .filter_map(|e| {
            let record = corpus.paper(e.paper_id.as_str()).ok()?;
            Some(RankedLine {
                task_id: task_id.map(str::to_string),
                rank: e.rank,
                paper_id: e.paper_id.clone(),
                relevance: round6(e.relevance),
                mean_score: e.mean_score,
                confidence: e.confidence,
                checkpoint_scores: e
                    .checkpoint_scores
                    .iter()
                    .map(|c| LineCheckpoint {
                        checkpoint_id: c.checkpoint_id,
                        score: c.score,
                        rationale: c.rationale.clone(),
                        cited_chunks: c.cited_chunks.iter().map(ToString::to_string).collect(),
                    })
                    .collect(),
                evidence: e.evidence.iter().map(ToString::to_string).collect(),
                title: record.title.clone(),
                authors: record.authors.clone(),
                date: record.date.clone(),
                link: record
                    .link
                    .clone()
                    .or_else(|| record.doi.as_ref().map(|d| format!("https://doi.org/{d}"))),
                doi: record.doi.clone(),
                cost_usd,
            })
        })
        .collect()
}

/// Write output lines as JSON Lines.
pub fn write_ranked_lines<W: Write>(lines: &[RankedLine], mut out: W) -> io::Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::EvidenceSet;

    fn sp(id: &str, relevance: f64, mean: f64) -> ScoredPaper {
        ScoredPaper {
            paper_id: id.into(),
            checkpoint_scores: Vec::new(),
            mean_score: mean,
            confidence: 0.5,
            relevance,
            evidence: EvidenceSet::default(),
            checklist_fingerprint: String::new(),
        }
    }

    fn ids(list: &RankedList) -> Vec<&str> {
        list.entries.iter().map(|e| e.paper_id.as_str()).collect()
    }

    #[test]
    fn sorts_by_relevance() {
        let scored = [sp("a", 0.9, 4.0), sp("b", 0.7, 4.0), sp("c", 0.8, 4.0)];
        let list = final_rank(&scored, 20);
        assert_eq!(ids(&list), ["a", "c", "b"]);
        assert_eq!(list.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn ties_break_on_mean_then_id() {
        let scored = [sp("z", 0.5, 3.0), sp("y", 0.5, 3.0), sp("x", 0.5, 3.5)];
        assert_eq!(ids(&final_rank(&scored, 20)), ["x", "y", "z"]);
        assert_eq!(final_rank(&scored, 1).len(), 1);
        assert!(final_rank(std::iter::empty(), 5).is_empty());
    }

    fn list_of(n: usize) -> RankedList {
        let scored: Vec<_> = (0..n).map(|i| sp(&format!("p{i}"), 0.9 - i as f64 * 0.01, 4.0)).collect();
        final_rank(&scored, 20)
    }

    fn request(list: &RankedList, m: usize) -> ListwiseRequest {
        ListwiseRequest {
            query: "q".into(),
            candidates: list.entries[..m.min(list.len())]
                .iter()
                .map(|e| ListwiseCandidate {
                    paper_id: e.paper_id.clone(),
                    title: String::new(),
                    abstract_text: None,
                    relevance: e.relevance,
                    mean_score: e.mean_score,
                    rationales: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn identity_window() {
        let mut list = list_of(5);
        let before = list.clone();
        let req = request(&list, 5);
        apply_listwise_window(&mut list, &req, &IdentityListwise).unwrap();
        assert_eq!(list, before);
    }

    #[test]
    fn reversal_window() {
        let mut list = list_of(5);
        let reverse = FnListwise::new("reverse", |ids: &[PaperId]| ids.iter().rev().cloned().collect());
        let req = request(&list, 3);
        apply_listwise_window(&mut list, &req, &reverse).unwrap();
        assert_eq!(ids(&list), ["p2", "p1", "p0", "p3", "p4"]);
        assert_eq!(list.entries.iter().map(|e| e.rank).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
        assert_eq!(list.pre_rerank_order.as_ref().unwrap()[0].as_str(), "p0");
    }

    #[test]
    fn invalid_permutation_keeps_window() {
        let mut list = list_of(4);
        let before = list.entries.clone();
        let intruder = FnListwise::new("intruder", |ids: &[PaperId]| {
            let mut v = ids.to_vec();
            v[0] = "outsider".into();
            v
        });
        let req = request(&list, 3);
        let err = apply_listwise_window(&mut list, &req, &intruder).unwrap_err();
        assert!(matches!(err, RerankError::InvalidPermutation(_)));
        assert_eq!(list.entries, before);
        assert_eq!(list.audit.len(), 1);

        let dup = FnListwise::new("dup", |ids: &[PaperId]| vec![ids[0].clone(); ids.len()]);
        assert!(apply_listwise_window(&mut list, &req, &dup).is_err());
        let short = FnListwise::new("short", |ids: &[PaperId]| ids[1..].to_vec());
        assert!(apply_listwise_window(&mut list, &req, &short).is_err());
        assert_eq!(list.entries, before);
    }
}
