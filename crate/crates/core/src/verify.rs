//! Evidence-grounded verification of candidates against a checklist.
//!
//! For each checkpoint the best-matching chunks of the candidate are located
//! with the shared encoder; a scorer backend then grades every checkpoint on
//! a 1..=5 scale, cites the chunks it relied on, and reports an overall
//! confidence. Relevance is `(mean score + confidence) / 6`.

use crate::backend::{BackendFailure, TokenUsage};
use crate::corpus::{ChunkRef, Corpus, PaperId, ReadError};
use crate::encoder::{encode_many, top_k_similar, EncodeError, Embedding, EncoderBackend};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

pub const DEFAULT_K_EVIDENCE: usize = 3;
pub const MIN_SCORE: u8 = 1;
pub const MAX_SCORE: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub checkpoint_id: u32,
    pub requirement_text: String,
}

/// Ordered verification criteria; ids run 1..=m.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checklist {
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChecklistError {
    #[error("checklist is empty")]
    Empty,
    #[error("checkpoint at position {position} has id {found}, expected {expected}")]
    NonContiguousIds { position: usize, expected: u32, found: u32 },
    #[error("checkpoint {0} has an empty requirement")]
    EmptyRequirement(u32),
}

impl Checklist {
    /// Number the requirements 1..=m.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            checkpoints: texts
                .into_iter()
                .enumerate()
                .map(|(i, t)| Checkpoint {
                    checkpoint_id: i as u32 + 1,
                    requirement_text: t.into(),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn validate(&self) -> Result<(), ChecklistError> {
        if self.checkpoints.is_empty() {
            return Err(ChecklistError::Empty);
        }
        for (i, c) in self.checkpoints.iter().enumerate() {
            let expected = i as u32 + 1;
            if c.checkpoint_id != expected {
                return Err(ChecklistError::NonContiguousIds {
                    position: i,
                    expected,
                    found: c.checkpoint_id,
                });
            }
            if c.requirement_text.trim().is_empty() {
                return Err(ChecklistError::EmptyRequirement(c.checkpoint_id));
            }
        }
        Ok(())
    }

    /// Stable digest of the requirement texts; keys the score cache.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for c in &self.checkpoints {
            hasher.update(c.checkpoint_id.to_le_bytes());
            hasher.update((c.requirement_text.len() as u64).to_le_bytes());
            hasher.update(c.requirement_text.as_bytes());
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceHit {
    pub chunk: ChunkRef,
    pub similarity: f64,
}

/// Located chunks per checkpoint id, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    pub per_checkpoint: BTreeMap<u32, Vec<EvidenceHit>>,
}

impl EvidenceSet {
    /// All distinct chunks referenced by any checkpoint.
    pub fn chunk_refs(&self) -> BTreeSet<ChunkRef> {
        self.per_checkpoint
            .values()
            .flatten()
            .map(|h| h.chunk.clone())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.per_checkpoint.values().all(Vec::is_empty)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Checklist(#[from] ChecklistError),
    #[error(transparent)]
    Backend(#[from] BackendFailure),
    #[error("malformed judgment: {reason}")]
    MalformedJudgment { reason: String, usage: TokenUsage },
    #[error("score {0} is outside 1..=5")]
    ScoreOutOfRange(i64),
    #[error("confidence {0} is outside the open interval (0, 1)")]
    ConfidenceOutOfRange(f64),
}

/// Checkpoint embeddings computed once per checklist and reused for every
/// candidate.
#[derive(Debug, Clone)]
pub struct EvidenceLocator {
    checkpoints: Vec<(u32, Embedding)>,
}

impl EvidenceLocator {
    pub fn new(checklist: &Checklist, encoder: &dyn EncoderBackend) -> Result<Self, VerifyError> {
        checklist.validate()?;
        let texts: Vec<&str> = checklist
            .checkpoints
            .iter()
            .map(|c| c.requirement_text.as_str())
            .collect();
        let vectors = encode_many(&texts, encoder)?;
        Ok(Self {
            checkpoints: checklist
                .checkpoints
                .iter()
                .map(|c| c.checkpoint_id)
                .zip(vectors)
                .collect(),
        })
    }

    /// Top-`k_evidence` chunks of `paper_id` for every checkpoint. A paper
    /// without chunks gets an empty list per checkpoint.
    pub fn locate(&self, paper_id: &str, k_evidence: usize, corpus: &Corpus) -> Result<EvidenceSet, VerifyError> {
        assert!(k_evidence >= 1, "k_evidence must be positive");
        let chunks = corpus.chunks_or_empty(paper_id)?;
        let mut set = EvidenceSet::default();
        for (id, query) in &self.checkpoints {
            let hits = if chunks.is_empty() {
                Vec::new()
            } else {
                let items = chunks.iter().map(|c| (c.chunk_index, c.embedding.as_slice()));
                top_k_similar(query, items, k_evidence)?
                    .into_iter()
                    .map(|h| EvidenceHit {
                        chunk: ChunkRef {
                            paper_id: PaperId::new(paper_id),
                            chunk_index: h.item_id,
                        },
                        similarity: h.score,
                    })
                    .collect()
            };
            set.per_checkpoint.insert(*id, hits);
        }
        Ok(set)
    }
}

/// Locate evidence for a single paper.
pub fn locate_evidence(
    paper_id: &str,
    checklist: &Checklist,
    k_evidence: usize,
    corpus: &Corpus,
    encoder: &dyn EncoderBackend,
) -> Result<EvidenceSet, VerifyError> {
    corpus.paper(paper_id)?;
    EvidenceLocator::new(checklist, encoder)?.locate(paper_id, k_evidence, corpus)
}

/// A passage shown to the scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePassage {
    pub checkpoint_id: u32,
    pub chunk_index: u32,
    pub similarity: f64,
    pub text: String,
}

/// Everything the scorer sees about one paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperBundle {
    pub paper_id: PaperId,
    pub title: String,
    pub authors: Vec<String>,
    pub date: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
    pub evidence: Vec<EvidencePassage>,
}

impl PaperBundle {
    pub fn build(paper_id: &str, evidence: &EvidenceSet, corpus: &Corpus) -> Result<Self, VerifyError> {
        let record = corpus.paper(paper_id)?;
        let abstract_text = corpus.abstract_of(paper_id).ok().map(|a| a.abstract_text.clone());
        let mut passages = Vec::new();
        for (checkpoint_id, hits) in &evidence.per_checkpoint {
            for hit in hits {
                let chunk = corpus.chunk(&hit.chunk).ok_or_else(|| {
                    ReadError::TierEmpty {
                        paper_id: hit.chunk.paper_id.clone(),
                        tier: crate::corpus::Tier::Chunks,
                    }
                })?;
                passages.push(EvidencePassage {
                    checkpoint_id: *checkpoint_id,
                    chunk_index: hit.chunk.chunk_index,
                    similarity: hit.similarity,
                    text: chunk.text.clone(),
                });
            }
        }
        Ok(Self {
            paper_id: record.paper_id.clone(),
            title: record.title.clone(),
            authors: record.authors.clone(),
            date: record.date.clone(),
            venue: record.venue.clone(),
            abstract_text,
            evidence: passages,
        })
    }
}

/// One structured judgment request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub query: String,
    pub checklist: Checklist,
    pub paper: PaperBundle,
}

/// Raw per-checkpoint verdict as returned by a backend, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointJudgment {
    pub checkpoint_id: u32,
    pub score: i64,
    #[serde(default)]
    pub rationale: String,
    /// Chunk indices of this paper the rationale relies on.
    #[serde(default)]
    pub cited_chunks: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub scores: Vec<CheckpointJudgment>,
    pub confidence: f64,
}

/// A judgment together with what it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judged {
    pub judgment: Judgment,
    #[serde(default)]
    pub usage: TokenUsage,
}

/// Scorer plug-in contract. Calls must be idempotent per
/// (paper, checklist) so retries are safe.
pub trait ScorerBackend: Send + Sync {
    fn name(&self) -> &str;

    fn judge(&self, request: &JudgeRequest) -> Result<Judged, BackendFailure>;
}

/// A validated checkpoint score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointScore {
    pub checkpoint_id: u32,
    pub score: u8,
    pub rationale: String,
    pub cited_chunks: Vec<ChunkRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPaper {
    pub paper_id: PaperId,
    pub checkpoint_scores: Vec<CheckpointScore>,
    pub mean_score: f64,
    pub confidence: f64,
    pub relevance: f64,
    pub evidence: EvidenceSet,
    /// Fingerprint of the checklist these scores were produced against.
    pub checklist_fingerprint: String,
}

/// Mean checkpoint score and final relevance `(mean + confidence) / 6`.
pub fn aggregate_relevance(scores: &[u8], confidence: f64) -> Result<(f64, f64), VerifyError> {
    if scores.is_empty() {
        return Err(ChecklistError::Empty.into());
    }
    if let Some(bad) = scores.iter().find(|s| !(MIN_SCORE..=MAX_SCORE).contains(*s)) {
        return Err(VerifyError::ScoreOutOfRange(i64::from(*bad)));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(VerifyError::ConfidenceOutOfRange(confidence));
    }
    // Integer sum keeps the mean independent of checkpoint order.
    let total: u64 = scores.iter().map(|&s| u64::from(s)).sum();
    let mean = total as f64 / scores.len() as f64;
    Ok((mean, (mean + confidence) / 6.0))
}

/// Ask the backend for a judgment and validate it. Malformed output is an
/// error (the candidate is excluded), never clamped.
pub fn score_candidate(
    paper_id: &str,
    query: &str,
    checklist: &Checklist,
    evidence: EvidenceSet,
    backend: &dyn ScorerBackend,
    corpus: &Corpus,
) -> Result<(ScoredPaper, TokenUsage), VerifyError> {
    checklist.validate()?;
    let bundle = PaperBundle::build(paper_id, &evidence, corpus)?;
    let request = JudgeRequest {
        query: query.to_string(),
        checklist: checklist.clone(),
        paper: bundle,
    };
    let Judged { judgment, usage } = backend.judge(&request)?;
    let malformed = |reason: String| VerifyError::MalformedJudgment {
        reason,
        usage: usage.clone(),
    };

    let m = checklist.len();
    if judgment.scores.len() != m {
        return Err(malformed(format!("expected {m} checkpoint scores, got {}", judgment.scores.len())));
    }
    let mut by_id: BTreeMap<u32, &CheckpointJudgment> = BTreeMap::new();
    for s in &judgment.scores {
        if by_id.insert(s.checkpoint_id, s).is_some() {
            return Err(malformed(format!("checkpoint {} scored twice", s.checkpoint_id)));
        }
    }
    let paper = PaperId::new(paper_id);
    let mut checkpoint_scores = Vec::with_capacity(m);
    for checkpoint in &checklist.checkpoints {
        let id = checkpoint.checkpoint_id;
        let raw = by_id
            .get(&id)
            .ok_or_else(|| malformed(format!("checkpoint {id} not scored")))?;
        let score = u8::try_from(raw.score)
            .ok()
            .filter(|s| (MIN_SCORE..=MAX_SCORE).contains(s))
            .ok_or_else(|| malformed(format!("checkpoint {id} score {} outside 1..=5", raw.score)))?;
        let located: BTreeSet<u32> = evidence
            .per_checkpoint
            .get(&id)
            .map(|hits| hits.iter().map(|h| h.chunk.chunk_index).collect())
            .unwrap_or_default();
        let mut cited: Vec<u32> = raw.cited_chunks.clone();
        cited.sort_unstable();
        cited.dedup();
        if let Some(bad) = cited.iter().find(|c| !located.contains(c)) {
            return Err(malformed(format!(
                "checkpoint {id} cites chunk {bad}, which is not among its located evidence"
            )));
        }
        if !located.is_empty() && cited.is_empty() {
            return Err(malformed(format!("checkpoint {id} rationale cites no evidence chunk")));
        }
        checkpoint_scores.push(CheckpointScore {
            checkpoint_id: id,
            score,
            rationale: raw.rationale.clone(),
            cited_chunks: cited
                .into_iter()
                .map(|chunk_index| ChunkRef {
                    paper_id: paper.clone(),
                    chunk_index,
                })
                .collect(),
        });
    }
    if !(judgment.confidence > 0.0 && judgment.confidence < 1.0) {
        return Err(malformed(format!(
            "confidence {} outside the open interval (0, 1)",
            judgment.confidence
        )));
    }
    let raw_scores: Vec<u8> = checkpoint_scores.iter().map(|c| c.score).collect();
    let (mean_score, relevance) = aggregate_relevance(&raw_scores, judgment.confidence)?;
    Ok((
        ScoredPaper {
            paper_id: paper,
            checkpoint_scores,
            mean_score,
            confidence: judgment.confidence,
            relevance,
            evidence,
            checklist_fingerprint: checklist.fingerprint(),
        },
        usage,
    ))
}

/// Lowercased alphanumeric tokens of at least four characters.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 4)
        .map(str::to_lowercase)
        .collect()
}

/// Deterministic keyword-overlap scorer for tests and offline runs.
///
/// For checkpoint `c_j`, `s_j = 1 + min(4, |content words of c_j found among
/// the content words of the abstract and all evidence passages|)`, and
/// `confidence = clamp(mean(s)/5 - 0.01, 0.01, 0.99)`. Each rationale cites
/// every chunk located for its checkpoint.
#[derive(Debug, Clone, Default)]
pub struct KeywordOverlapScorer;

impl KeywordOverlapScorer {
    pub fn judgment(request: &JudgeRequest) -> Judgment {
        let mut haystack = BTreeSet::new();
        if let Some(text) = &request.paper.abstract_text {
            haystack.extend(content_words(text));
        }
        for passage in &request.paper.evidence {
            haystack.extend(content_words(&passage.text));
        }
        let mut scores = Vec::new();
        for checkpoint in &request.checklist.checkpoints {
            let matched: Vec<String> = content_words(&checkpoint.requirement_text)
                .into_iter()
                .filter(|w| haystack.contains(w))
                .collect();
            let score = 1 + matched.len().min(4) as i64;
            let cited: Vec<u32> = request
                .paper
                .evidence
                .iter()
                .filter(|p| p.checkpoint_id == checkpoint.checkpoint_id)
                .map(|p| p.chunk_index)
                .collect();
            let refs: Vec<String> = cited
                .iter()
                .map(|i| format!("[{}#{}]", request.paper.paper_id, i))
                .collect();
            let rationale = if refs.is_empty() {
                format!("matched terms: {}; source: abstract", matched.join(", "))
            } else {
                format!("matched terms: {}; evidence {}", matched.join(", "), refs.join(" "))
            };
            scores.push(CheckpointJudgment {
                checkpoint_id: checkpoint.checkpoint_id,
                score,
                rationale,
                cited_chunks: cited,
            });
        }
        let mean = scores.iter().map(|s| s.score as f64).sum::<f64>() / scores.len().max(1) as f64;
        Judgment {
            scores,
            confidence: (mean / 5.0 - 0.01).clamp(0.01, 0.99),
        }
    }
}

impl ScorerBackend for KeywordOverlapScorer {
    fn name(&self) -> &str {
        "keyword-overlap"
    }

    fn judge(&self, request: &JudgeRequest) -> Result<Judged, BackendFailure> {
        Ok(Judged {
            judgment: Self::judgment(request),
            usage: TokenUsage::none(),
        })
    }
}

/// Scorer driven by a closure; used for scripted tests.
pub struct FnScorer<F> {
    name: String,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&JudgeRequest) -> Result<Judged, BackendFailure> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> ScorerBackend for FnScorer<F>
where
    F: Fn(&JudgeRequest) -> Result<Judged, BackendFailure> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn judge(&self, request: &JudgeRequest) -> Result<Judged, BackendFailure> {
        (self.f)(request)
    }
}
