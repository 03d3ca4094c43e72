//! The verified three-tier paper repository.
//!
//! Tiers: metadata (`PaperRecord`), abstracts (`AbstractEntry`) and
//! passage-level evidence chunks (`EvidenceChunk`), plus the citation graph
//! carried on the metadata tier. A `Corpus` is mutated only through
//! [`Corpus::ingest_records`], which takes `&mut self`; once built it is
//! shared read-only (`Arc<Corpus>`) across workers.

mod chunking;
mod ingest;
mod store;

pub use chunking::{split_into_chunks, ChunkWindow};
pub use ingest::{IngestError, IngestReport, RejectReason, RejectedRecord};
pub use store::{ingest_into_dir, StoreError, WriteLock};

use crate::encoder::Embedding;
use crate::text::{normalize_doi, normalize_title};
use serde::{Deserialize, Serialize};
use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

/// Opaque unique paper identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaperId(String);

impl PaperId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PaperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for PaperId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for PaperId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for PaperId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// Metadata tier entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: PaperId,
    pub title: String,
    pub authors: Vec<String>,
    /// ISO calendar date, `YYYY-MM-DD`.
    pub date: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    /// Stored normalized (see [`crate::text::normalize_doi`]).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default)]
    pub references: Vec<PaperId>,
    /// Inverse of `references` over the whole corpus; rebuilt on every
    /// ingest and never read from input.
    #[serde(default, skip_deserializing)]
    pub cited_by: Vec<PaperId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discipline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractEntry {
    pub paper_id: PaperId,
    pub abstract_text: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceChunk {
    pub paper_id: PaperId,
    pub chunk_index: u32,
    pub text: String,
    pub embedding: Embedding,
}

/// A chunk address, ordered by paper then index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChunkRef {
    pub paper_id: PaperId,
    pub chunk_index: u32,
}

impl fmt::Display for ChunkRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.paper_id, self.chunk_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Meta,
    Abstract,
    Chunks,
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "meta" => Ok(Tier::Meta),
            "abstract" => Ok(Tier::Abstract),
            "chunks" | "chunk" => Ok(Tier::Chunks),
            other => Err(format!("unknown tier `{other}` (expected meta, abstract or chunks)")),
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Meta => "meta",
            Tier::Abstract => "abstract",
            Tier::Chunks => "chunks",
        })
    }
}

/// Result of [`Corpus::read_tier`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TierContent<'a> {
    Meta(&'a PaperRecord),
    Abstract(&'a AbstractEntry),
    Chunks(&'a [EvidenceChunk]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    References,
    CitedBy,
    Both,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReadError {
    #[error("unknown paper id `{0}`")]
    UnknownPaperId(PaperId),
    #[error("paper `{paper_id}` has no {tier} tier entry")]
    TierEmpty { paper_id: PaperId, tier: Tier },
}

/// In-memory three-tier corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    dimension: usize,
    papers: BTreeMap<PaperId, PaperRecord>,
    abstracts: BTreeMap<PaperId, AbstractEntry>,
    chunks: BTreeMap<PaperId, Vec<EvidenceChunk>>,
    doi_index: HashMap<String, PaperId>,
    title_index: HashMap<String, PaperId>,
}

impl Corpus {
    /// An empty corpus whose embeddings all have dimension `dimension`.
    pub fn empty(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            papers: BTreeMap::new(),
            abstracts: BTreeMap::new(),
            chunks: BTreeMap::new(),
            doi_index: HashMap::new(),
            title_index: HashMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    pub fn abstract_count(&self) -> usize {
        self.abstracts.len()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.values().map(Vec::len).sum()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.papers.contains_key(id)
    }

    /// Papers in id order.
    pub fn papers(&self) -> impl Iterator<Item = &PaperRecord> {
        self.papers.values()
    }

    /// Abstract entries in id order.
    pub fn abstracts(&self) -> impl Iterator<Item = &AbstractEntry> {
        self.abstracts.values()
    }

    pub fn paper(&self, id: &str) -> Result<&PaperRecord, ReadError> {
        self.papers
            .get(id)
            .ok_or_else(|| ReadError::UnknownPaperId(PaperId::new(id)))
    }

    pub fn abstract_of(&self, id: &str) -> Result<&AbstractEntry, ReadError> {
        let record = self.paper(id)?;
        self.abstracts.get(id).ok_or_else(|| ReadError::TierEmpty {
            paper_id: record.paper_id.clone(),
            tier: Tier::Abstract,
        })
    }

    /// Chunks of a paper ordered by `chunk_index`.
    pub fn chunks_of(&self, id: &str) -> Result<&[EvidenceChunk], ReadError> {
        let record = self.paper(id)?;
        match self.chunks.get(id) {
            Some(chunks) if !chunks.is_empty() => Ok(chunks),
            _ => Err(ReadError::TierEmpty {
                paper_id: record.paper_id.clone(),
                tier: Tier::Chunks,
            }),
        }
    }

    /// Chunks of a paper, empty when the paper has no chunk tier.
    pub fn chunks_or_empty(&self, id: &str) -> Result<&[EvidenceChunk], ReadError> {
        self.paper(id)?;
        Ok(self.chunks.get(id).map(Vec::as_slice).unwrap_or(&[]))
    }

    pub fn chunk(&self, chunk: &ChunkRef) -> Option<&EvidenceChunk> {
        self.chunks
            .get(chunk.paper_id.as_str())
            .and_then(|c| c.get(chunk.chunk_index as usize))
    }

    /// Reading tool over one tier.
    pub fn read_tier(&self, id: &str, tier: Tier) -> Result<TierContent<'_>, ReadError> {
        Ok(match tier {
            Tier::Meta => TierContent::Meta(self.paper(id)?),
            Tier::Abstract => TierContent::Abstract(self.abstract_of(id)?),
            Tier::Chunks => TierContent::Chunks(self.chunks_of(id)?),
        })
    }

    /// One-hop citation neighbours, never including `id` itself.
    pub fn citation_neighbors(&self, id: &str, direction: Direction) -> Result<BTreeSet<PaperId>, ReadError> {
        let record = self.paper(id)?;
        let mut out = BTreeSet::new();
        if matches!(direction, Direction::References | Direction::Both) {
            out.extend(record.references.iter().cloned());
        }
        if matches!(direction, Direction::CitedBy | Direction::Both) {
            out.extend(record.cited_by.iter().cloned());
        }
        out.remove(id);
        Ok(out)
    }

    /// Lookup by DOI, normalizing the query.
    pub fn find_by_doi(&self, doi: &str) -> Option<&PaperId> {
        normalize_doi(doi).and_then(|d| self.doi_index.get(&d))
    }

    /// Lookup by normalized title. When several papers share a normalized
    /// title the smallest id wins.
    pub fn find_by_title(&self, title: &str) -> Option<&PaperId> {
        let key = normalize_title(title);
        if key.is_empty() {
            return None;
        }
        self.title_index.get(&key)
    }

    fn rebuild_indices(&mut self) {
        for record in self.papers.values_mut() {
            record.cited_by.clear();
        }
        let edges: Vec<(PaperId, PaperId)> = self
            .papers
            .values()
            .flat_map(|p| p.references.iter().map(move |r| (r.clone(), p.paper_id.clone())))
            .collect();
        for (target, source) in edges {
            if let Some(rec) = self.papers.get_mut(&target) {
                rec.cited_by.push(source);
            }
        }
        for record in self.papers.values_mut() {
            record.cited_by.sort();
            record.cited_by.dedup();
        }

        self.doi_index.clear();
        self.title_index.clear();
        // BTreeMap iteration is id-ascending, so the first insert per key is
        // the smallest id.
        for record in self.papers.values() {
            if let Some(doi) = &record.doi {
                self.doi_index
                    .entry(doi.clone())
                    .or_insert_with(|| record.paper_id.clone());
            }
            let title = normalize_title(&record.title);
            if !title.is_empty() {
                self.title_index
                    .entry(title)
                    .or_insert_with(|| record.paper_id.clone());
            }
        }
    }
}
