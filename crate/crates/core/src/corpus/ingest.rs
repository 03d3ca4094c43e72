use super::{AbstractEntry, Corpus, EvidenceChunk, PaperId, PaperRecord};
use crate::encoder::{encode_many, EncodeError, Embedding, EncoderBackend};
use crate::text::normalize_doi;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;
use thiserror::Error;

/// Summary of one ingest run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub papers_ingested: usize,
    pub abstracts_ingested: usize,
    pub chunks_ingested: usize,
    pub dangling_citations_dropped: usize,
    pub rejected_records: Vec<RejectedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[serde(tag = "kind", content = "detail")]
pub enum RejectReason {
    #[error("duplicate paper id `{0}`")]
    DuplicatePaperId(String),
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("embedding has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("record refers to unknown paper id `{0}`")]
    UnknownPaperId(String),
    #[error("paper `{0}` already has an abstract")]
    DuplicateAbstract(String),
    #[error("chunk {chunk_index} of paper `{paper_id}` already exists")]
    DuplicateChunk { paper_id: String, chunk_index: u32 },
    #[error("chunk {chunk_index} of paper `{paper_id}` leaves a gap in chunk indices")]
    ChunkIndexGap { paper_id: String, chunk_index: u32 },
    #[error("embedding rejected: {0}")]
    InvalidEmbedding(String),
    #[error("encoder failed: {0}")]
    Encoding(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("reading ingest stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("encoder `{name}` has dimension {found}, corpus is configured for {expected}")]
    EncoderDimension {
        name: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "tier", rename_all = "lowercase")]
enum IngestLine {
    Meta(MetaLine),
    Abstract(AbstractLine),
    Chunk(ChunkLine),
}

#[derive(Debug, Deserialize)]
struct MetaLine {
    paper_id: String,
    title: String,
    authors: Vec<String>,
    date: String,
    #[serde(default)]
    venue: Option<String>,
    #[serde(default)]
    link: Option<String>,
    #[serde(default)]
    doi: Option<String>,
    #[serde(default)]
    references: Vec<String>,
    #[serde(default)]
    discipline: Option<String>,
}

#[derive(Debug, Deserialize)]
struct AbstractLine {
    paper_id: String,
    abstract_text: String,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct ChunkLine {
    paper_id: String,
    chunk_index: u32,
    text: String,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
}

/// A text whose embedding is either supplied or still to be computed.
struct Pending<T> {
    line: usize,
    item: T,
    text: String,
    embedding: Option<Embedding>,
}

impl Corpus {
    /// Ingest a stream of tier-tagged JSON lines.
    ///
    /// Record-level problems are listed in the report and never abort the
    /// run; only I/O failures and an encoder/corpus dimension disagreement
    /// are fatal.
    pub fn ingest_records<R: BufRead>(
        &mut self,
        reader: R,
        encoder: &dyn EncoderBackend,
    ) -> Result<IngestReport, IngestError> {
        let mut lines = Vec::new();
        for line in reader.lines() {
            lines.push(line?);
        }
        self.ingest_lines(lines.iter().map(String::as_str), encoder)
    }

    pub fn ingest_lines<'a, I>(&mut self, lines: I, encoder: &dyn EncoderBackend) -> Result<IngestReport, IngestError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if encoder.dimension() != self.dimension {
            return Err(IngestError::EncoderDimension {
                name: encoder.name().to_string(),
                expected: self.dimension,
                found: encoder.dimension(),
            });
        }

        let mut report = IngestReport::default();
        let mut metas = Vec::new();
        let mut abstracts = Vec::new();
        let mut chunks = Vec::new();

        for (idx, raw) in lines.into_iter().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<IngestLine>(raw) {
                Ok(IngestLine::Meta(m)) => metas.push((line, m)),
                Ok(IngestLine::Abstract(a)) => abstracts.push((line, a)),
                Ok(IngestLine::Chunk(c)) => chunks.push((line, c)),
                Err(e) => report.reject(line, RejectReason::MalformedRecord(e.to_string())),
            }
        }

        // Metadata first so abstracts, chunks and references may point
        // forward in the stream.
        let mut new_ids = Vec::new();
        for (line, meta) in metas {
            match self.validate_meta(meta) {
                Ok(record) => {
                    new_ids.push(record.paper_id.clone());
                    self.papers.insert(record.paper_id.clone(), record);
                }
                Err(reason) => report.reject(line, reason),
            }
        }
        report.papers_ingested = new_ids.len();

        for id in &new_ids {
            let refs = std::mem::take(&mut self.papers.get_mut(id).expect("just inserted").references);
            let mut seen = HashSet::new();
            let mut kept = Vec::with_capacity(refs.len());
            for r in refs {
                if !self.papers.contains_key(&r) {
                    report.dangling_citations_dropped += 1;
                } else if seen.insert(r.clone()) {
                    kept.push(r);
                }
            }
            self.papers.get_mut(id).expect("just inserted").references = kept;
        }

        let pending_abstracts = self.stage_abstracts(abstracts, &mut report);
        let pending_chunks = self.stage_chunks(chunks, &mut report);

        let encoded_abstracts = encode_pending(pending_abstracts, encoder, &mut report);
        let encoded_chunks = encode_pending(pending_chunks, encoder, &mut report);

        for p in encoded_abstracts {
            let entry = AbstractEntry {
                paper_id: p.item,
                abstract_text: p.text,
                embedding: p.embedding.expect("encoded"),
            };
            self.abstracts.insert(entry.paper_id.clone(), entry);
            report.abstracts_ingested += 1;
        }

        // Contiguity is checked after encoding, since a chunk that failed to
        // encode opens a gap for the ones after it.
        let mut by_paper: BTreeMap<PaperId, BTreeMap<u32, Pending<(PaperId, u32)>>> = BTreeMap::new();
        for p in encoded_chunks {
            by_paper
                .entry(p.item.0.clone())
                .or_default()
                .insert(p.item.1, p);
        }
        for (paper_id, staged) in by_paper {
            let existing = self.chunks.entry(paper_id.clone()).or_default();
            let mut next = existing.len() as u32;
            for (index, p) in staged {
                if index == next {
                    existing.push(EvidenceChunk {
                        paper_id: paper_id.clone(),
                        chunk_index: index,
                        text: p.text,
                        embedding: p.embedding.expect("encoded"),
                    });
                    report.chunks_ingested += 1;
                    next += 1;
                } else {
                    report.reject(
                        p.line,
                        RejectReason::ChunkIndexGap {
                            paper_id: paper_id.to_string(),
                            chunk_index: index,
                        },
                    );
                }
            }
        }
        self.chunks.retain(|_, c| !c.is_empty());

        self.rebuild_indices();
        report.rejected_records.sort_by_key(|r| r.line);
        Ok(report)
    }

    fn validate_meta(&self, meta: MetaLine) -> Result<PaperRecord, RejectReason> {
        let id = meta.paper_id.trim();
        if id.is_empty() {
            return Err(RejectReason::MalformedRecord("paper_id is empty".into()));
        }
        if self.papers.contains_key(id) {
            return Err(RejectReason::DuplicatePaperId(id.to_string()));
        }
        if meta.title.trim().is_empty() {
            return Err(RejectReason::MalformedRecord(format!("paper `{id}` has an empty title")));
        }
        if chrono::NaiveDate::parse_from_str(&meta.date, "%Y-%m-%d").is_err() {
            return Err(RejectReason::MalformedRecord(format!(
                "paper `{id}` has date `{}`, expected YYYY-MM-DD",
                meta.date
            )));
        }
        Ok(PaperRecord {
            paper_id: PaperId::new(id),
            title: meta.title,
            authors: meta.authors,
            date: meta.date,
            venue: meta.venue,
            link: meta.link,
            doi: meta.doi.as_deref().and_then(normalize_doi),
            references: meta.references.into_iter().map(PaperId::from).collect(),
            cited_by: Vec::new(),
            discipline: meta.discipline,
        })
    }

    fn stage_abstracts(&self, lines: Vec<(usize, AbstractLine)>, report: &mut IngestReport) -> Vec<Pending<PaperId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (line, a) in lines {
            if !self.papers.contains_key(a.paper_id.as_str()) {
                report.reject(line, RejectReason::UnknownPaperId(a.paper_id));
                continue;
            }
            if self.abstracts.contains_key(a.paper_id.as_str()) || !seen.insert(a.paper_id.clone()) {
                report.reject(line, RejectReason::DuplicateAbstract(a.paper_id));
                continue;
            }
            if a.abstract_text.trim().is_empty() {
                report.reject(line, RejectReason::MalformedRecord("abstract_text is empty".into()));
                continue;
            }
            match self.supplied_embedding(a.embedding) {
                Ok(embedding) => out.push(Pending {
                    line,
                    item: PaperId::new(a.paper_id),
                    text: a.abstract_text,
                    embedding,
                }),
                Err(reason) => report.reject(line, reason),
            }
        }
        out
    }

    fn stage_chunks(&self, lines: Vec<(usize, ChunkLine)>, report: &mut IngestReport) -> Vec<Pending<(PaperId, u32)>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (line, c) in lines {
            let Some(record) = self.papers.get(c.paper_id.as_str()) else {
                report.reject(line, RejectReason::UnknownPaperId(c.paper_id));
                continue;
            };
            let existing = self.chunks.get(c.paper_id.as_str()).map_or(0, Vec::len);
            if (c.chunk_index as usize) < existing || !seen.insert((c.paper_id.clone(), c.chunk_index)) {
                report.reject(
                    line,
                    RejectReason::DuplicateChunk {
                        paper_id: c.paper_id,
                        chunk_index: c.chunk_index,
                    },
                );
                continue;
            }
            if c.text.trim().is_empty() {
                report.reject(line, RejectReason::MalformedRecord("chunk text is empty".into()));
                continue;
            }
            match self.supplied_embedding(c.embedding) {
                Ok(embedding) => out.push(Pending {
                    line,
                    item: (record.paper_id.clone(), c.chunk_index),
                    text: c.text,
                    embedding,
                }),
                Err(reason) => report.reject(line, reason),
            }
        }
        out
    }

    fn supplied_embedding(&self, raw: Option<Vec<f64>>) -> Result<Option<Embedding>, RejectReason> {
        let Some(values) = raw else { return Ok(None) };
        if values.len() != self.dimension {
            return Err(RejectReason::DimensionMismatch {
                expected: self.dimension,
                found: values.len(),
            });
        }
        Embedding::normalized(values)
            .map(Some)
            .map_err(|e| RejectReason::InvalidEmbedding(e.to_string()))
    }
}

impl IngestReport {
    fn reject(&mut self, line: usize, reason: RejectReason) {
        self.rejected_records.push(RejectedRecord { line, reason });
    }
}

fn encode_pending<T>(
    pending: Vec<Pending<T>>,
    encoder: &dyn EncoderBackend,
    report: &mut IngestReport,
) -> Vec<Pending<T>> {
    let missing: Vec<usize> = pending
        .iter()
        .enumerate()
        .filter(|(_, p)| p.embedding.is_none())
        .map(|(i, _)| i)
        .collect();
    if missing.is_empty() {
        return pending;
    }
    let texts: Vec<&str> = missing.iter().map(|&i| pending[i].text.as_str()).collect();
    let mut results: Vec<Result<Embedding, EncodeError>> = match encode_many(&texts, encoder) {
        Ok(vectors) => vectors.into_iter().map(Ok).collect(),
        // Retry one by one so a single bad text does not sink the batch.
        Err(_) => texts
            .iter()
            .map(|t| crate::encoder::encode(t, encoder))
            .collect(),
    };
    let mut pending = pending;
    for (&i, result) in missing.iter().zip(results.drain(..)) {
        match result {
            Ok(e) => pending[i].embedding = Some(e),
            Err(e) => report.reject(pending[i].line, RejectReason::Encoding(e.to_string())),
        }
    }
    pending.into_iter().filter(|p| p.embedding.is_some()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::HashingEncoder;

    fn ingest(lines: &[&str]) -> (Corpus, IngestReport) {
        let mut corpus = Corpus::empty(256);
        let report = corpus
            .ingest_lines(lines.iter().copied(), &HashingEncoder::default())
            .unwrap();
        (corpus, report)
    }

    #[test]
    fn empty_stream() {
        let (corpus, report) = ingest(&[]);
        assert_eq!(report, IngestReport::default());
        assert!(corpus.is_empty());
    }

    #[test]
    fn one_paper_all_tiers() {
        let (_, report) = ingest(&[
            r#"{"tier":"meta","paper_id":"p1","title":"T","authors":["X Y"],"date":"2020-02-02"}"#,
            r#"{"tier":"abstract","paper_id":"p1","abstract_text":"about things"}"#,
            r#"{"tier":"chunk","paper_id":"p1","chunk_index":0,"text":"one"}"#,
            r#"{"tier":"chunk","paper_id":"p1","chunk_index":1,"text":"two"}"#,
        ]);
        assert_eq!(
            (report.papers_ingested, report.abstracts_ingested, report.chunks_ingested),
            (1, 1, 2)
        );
        assert_eq!(report.dangling_citations_dropped, 0);
        assert!(report.rejected_records.is_empty());
    }

    #[test]
    fn duplicate_paper_id() {
        let (corpus, report) = ingest(&[
            r#"{"tier":"meta","paper_id":"p1","title":"First","authors":[],"date":"2020-02-02"}"#,
            r#"{"tier":"meta","paper_id":"p1","title":"Second","authors":[],"date":"2020-02-02"}"#,
        ]);
        assert_eq!(report.papers_ingested, 1);
        assert_eq!(
            report.rejected_records,
            vec![RejectedRecord {
                line: 2,
                reason: RejectReason::DuplicatePaperId("p1".into())
            }]
        );
        assert_eq!(corpus.paper("p1").unwrap().title, "First");
    }

    #[test]
    fn malformed_and_dimension_errors() {
        let (_, report) = ingest(&[
            "not json",
            r#"{"tier":"meta","paper_id":"p1","title":"T","authors":[],"date":"2020-13-40"}"#,
            r#"{"tier":"meta","paper_id":"p2","title":"T","authors":[],"date":"2020-01-01"}"#,
            r#"{"tier":"abstract","paper_id":"p2","abstract_text":"x","embedding":[1.0,0.0]}"#,
            r#"{"tier":"chunk","paper_id":"nope","chunk_index":0,"text":"x"}"#,
        ]);
        let kinds: Vec<_> = report.rejected_records.iter().map(|r| (r.line, &r.reason)).collect();
        assert!(matches!(kinds[0], (1, RejectReason::MalformedRecord(_))));
        assert!(matches!(kinds[1], (2, RejectReason::MalformedRecord(_))));
        assert_eq!(kinds[2], (4, &RejectReason::DimensionMismatch { expected: 256, found: 2 }));
        assert_eq!(kinds[3], (5, &RejectReason::UnknownPaperId("nope".into())));
        assert_eq!(report.papers_ingested, 1);
    }

    #[test]
    fn dangling_references_dropped_and_counted() {
        let (corpus, report) = ingest(&[
            r#"{"tier":"meta","paper_id":"a","title":"A","authors":[],"date":"2020-01-01","references":["b","ghost","b","zombie"]}"#,
            r#"{"tier":"meta","paper_id":"b","title":"B","authors":[],"date":"2020-01-01"}"#,
        ]);
        assert_eq!(report.dangling_citations_dropped, 2);
        assert_eq!(corpus.paper("a").unwrap().references, vec![PaperId::from("b")]);
        assert_eq!(corpus.paper("b").unwrap().cited_by, vec![PaperId::from("a")]);
    }

    #[test]
    fn chunk_gaps_and_duplicates() {
        let (corpus, report) = ingest(&[
            r#"{"tier":"meta","paper_id":"p","title":"P","authors":[],"date":"2020-01-01"}"#,
            r#"{"tier":"chunk","paper_id":"p","chunk_index":0,"text":"zero"}"#,
            r#"{"tier":"chunk","paper_id":"p","chunk_index":0,"text":"zero again"}"#,
            r#"{"tier":"chunk","paper_id":"p","chunk_index":2,"text":"two"}"#,
        ]);
        assert_eq!(report.chunks_ingested, 1);
        assert_eq!(corpus.chunks_of("p").unwrap().len(), 1);
        assert!(matches!(report.rejected_records[0].reason, RejectReason::DuplicateChunk { .. }));
        assert!(matches!(report.rejected_records[1].reason, RejectReason::ChunkIndexGap { chunk_index: 2, .. }));
    }

    #[test]
    fn supplied_embeddings_are_renormalized() {
        let mut values = vec![0.0; 256];
        values[0] = 2.0;
        let line = serde_json::json!({
            "tier": "abstract", "paper_id": "p", "abstract_text": "x", "embedding": values
        })
        .to_string();
        let (corpus, report) = ingest(&[
            r#"{"tier":"meta","paper_id":"p","title":"P","authors":[],"date":"2020-01-01"}"#,
            &line,
        ]);
        assert!(report.rejected_records.is_empty());
        assert_eq!(corpus.abstract_of("p").unwrap().embedding.as_slice()[0], 1.0);
    }

    #[test]
    fn incremental_ingest_resolves_against_existing() {
        let enc = HashingEncoder::default();
        let mut corpus = Corpus::empty(256);
        corpus
            .ingest_lines([r#"{"tier":"meta","paper_id":"old","title":"Old","authors":[],"date":"2000-01-01"}"#], &enc)
            .unwrap();
        let report = corpus
            .ingest_lines(
                [
                    r#"{"tier":"meta","paper_id":"new","title":"New","authors":[],"date":"2001-01-01","references":["old"]}"#,
                    r#"{"tier":"meta","paper_id":"old","title":"Again","authors":[],"date":"2001-01-01"}"#,
                ],
                &enc,
            )
            .unwrap();
        assert_eq!(report.papers_ingested, 1);
        assert_eq!(report.rejected_records.len(), 1);
        assert_eq!(corpus.paper("old").unwrap().cited_by, vec![PaperId::from("new")]);
    }

    #[test]
    fn encoder_dimension_must_match() {
        let mut corpus = Corpus::empty(64);
        let err = corpus.ingest_lines([], &HashingEncoder::default()).unwrap_err();
        assert!(matches!(err, IngestError::EncoderDimension { expected: 64, found: 256, .. }));
    }
}
