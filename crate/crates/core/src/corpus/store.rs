//! On-disk corpus directory.
//!
//! Layout: `manifest.json` plus one JSON-lines file per tier, each line in
//! the ingest format so a stored corpus can be re-ingested elsewhere. Files
//! are written to a temporary name and renamed into place.

use super::ingest::IngestError;
use super::{AbstractEntry, Corpus, EvidenceChunk, IngestReport, PaperRecord};
use crate::encoder::EncoderBackend;
use serde::{Deserialize, Serialize};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

const FORMAT: &str = "litsearch-corpus/1";
const MANIFEST: &str = "manifest.json";
const META_FILE: &str = "meta.jsonl";
const ABSTRACT_FILE: &str = "abstracts.jsonl";
const CHUNK_FILE: &str = "chunks.jsonl";
const WRITE_LOCK: &str = ".write.lock";
const SERVE_LOCK: &str = ".serve.lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("corpus at {0} is locked ({1} exists); remove it if no other process is using the corpus")]
    Locked(PathBuf, &'static str),
    #[error("no corpus found at {0}")]
    Missing(PathBuf),
    #[error("corpus at {path} has dimension {found}, expected {expected}")]
    Dimension {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    dimension: usize,
    papers: usize,
    abstracts: usize,
    chunks: usize,
}

#[derive(Serialize)]
struct TierLine<'a, T: Serialize> {
    tier: &'static str,
    #[serde(flatten)]
    record: &'a T,
}

/// Exclusive marker for a corpus directory. Released on drop.
#[derive(Debug)]
pub struct WriteLock {
    path: PathBuf,
}

impl WriteLock {
    /// Take the ingest lock. Fails if another writer or a running service
    /// holds the directory.
    pub fn acquire(dir: &Path) -> Result<Self, StoreError> {
        Self::take(dir, WRITE_LOCK, SERVE_LOCK)
    }

    /// Marker held by a running service; refuses concurrent ingest. Several
    /// services may not share one directory either.
    pub fn acquire_serve(dir: &Path) -> Result<Self, StoreError> {
        Self::take(dir, SERVE_LOCK, WRITE_LOCK)
    }

    fn take(dir: &Path, name: &'static str, conflicting: &'static str) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        if dir.join(conflicting).exists() {
            return Err(StoreError::Locked(dir.to_path_buf(), conflicting));
        }
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(StoreError::Locked(dir.to_path_buf(), name))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

impl Corpus {
    pub fn exists_at(dir: &Path) -> bool {
        dir.join(MANIFEST).is_file()
    }

    /// Load a stored corpus. Stored embeddings are taken verbatim (no
    /// re-normalization), so reads after reopening are bit-identical.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(StoreError::Missing(dir.to_path_buf()));
        }
        let raw = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: Manifest = serde_json::from_str(&raw).map_err(|e| StoreError::Corrupt {
            path: manifest_path.clone(),
            line: 1,
            message: e.to_string(),
        })?;
        if manifest.format != FORMAT {
            return Err(StoreError::Corrupt {
                path: manifest_path,
                line: 1,
                message: format!("unsupported format `{}`", manifest.format),
            });
        }

        let mut corpus = Corpus::empty(manifest.dimension);
        for record in read_lines::<PaperRecord>(&dir.join(META_FILE))? {
            corpus.papers.insert(record.paper_id.clone(), record);
        }
        let abstract_path = dir.join(ABSTRACT_FILE);
        for entry in read_lines::<AbstractEntry>(&abstract_path)? {
            check_dim(&abstract_path, entry.embedding.dimension(), manifest.dimension)?;
            corpus.abstracts.insert(entry.paper_id.clone(), entry);
        }
        let chunk_path = dir.join(CHUNK_FILE);
        for chunk in read_lines::<EvidenceChunk>(&chunk_path)? {
            check_dim(&chunk_path, chunk.embedding.dimension(), manifest.dimension)?;
            corpus.chunks.entry(chunk.paper_id.clone()).or_default().push(chunk);
        }
        for (id, chunks) in &corpus.chunks {
            if chunks.iter().enumerate().any(|(i, c)| c.chunk_index as usize != i) {
                return Err(StoreError::Corrupt {
                    path: chunk_path.clone(),
                    line: 0,
                    message: format!("chunks of `{id}` are not contiguous"),
                });
            }
        }
        corpus.rebuild_indices();
        Ok(corpus)
    }

    /// Write the corpus to `dir`. The caller is expected to hold a
    /// [`WriteLock`] on the directory.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_lines(&dir.join(META_FILE), "meta", self.papers.values())?;
        write_lines(&dir.join(ABSTRACT_FILE), "abstract", self.abstracts.values())?;
        write_lines(&dir.join(CHUNK_FILE), "chunk", self.chunks.values().flatten())?;
        let manifest = Manifest {
            format: FORMAT.to_string(),
            dimension: self.dimension,
            papers: self.len(),
            abstracts: self.abstract_count(),
            chunks: self.chunk_count(),
        };
        let path = dir.join(MANIFEST);
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        atomic_write(&path, |w| writeln!(w, "{body}"))
    }
}

/// Ingest a stream into the corpus stored at `dir`, creating it when absent.
pub fn ingest_into_dir<R: BufRead>(
    dir: &Path,
    reader: R,
    encoder: &dyn EncoderBackend,
    dimension: usize,
) -> Result<IngestReport, StoreError> {
    let _lock = WriteLock::acquire(dir)?;
    let mut corpus = if Corpus::exists_at(dir) {
        let c = Corpus::open(dir)?;
        if c.dimension() != dimension {
            return Err(StoreError::Dimension {
                path: dir.to_path_buf(),
                expected: dimension,
                found: c.dimension(),
            });
        }
        c
    } else {
        Corpus::empty(dimension)
    };
    let report = corpus.ingest_records(reader, encoder)?;
    corpus.save(dir)?;
    Ok(report)
}

fn check_dim(path: &Path, found: usize, expected: usize) -> Result<(), StoreError> {
    if found != expected {
        return Err(StoreError::Dimension {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn write_lines<'a, T, I>(path: &Path, tier: &'static str, items: I) -> Result<(), StoreError>
where
    T: Serialize + 'a,
    I: Iterator<Item = &'a T>,
{
    atomic_write(path, |w| {
        for record in items {
            serde_json::to_writer(&mut *w, &TierLine { tier, record })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

fn atomic_write<F>(path: &Path, body: F) -> Result<(), StoreError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut writer = BufWriter::new(file);
    body(&mut writer).map_err(io_err(&tmp))?;
    writer.flush().map_err(io_err(&tmp))?;
    drop(writer);
    fs::rename(&tmp, path).map_err(io_err(path))
}
