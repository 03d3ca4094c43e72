//! Shared text encoder contract and exact top-k cosine search.
//!
//! Every encoder emits unit-norm vectors, so cosine similarity reduces to a
//! dot product. Search is brute force over the supplied items; ties on score
//! are broken by item id ascending so rankings never depend on insertion
//! order.

use crate::backend::BackendFailure;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

/// Dimension of the bundled hashing encoder.
pub const REFERENCE_DIMENSION: usize = 256;

/// Tolerance on the L2 norm of a stored embedding.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("text is empty after trimming whitespace")]
    EmptyText,
    #[error("vector has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector has zero norm and cannot be normalized")]
    ZeroVector,
    #[error("vector contains a non-finite component")]
    NonFinite,
    #[error(transparent)]
    Backend(#[from] BackendFailure),
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// L2-normalize a raw vector.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, EncodeError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EncodeError::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(EncodeError::ZeroVector);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self(values))
    }

    /// Wrap a vector that is already normalized. Callers outside this crate
    /// go through [`Embedding::normalized`].
    pub(crate) fn from_unit(values: Vec<f64>) -> Self {
        debug_assert!((l2_norm(&values) - 1.0).abs() <= NORM_TOLERANCE);
        Self(values)
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Cosine similarity with another unit vector.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The text encoder plug-in contract.
///
/// Implementations must be deterministic: identical text yields a bitwise
/// identical vector within one process configuration.
pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    /// Encode a batch, returning vectors in input order.
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncodeError>;
}

/// Encode one text, validating the backend's output.
pub fn encode(text: &str, backend: &dyn EncoderBackend) -> Result<Embedding, EncodeError> {
    if text.trim().is_empty() {
        return Err(EncodeError::EmptyText);
    }
    let mut out = backend.encode_batch(&[text])?;
    let emb = out.pop().ok_or_else(|| {
        BackendFailure::new(backend.name(), "encoder returned no vector for a single text")
    })?;
    check_output(&emb, backend.dimension())?;
    Ok(emb)
}

/// Encode several texts with one backend call.
pub fn encode_many(texts: &[&str], backend: &dyn EncoderBackend) -> Result<Vec<Embedding>, EncodeError> {
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(EncodeError::EmptyText);
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let out = backend.encode_batch(texts)?;
    if out.len() != texts.len() {
        return Err(BackendFailure::new(
            backend.name(),
            format!("encoder returned {} vectors for {} texts", out.len(), texts.len()),
        )
        .into());
    }
    for emb in &out {
        check_output(emb, backend.dimension())?;
    }
    Ok(out)
}

fn check_output(emb: &Embedding, expected: usize) -> Result<(), EncodeError> {
    if emb.dimension() != expected {
        return Err(EncodeError::DimensionMismatch {
            expected,
            found: emb.dimension(),
        });
    }
    Ok(())
}

/// Deterministic reference encoder: signed feature hashing of character
/// 3-grams, then L2 normalization.
///
/// Text is bracketed with start/end markers so strings shorter than three
/// characters still produce grams. No case folding is applied; distinct
/// texts map to distinct vectors unless their grams collide.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    dimension: usize,
}

impl HashingEncoder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "encoder dimension must be positive");
        Self { dimension }
    }

    pub fn encode_text(&self, text: &str) -> Embedding {
        let mut buckets = vec![0.0f64; self.dimension];
        let chars: Vec<char> = std::iter::once('\u{2}')
            .chain(text.chars())
            .chain(std::iter::once('\u{3}'))
            .collect();
        let mut gram = String::with_capacity(12);
        for window in chars.windows(3) {
            gram.clear();
            gram.extend(window);
            let h = fnv1a(gram.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            buckets[bucket] += sign;
        }
        match Embedding::normalized(buckets) {
            Ok(e) => e,
            // All grams cancelled out; fall back to a one-hot on the whole text.
            Err(_) => {
                let mut one_hot = vec![0.0; self.dimension];
                one_hot[(fnv1a(text.as_bytes()) % self.dimension as u64) as usize] = 1.0;
                Embedding::from_unit(one_hot)
            }
        }
    }
}

impl Default for HashingEncoder {
    fn default() -> Self {
        Self::new(REFERENCE_DIMENSION)
    }
}

impl EncoderBackend for HashingEncoder {
    fn name(&self) -> &str {
        "hashing-3gram"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncodeError> {
        Ok(texts.iter().map(|t| self.encode_text(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

/// One search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHit<I> {
    pub item_id: I,
    pub score: f64,
}

fn hit_order<I: Ord>(a: &SimilarityHit<I>, b: &SimilarityHit<I>) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Exact top-k by cosine similarity, score descending then id ascending.
pub fn top_k_similar<'a, I, It>(query: &Embedding, items: It, k: usize) -> Result<Vec<SimilarityHit<I>>, EncodeError>
where
    I: Ord + Clone + 'a,
    It: IntoIterator<Item = (I, &'a [f64])>,
{
    assert!(k >= 1, "k must be positive");
    let q = query.as_slice();
    let mut hits = Vec::new();
    for (id, vector) in items {
        if vector.len() != q.len() {
            return Err(EncodeError::DimensionMismatch {
                expected: q.len(),
                found: vector.len(),
            });
        }
        hits.push(SimilarityHit {
            item_id: id,
            score: dot(q, vector),
        });
    }
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, hit_order);
        hits.truncate(k);
    }
    hits.sort_by(hit_order);
    Ok(hits)
}
