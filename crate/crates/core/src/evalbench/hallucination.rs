//! Field-level citation verification against the corpus.

use super::Citation;
use crate::channels::{web_to_repo_verify, ExternalFinding};
use crate::corpus::{Corpus, PaperId, PaperRecord};
use crate::text::{normalize_link, normalize_title, surname_multiset, year_of};
use serde::{Deserialize, Serialize};

/// Fraction of audited citations failing each field, and failing any.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HallucinationRates {
    pub title: f64,
    pub author: f64,
    pub date: f64,
    pub link: f64,
    pub all: f64,
}

impl HallucinationRates {
    pub fn is_zero(&self) -> bool {
        self.title == 0.0 && self.author == 0.0 && self.date == 0.0 && self.link == 0.0 && self.all == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationAudit {
    pub resolved: Option<PaperId>,
    pub title_ok: bool,
    pub author_ok: bool,
    pub date_ok: bool,
    pub link_ok: bool,
}

impl CitationAudit {
    pub fn verified(&self) -> bool {
        self.title_ok && self.author_ok && self.date_ok && self.link_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationReport {
    pub rates: HallucinationRates,
    pub citations: Vec<CitationAudit>,
}

/// Corpus entry a citation refers to: a known `paper_id` first, then
/// normalized DOI, then normalized title.
pub fn resolve_citation(citation: &Citation, corpus: &Corpus) -> Option<PaperId> {
    if let Some(id) = &citation.paper_id {
        if corpus.contains(id.as_str()) {
            return Some(id.clone());
        }
    }
    let finding = ExternalFinding {
        title: citation.title.clone(),
        doi: citation.doi.clone(),
        link: citation.link.clone(),
    };
    web_to_repo_verify(&finding, corpus).paper_id().cloned()
}

fn link_matches(citation: &Citation, record: &PaperRecord) -> bool {
    let claimed = citation
        .link
        .as_deref()
        .and_then(normalize_link)
        .or_else(|| citation.doi.as_deref().and_then(|d| normalize_link(&format!("doi:{d}"))));
    let known: Vec<String> = record
        .link
        .as_deref()
        .and_then(normalize_link)
        .into_iter()
        .chain(record.doi.as_deref().and_then(|d| normalize_link(&format!("doi:{d}"))))
        .collect();
    match claimed {
        Some(c) => known.contains(&c),
        None => known.is_empty(),
    }
}

pub fn audit_citation(citation: &Citation, corpus: &Corpus) -> CitationAudit {
    let resolved = resolve_citation(citation, corpus);
    let Some(record) = resolved.as_ref().and_then(|id| corpus.paper(id.as_str()).ok()) else {
        return CitationAudit {
            resolved: None,
            title_ok: false,
            author_ok: false,
            date_ok: false,
            link_ok: false,
        };
    };
    let claimed_year = year_of(&citation.date);
    CitationAudit {
        title_ok: normalize_title(&citation.title) == normalize_title(&record.title),
        author_ok: surname_multiset(&citation.authors) == surname_multiset(&record.authors),
        date_ok: claimed_year.is_some() && claimed_year == year_of(&record.date),
        link_ok: link_matches(citation, record),
        resolved,
    }
}

/// Audit the first `k` citations (`k` clamped to at least 1). An empty list
/// has all rates zero.
pub fn audit_hallucination(citations: &[Citation], corpus: &Corpus, k: usize) -> HallucinationReport {
    let prefix = &citations[..citations.len().min(k.max(1))];
    let audits: Vec<CitationAudit> = prefix.iter().map(|c| audit_citation(c, corpus)).collect();
    let n = audits.len();
    let rate = |f: fn(&CitationAudit) -> bool| {
        if n == 0 {
            0.0
        } else {
            audits.iter().filter(|a| !f(a)).count() as f64 / n as f64
        }
    };
    HallucinationReport {
        rates: HallucinationRates {
            title: rate(|a| a.title_ok),
            author: rate(|a| a.author_ok),
            date: rate(|a| a.date_ok),
            link: rate(|a| a.link_ok),
            all: rate(CitationAudit::verified),
        },
        citations: audits,
    }
}
