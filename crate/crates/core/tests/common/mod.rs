#![allow(dead_code)]

use litsearch_core::backend::TokenUsage;
use litsearch_core::channels::{ExternalFinding, SearchStrategy};
use litsearch_core::corpus::{Corpus, PaperId};
use litsearch_core::encoder::HashingEncoder;
use litsearch_core::orchestrator::{
    Backends, EngineConfig, HeuristicNavigator, Plan, RateTable, Reflection, ScriptedNavigator, SearchEngine,
};
use litsearch_core::rerank::{FnListwise, IdentityListwise, ListwiseBackend};
use litsearch_core::verify::{
    CheckpointJudgment, Checklist, FnScorer, JudgeRequest, Judged, Judgment, KeywordOverlapScorer, ScorerBackend,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::collections::BTreeSet;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::PathBuf;
use std::sync::Arc;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn corpus_from_lines<S: AsRef<str>>(lines: &[S]) -> Corpus {
    let mut corpus = Corpus::empty(256);
    let report = corpus
        .ingest_lines(lines.iter().map(|l| l.as_ref()), &HashingEncoder::default())
        .expect("fixture ingests");
    assert!(report.rejected_records.is_empty(), "{:?}", report.rejected_records);
    corpus
}

pub fn ten_paper_corpus() -> Corpus {
    let text = std::fs::read_to_string(fixture_path("ten_papers.jsonl")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    corpus_from_lines(&lines)
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mer", "tin", "sa", "vo", "ri", "den", "pla", "qu", "zor", "fe", "nu", "bra", "cle", "dro", "gan",
    "hil", "jor", "mip", "ost", "pre", "sul", "tev",
];

const SURNAMES: [&str; 12] = [
    "Smith", "García", "Müller", "Okafor", "Nguyen", "Dvořák", "Kowalski", "Tanaka", "Li", "O'Neil", "Håkansson",
    "Ferreira",
];

pub fn vocabulary(rng: &mut impl Rng, size: usize) -> Vec<String> {
    let mut words = BTreeSet::new();
    while words.len() < size {
        let n = rng.random_range(2..=4);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if w.len() >= 4 {
            words.insert(w);
        }
    }
    words.into_iter().collect()
}

fn sentence(rng: &mut impl Rng, vocab: &[String], n: usize) -> String {
    (0..n).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
}

/// Random ingest lines for `n` papers: citations (some dangling), DOIs and
/// links on some papers, abstracts on most, zero to three chunks each.
pub fn synthetic_lines(rng: &mut impl Rng, n: usize, vocab: &[String]) -> Vec<String> {
    let ids: Vec<String> = (0..n).map(|i| format!("s{i:04}")).collect();
    let mut lines = Vec::new();
    for id in &ids {
        let refs: Vec<String> = (0..rng.random_range(0..6))
            .map(|_| {
                if rng.random_bool(0.05) {
                    format!("ghost{}", rng.random_range(0..1000))
                } else {
                    ids.choose(rng).unwrap().clone()
                }
            })
            .filter(|r| r != id)
            .collect();
        let authors: Vec<String> = (0..rng.random_range(1..4))
            .map(|_| format!("{}. {}", (b'A' + rng.random_range(0..26u8)) as char, SURNAMES.choose(rng).unwrap()))
            .collect();
        let title_len = rng.random_range(3..7);
        let mut meta = json!({
            "tier": "meta",
            "paper_id": id,
            "title": sentence(rng, vocab, title_len),
            "authors": authors,
            "date": format!("{}-{:02}-{:02}", rng.random_range(1990..2025), rng.random_range(1..13), rng.random_range(1..29)),
            "references": refs,
        });
        if rng.random_bool(0.4) {
            meta["doi"] = json!(format!("10.{}/{id}", rng.random_range(1000..9999)));
        }
        if rng.random_bool(0.5) {
            meta["link"] = json!(format!("https://example.org/{id}"));
        }
        lines.push(meta.to_string());
    }
    for id in &ids {
        if rng.random_bool(0.9) {
            lines.push(json!({"tier": "abstract", "paper_id": id, "abstract_text": sentence(rng, vocab, 25)}).to_string());
        }
        for c in 0..rng.random_range(0..4) {
            lines.push(json!({"tier": "chunk", "paper_id": id, "chunk_index": c, "text": sentence(rng, vocab, 30)}).to_string());
        }
    }
    lines
}

pub fn synthetic_corpus(rng: &mut impl Rng, n: usize, vocab: &[String]) -> Corpus {
    let lines = synthetic_lines(rng, n, vocab);
    let mut corpus = Corpus::empty(256);
    corpus
        .ingest_lines(lines.iter().map(String::as_str), &HashingEncoder::default())
        .expect("synthetic ingest");
    corpus
}

fn hash_of(parts: impl Hash) -> u64 {
    let mut h = DefaultHasher::new();
    parts.hash(&mut h);
    h.finish()
}

/// Scorer whose judgments are a pure function of (seed, paper, checkpoint),
/// with about one candidate in `malformed_one_in` getting an invalid score.
pub fn random_scorer(seed: u64, malformed_one_in: u64) -> impl ScorerBackend {
    FnScorer::new("random-scorer", move |req: &JudgeRequest| {
        let pid = req.paper.paper_id.as_str().to_string();
        let broken = malformed_one_in > 0 && hash_of((seed, &pid, "broken")).is_multiple_of(malformed_one_in);
        let scores: Vec<CheckpointJudgment> = req
            .checklist
            .checkpoints
            .iter()
            .map(|c| {
                let cited: Vec<u32> = req
                    .paper
                    .evidence
                    .iter()
                    .filter(|p| p.checkpoint_id == c.checkpoint_id)
                    .map(|p| p.chunk_index)
                    .take(1)
                    .collect();
                CheckpointJudgment {
                    checkpoint_id: c.checkpoint_id,
                    score: if broken { 6 } else { 1 + (hash_of((seed, &pid, c.checkpoint_id)) % 5) as i64 },
                    rationale: format!("judged {pid}"),
                    cited_chunks: cited,
                }
            })
            .collect();
        let confidence = 0.01 + (hash_of((seed, &pid, "rho")) % 99) as f64 / 100.0;
        Ok(Judged {
            judgment: Judgment {
                scores,
                confidence: confidence.min(0.99),
            },
            usage: TokenUsage::new("mock", 100 + hash_of((seed, &pid)) % 50, 20),
        })
    })
}

/// Listwise backend that shuffles deterministically, sometimes returning
/// an invalid permutation.
pub fn random_listwise(seed: u64) -> Arc<dyn ListwiseBackend> {
    Arc::new(FnListwise::new("random-listwise", move |ids: &[PaperId]| {
        let mut rng = ChaCha8Rng::seed_from_u64(hash_of((seed, ids)));
        let mut out = ids.to_vec();
        out.shuffle(&mut rng);
        if rng.random_bool(0.2) && !out.is_empty() {
            out.pop();
        }
        out
    }))
}

pub fn random_strategy(rng: &mut impl Rng, corpus: &Corpus, vocab: &[String]) -> SearchStrategy {
    let ids: Vec<PaperId> = corpus.papers().map(|p| p.paper_id.clone()).collect();
    let titles: Vec<String> = corpus.papers().map(|p| p.title.clone()).collect();
    loop {
        let s = SearchStrategy {
            semantic_queries: (0..rng.random_range(0..3)).map(|_| sentence(rng, vocab, 4)).collect(),
            seed_paper_ids: (0..rng.random_range(0..4))
                .map(|_| {
                    if rng.random_bool(0.1) {
                        PaperId::from("nonexistent")
                    } else {
                        ids.choose(rng).unwrap().clone()
                    }
                })
                .collect(),
            expansion_depth: rng.random_range(0..3),
            external_findings: (0..rng.random_range(0..3))
                .map(|_| ExternalFinding {
                    title: if rng.random_bool(0.5) {
                        titles.choose(rng).unwrap().to_uppercase()
                    } else {
                        format!("Fabricated study of {}", sentence(rng, vocab, 3))
                    },
                    doi: None,
                    link: None,
                })
                .collect(),
            per_channel_limit: rng.random_range(5..40),
        };
        if s.validate().is_ok() {
            return s;
        }
    }
}

pub fn random_checklist(rng: &mut impl Rng, vocab: &[String]) -> Checklist {
    Checklist::from_texts((0..rng.random_range(1..5)).map(|_| sentence(rng, vocab, 3)).collect::<Vec<_>>())
}

pub fn random_navigator(rng: &mut impl Rng, corpus: &Corpus, vocab: &[String]) -> ScriptedNavigator {
    let plan = Plan {
        strategy: random_strategy(rng, corpus, vocab),
        checklist: random_checklist(rng, vocab),
    };
    let reflections = (0..rng.random_range(0..4))
        .map(|_| Reflection {
            strategy: random_strategy(rng, corpus, vocab),
            checklist: if rng.random_bool(0.3) {
                random_checklist(rng, vocab)
            } else {
                plan.checklist.clone()
            },
            stop: rng.random_bool(0.1),
        })
        .collect();
    ScriptedNavigator { plan, reflections }
}

pub fn engine_with(corpus: Arc<Corpus>, backends: Backends, config: EngineConfig) -> SearchEngine {
    SearchEngine::new(corpus, backends, config, RateTable::new()).unwrap()
}

/// Backends: hashing encoder, keyword scorer, identity listwise.
pub fn keyword_backends(navigator: Arc<dyn litsearch_core::orchestrator::NavigatorBackend>) -> Backends {
    Backends::new(Arc::new(HashingEncoder::default()), navigator, Arc::new(KeywordOverlapScorer))
        .with_listwise(Arc::new(IdentityListwise))
}

pub const EVOLVING_QUERY: &str = "graph neural networks for molecular property prediction";

/// Corpus where three relevant papers match the query text directly and
/// two more, whose abstracts share no vocabulary with the query, are only
/// reachable by following citations of the first three. Distractors mention
/// none of the checkpoint words.
pub fn self_evolving_corpus() -> (Corpus, BTreeSet<PaperId>) {
    let mut lines = Vec::new();
    let mut meta = |id: &str, title: &str, refs: &[&str]| {
        lines.push(
            json!({"tier": "meta", "paper_id": id, "title": title, "authors": ["Ada Lovelace"], "date": "2020-01-01", "references": refs})
                .to_string(),
        );
    };
    meta("a1", "Graph neural networks for molecular property prediction", &["b1"]);
    meta("a2", "Molecular property prediction with graph networks", &["b2"]);
    meta("a3", "Neural message passing for molecular graphs", &["b1"]);
    meta("b1", "Learned representations of chemical compounds", &[]);
    meta("b2", "Equivariant interaction models for atomistic systems", &[]);
    let distractor_topics = [
        "Crop rotation yields in temperate climates",
        "Monetary policy transmission in small economies",
        "Medieval trade routes of the Baltic",
        "Glacier retreat observed from satellites",
        "Labour market effects of automation",
        "Urban heat islands and vegetation cover",
        "Sediment transport in braided rivers",
        "Ancient pottery glaze chemistry",
    ];
    for (i, t) in distractor_topics.iter().enumerate() {
        let refs: Vec<String> = if i % 3 == 0 { vec!["a1".to_string()] } else { vec![] };
        let refs: Vec<&str> = refs.iter().map(String::as_str).collect();
        meta(&format!("d{i}"), t, &refs);
    }
    let mut text = |id: &str, abstract_text: &str, chunks: &[&str]| {
        lines.push(json!({"tier": "abstract", "paper_id": id, "abstract_text": abstract_text}).to_string());
        for (i, c) in chunks.iter().enumerate() {
            lines.push(json!({"tier": "chunk", "paper_id": id, "chunk_index": i, "text": c}).to_string());
        }
    };
    let relevant_chunk = "We train graph neural networks that predict molecular properties; the property prediction results cover many molecules.";
    text("a1", "Graph neural networks for molecular property prediction on benchmark datasets.", &[relevant_chunk]);
    text("a2", "We study molecular property prediction using graph neural networks.", &[relevant_chunk]);
    text("a3", "Neural message passing on molecular graphs for property prediction.", &[relevant_chunk]);
    text("b1", "Learned representations of chemical compounds from their bonding topology.", &[relevant_chunk]);
    text("b2", "Equivariant interaction models for atomistic systems and force fields.", &[relevant_chunk]);
    for (i, t) in distractor_topics.iter().enumerate() {
        text(&format!("d{i}"), &format!("{t}: a field study."), &["Observations were collected over several seasons and summarised."]);
    }
    let gt = ["a1", "a2", "a3", "b1", "b2"].into_iter().map(PaperId::from).collect();
    (corpus_from_lines(&lines), gt)
}

/// Navigator for the self-evolving fixture: three semantic hits per round,
/// then citation expansion from the top three ranked papers.
pub fn evolving_navigator() -> HeuristicNavigator {
    HeuristicNavigator {
        per_channel_limit: 3,
        seed_count: 3,
        expansion_depth: 1,
    }
}
