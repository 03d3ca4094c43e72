//! Benchmark harness: suites, ranking metrics, citation auditing and
//! per-discipline reports.

mod hallucination;
mod metrics;
mod report;
mod suite;
mod taxonomy;

pub use hallucination::{
    audit_citation, audit_hallucination, resolve_citation, CitationAudit, HallucinationRates, HallucinationReport,
};
pub use metrics::{evaluate_ranking, f1, PrecisionMode, RankingMetrics};
pub use report::{aggregate_report, evaluate_suite, evaluate_task, MacroRow, SuiteReport, TaskMetrics};
pub use suite::{
    load_results, load_suite, parse_results, parse_suite, BenchTask, LineProblem, ResultsError, SuiteError, TaskProblem,
};
pub use taxonomy::{Discipline, Taxonomy, UNKNOWN_DISCIPLINE};

use crate::corpus::PaperId;
use crate::rerank::RankedLine;
use serde::{Deserialize, Serialize};

pub const DEFAULT_K: usize = 20;

/// One returned citation as a system reports it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_id: Option<PaperId>,
    pub title: String,
    pub authors: Vec<String>,
    pub date: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
}

impl From<&RankedLine> for Citation {
    fn from(line: &RankedLine) -> Self {
        Self {
            paper_id: Some(line.paper_id.clone()),
            title: line.title.clone(),
            authors: line.authors.clone(),
            date: line.date.clone(),
            link: line.link.clone(),
            doi: line.doi.clone(),
        }
    }
}

/// A system's ordered answer for one task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReturnedList {
    pub task_id: String,
    pub entries: Vec<Citation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<f64>,
}

impl ReturnedList {
    pub fn from_ranked_lines(task_id: impl Into<String>, lines: &[RankedLine]) -> Self {
        Self {
            task_id: task_id.into(),
            entries: lines.iter().map(Citation::from).collect(),
            cost_usd: lines.iter().find_map(|l| l.cost_usd),
        }
    }
}
