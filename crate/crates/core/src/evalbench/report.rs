//! Per-task evaluation and macro-averaged suite reports.

use super::hallucination::{audit_hallucination, resolve_citation, HallucinationRates};
use super::metrics::{evaluate_ranking, PrecisionMode};
use super::suite::BenchTask;
use super::taxonomy::{Taxonomy, UNKNOWN_DISCIPLINE};
use super::ReturnedList;
use crate::corpus::{Corpus, PaperId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: String,
    pub discipline: String,
    pub returned: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub ndcg: f64,
    pub hallucination: HallucinationRates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<f64>,
}

/// Score one returned list against its task.
pub fn evaluate_task(returned: &ReturnedList, task: &BenchTask, corpus: &Corpus, k: usize, mode: PrecisionMode) -> TaskMetrics {
    let resolved: Vec<Option<PaperId>> = returned.entries.iter().map(|c| resolve_citation(c, corpus)).collect();
    let m = evaluate_ranking(&resolved, &task.ground_truth, k, mode);
    let audit = audit_hallucination(&returned.entries, corpus, k);
    TaskMetrics {
        task_id: task.task_id.clone(),
        discipline: task.discipline.clone(),
        returned: returned.entries.len(),
        recall: m.recall,
        precision: m.precision,
        f1: m.f1,
        ndcg: m.ndcg,
        hallucination: audit.rates,
        cost_usd: returned.cost_usd,
    }
}

/// Unweighted means over a group of tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroRow {
    pub group: String,
    pub tasks: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub ndcg: f64,
    pub hallucination: HallucinationRates,
    /// Mean over tasks that reported a cost; absent when none did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<f64>,
}

impl MacroRow {
    fn of(group: &str, rows: &[&TaskMetrics]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&TaskMetrics) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        let costs: Vec<f64> = rows.iter().filter_map(|r| r.cost_usd).collect();
        Self {
            group: group.to_string(),
            tasks: rows.len(),
            recall: mean(|r| r.recall),
            precision: mean(|r| r.precision),
            f1: mean(|r| r.f1),
            ndcg: mean(|r| r.ndcg),
            hallucination: HallucinationRates {
                title: mean(|r| r.hallucination.title),
                author: mean(|r| r.hallucination.author),
                date: mean(|r| r.hallucination.date),
                link: mean(|r| r.hallucination.link),
                all: mean(|r| r.hallucination.all),
            },
            cost_usd: if costs.is_empty() {
                None
            } else {
                Some(costs.iter().sum::<f64>() / costs.len() as f64)
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub k: usize,
    pub precision_mode: PrecisionMode,
    pub tasks: Vec<TaskMetrics>,
    pub overall: MacroRow,
    pub disciplines: Vec<MacroRow>,
    /// Suite tasks with no lines in the results file (scored as empty lists).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_results: Vec<String>,
    /// Result task ids absent from the suite (ignored).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmatched_results: Vec<String>,
}

/// Macro averages overall and per discipline. Discipline rows follow the
/// taxonomy order, then other tags alphabetically, with `unknown` last.
pub fn aggregate_report(tasks: Vec<TaskMetrics>, taxonomy: &Taxonomy, k: usize, mode: PrecisionMode) -> SuiteReport {
    let mut groups: BTreeMap<(usize, usize, String), Vec<&TaskMetrics>> = BTreeMap::new();
    for t in &tasks {
        let key = if t.discipline == UNKNOWN_DISCIPLINE {
            (usize::MAX, usize::MAX, t.discipline.clone())
        } else {
            match taxonomy.disciplines.iter().position(|d| d.discipline == t.discipline) {
                Some(pos) => (pos, 0, t.discipline.clone()),
                None => (usize::MAX - 1, 0, t.discipline.clone()),
            }
        };
        groups.entry(key).or_default().push(t);
    }
    let disciplines = groups.iter().map(|((_, _, name), rows)| MacroRow::of(name, rows)).collect();
    let all: Vec<&TaskMetrics> = tasks.iter().collect();
    let overall = MacroRow::of("overall", &all);
    SuiteReport {
        k,
        precision_mode: mode,
        overall,
        disciplines,
        tasks,
        missing_results: Vec::new(),
        unmatched_results: Vec::new(),
    }
}

/// Evaluate every suite task against the matching returned list.
pub fn evaluate_suite(
    suite: &[BenchTask],
    results: &[ReturnedList],
    corpus: &Corpus,
    taxonomy: &Taxonomy,
    k: usize,
    mode: PrecisionMode,
) -> SuiteReport {
    let by_task: BTreeMap<&str, &ReturnedList> = results.iter().map(|r| (r.task_id.as_str(), r)).collect();
    let mut missing = Vec::new();
    let metrics = suite
        .iter()
        .map(|task| match by_task.get(task.task_id.as_str()) {
            Some(r) => evaluate_task(r, task, corpus, k, mode),
            None => {
                missing.push(task.task_id.clone());
                evaluate_task(
                    &ReturnedList {
                        task_id: task.task_id.clone(),
                        entries: Vec::new(),
                        cost_usd: None,
                    },
                    task,
                    corpus,
                    k,
                    mode,
                )
            }
        })
        .collect();
    let mut report = aggregate_report(metrics, taxonomy, k, mode);
    report.missing_results = missing;
    report.unmatched_results = results
        .iter()
        .filter(|r| !suite.iter().any(|t| t.task_id == r.task_id))
        .map(|r| r.task_id.clone())
        .collect();
    report
}

impl SuiteReport {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned text table: one row per discipline plus the overall row.
    pub fn to_table(&self) -> String {
        let header = ["group", "tasks", "recall", "precision", "f1", "ndcg", "halluc", "cost_usd"];
        let mut rows: Vec<[String; 8]> = Vec::new();
        for r in self.disciplines.iter().chain(std::iter::once(&self.overall)) {
            rows.push([
                r.group.clone(),
                r.tasks.to_string(),
                format!("{:.4}", r.recall),
                format!("{:.4}", r.precision),
                format!("{:.4}", r.f1),
                format!("{:.4}", r.ndcg),
                format!("{:.4}", r.hallucination.all),
                r.cost_usd.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into()),
            ]);
        }
        let mut widths = header.map(str::len);
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let precision = match self.precision_mode {
            PrecisionMode::Returned => "precision denominator min(K, returned)",
            PrecisionMode::StrictK => "precision denominator K",
        };
        let _ = writeln!(out, "K = {}; {precision}", self.k);
        let line = |out: &mut String, cells: &[String]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                if i == 0 {
                    let _ = write!(s, "{cell:<w$}");
                } else {
                    let _ = write!(s, "  {cell:>w$}");
                }
            }
            let _ = writeln!(out, "{}", s.trim_end());
        };
        line(&mut out, &header.map(String::from));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule);
        for (i, row) in rows.iter().enumerate() {
            if i + 1 == rows.len() {
                line(&mut out, &rule);
            }
            line(&mut out, row);
        }
        out
    }
}
