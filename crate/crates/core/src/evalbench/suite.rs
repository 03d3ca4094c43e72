//! Benchmark suite and results files.
//!
//! A suite is JSON Lines, one task per line:
//!
//! ```json
//! {"task_id": "t1", "query": "...", "checklist": ["..."], "ground_truth": ["p1", "p2"], "discipline": "Mathematics"}
//! ```
//!
//! A results file is JSON Lines of citations. Ranked-list lines written by
//! the search command work as is; external systems can use the minimal
//! form `{"task_id", "rank"?, "title", "authors", "date", "link"?, "doi"?,
//! "paper_id"?, "cost_usd"?}`.

use super::taxonomy::Taxonomy;
use super::{Citation, ReturnedList};
use crate::corpus::{Corpus, PaperId};
use crate::verify::Checklist;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTask {
    pub task_id: String,
    pub query: String,
    pub checklist: Checklist,
    pub ground_truth: BTreeSet<PaperId>,
    pub discipline: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskLine {
    task_id: String,
    query: String,
    #[serde(default)]
    checklist: Vec<String>,
    ground_truth: Vec<PaperId>,
    #[serde(default)]
    discipline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum TaskProblem {
    MalformedTask(String),
    EmptyGroundTruth,
    UnknownGroundTruthId(PaperId),
    UnknownDiscipline(String),
    DuplicateTaskId(String),
}

impl fmt::Display for TaskProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskProblem::MalformedTask(m) => write!(f, "malformed task: {m}"),
            TaskProblem::EmptyGroundTruth => write!(f, "empty ground truth"),
            TaskProblem::UnknownGroundTruthId(id) => write!(f, "ground-truth id `{id}` is not in the corpus"),
            TaskProblem::UnknownDiscipline(d) => write!(f, "discipline `{d}` is not in the taxonomy"),
            TaskProblem::DuplicateTaskId(t) => write!(f, "duplicate task_id `{t}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineProblem {
    pub line: usize,
    pub problem: TaskProblem,
}

impl fmt::Display for LineProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.problem)
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("reading suite: {0}")]
    Io(#[from] io::Error),
    #[error("{} invalid line(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<LineProblem>),
    #[error("suite has no tasks")]
    Empty,
}

/// Parse and validate a suite. Every problem is collected; any problem
/// fails the whole load. With a corpus, ground-truth ids must resolve in it.
pub fn parse_suite<R: BufRead>(reader: R, corpus: Option<&Corpus>, taxonomy: &Taxonomy) -> Result<Vec<BenchTask>, SuiteError> {
    let mut tasks = Vec::new();
    let mut problems = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match check_task(&line, corpus, taxonomy) {
            Ok(task) => {
                if !ids.insert(task.task_id.clone()) {
                    problems.push(LineProblem {
                        line: n,
                        problem: TaskProblem::DuplicateTaskId(task.task_id),
                    });
                } else {
                    tasks.push(task);
                }
            }
            Err(problem) => problems.push(LineProblem { line: n, problem }),
        }
    }
    if !problems.is_empty() {
        return Err(SuiteError::Invalid(problems));
    }
    if tasks.is_empty() {
        return Err(SuiteError::Empty);
    }
    Ok(tasks)
}

fn check_task(line: &str, corpus: Option<&Corpus>, taxonomy: &Taxonomy) -> Result<BenchTask, TaskProblem> {
    let raw: TaskLine = serde_json::from_str(line).map_err(|e| TaskProblem::MalformedTask(e.to_string()))?;
    if raw.task_id.trim().is_empty() {
        return Err(TaskProblem::MalformedTask("empty task_id".into()));
    }
    if raw.query.trim().is_empty() {
        return Err(TaskProblem::MalformedTask("empty query".into()));
    }
    if raw.ground_truth.is_empty() {
        return Err(TaskProblem::EmptyGroundTruth);
    }
    if let Some(corpus) = corpus {
        if let Some(missing) = raw.ground_truth.iter().find(|id| !corpus.contains(id.as_str())) {
            return Err(TaskProblem::UnknownGroundTruthId(missing.clone()));
        }
    }
    let discipline = raw.discipline.unwrap_or_else(|| super::taxonomy::UNKNOWN_DISCIPLINE.to_string());
    if !taxonomy.accepts(&discipline) {
        return Err(TaskProblem::UnknownDiscipline(discipline));
    }
    Ok(BenchTask {
        task_id: raw.task_id,
        query: raw.query,
        checklist: Checklist::from_texts(raw.checklist),
        ground_truth: raw.ground_truth.into_iter().collect(),
        discipline,
    })
}

pub fn load_suite(path: &Path, corpus: Option<&Corpus>, taxonomy: &Taxonomy) -> Result<Vec<BenchTask>, SuiteError> {
    parse_suite(BufReader::new(File::open(path)?), corpus, taxonomy)
}

#[derive(Deserialize)]
struct ResultLine {
    #[serde(default)]
    task_id: Option<String>,
    #[serde(default)]
    rank: Option<u32>,
    #[serde(default)]
    paper_id: Option<PaperId>,
    #[serde(default)]
    title: String,
    #[serde(default)]
    authors: Vec<String>,
    #[serde(default)]
    date: String,
    #[serde(default)]
    link: Option<String>,
    #[serde(default)]
    doi: Option<String>,
    #[serde(default)]
    cost_usd: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("reading results: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

type RankedCitations = (Vec<(u32, usize, Citation)>, Option<f64>);

/// Group result lines by `task_id` (empty when absent), in order of first
/// appearance. Within a task, entries are ordered by `rank` when given and
/// by file order otherwise. The first `cost_usd` seen for a task is kept.
pub fn parse_results<R: BufRead>(reader: R) -> Result<Vec<ReturnedList>, ResultsError> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, RankedCitations> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: ResultLine = serde_json::from_str(&line).map_err(|e| ResultsError::Malformed {
            line: n,
            message: e.to_string(),
        })?;
        if raw.title.trim().is_empty() && raw.paper_id.is_none() {
            return Err(ResultsError::Malformed {
                line: n,
                message: "citation needs a title or a paper_id".into(),
            });
        }
        if let Some(c) = raw.cost_usd {
            if !c.is_finite() || c < 0.0 {
                return Err(ResultsError::Malformed {
                    line: n,
                    message: format!("cost_usd {c} is not a nonnegative amount"),
                });
            }
        }
        let task = raw.task_id.unwrap_or_default();
        let slot = grouped.entry(task.clone()).or_insert_with(|| {
            order.push(task);
            (Vec::new(), None)
        });
        if slot.1.is_none() {
            slot.1 = raw.cost_usd;
        }
        slot.0.push((
            raw.rank.unwrap_or(u32::MAX),
            n,
            Citation {
                paper_id: raw.paper_id,
                title: raw.title,
                authors: raw.authors,
                date: raw.date,
                link: raw.link,
                doi: raw.doi,
            },
        ));
    }
    Ok(order
        .into_iter()
        .map(|task| {
            let (mut entries, cost) = grouped.remove(&task).expect("grouped");
            entries.sort_by_key(|(rank, line, _)| (*rank, *line));
            ReturnedList {
                task_id: task,
                entries: entries.into_iter().map(|(_, _, c)| c).collect(),
                cost_usd: cost,
            }
        })
        .collect())
}

pub fn load_results(path: &Path) -> Result<Vec<ReturnedList>, ResultsError> {
    parse_results(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUITE: &str = r#"{"task_id":"t1","query":"q1","checklist":["a"],"ground_truth":["p1"],"discipline":"Mathematics"}
{"task_id":"t2","query":"q2","checklist":["b"],"ground_truth":["p2","p3"],"discipline":"Algebra"}

{"task_id":"t3","query":"q3","checklist":[],"ground_truth":["p1"]}
"#;

    #[test]
    fn loads_three_tasks() {
        let tasks = parse_suite(SUITE.as_bytes(), None, &Taxonomy::reference()).unwrap();
        assert_eq!(tasks.len(), 3);
        assert_eq!(tasks[2].discipline, "unknown");
    }

    #[test]
    fn rejects_with_line_numbers() {
        let bad = "{\"task_id\":\"a\",\"query\":\"q\",\"ground_truth\":[]}\nnot json\n";
        let Err(SuiteError::Invalid(p)) = parse_suite(bad.as_bytes(), None, &Taxonomy::reference()) else {
            panic!("expected invalid");
        };
        assert_eq!(p[0].line, 1);
        assert_eq!(p[0].problem, TaskProblem::EmptyGroundTruth);
        assert_eq!(p[1].line, 2);
        assert!(matches!(p[1].problem, TaskProblem::MalformedTask(_)));
    }

    #[test]
    fn results_group_and_order() {
        let text = r#"{"task_id":"b","rank":2,"title":"Y","authors":[],"date":"2020"}
{"task_id":"a","title":"Z","authors":[],"date":"2020","cost_usd":0.5}
{"task_id":"b","rank":1,"title":"X","authors":[],"date":"2020","cost_usd":0.1}
"#;
        let lists = parse_results(text.as_bytes()).unwrap();
        assert_eq!(lists[0].task_id, "b");
        assert_eq!(lists[0].entries[0].title, "X");
        assert_eq!(lists[0].cost_usd, Some(0.1));
        assert_eq!(lists[1].cost_usd, Some(0.5));
    }
}
