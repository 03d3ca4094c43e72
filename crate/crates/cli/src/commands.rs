use crate::args::{AuditArgs, Cli, Command, CorpusArg, EngineArgs, EvalArgs, Format, IngestArgs, SearchArgs};
use litsearch_core::config::{Config, ConfigError};
use litsearch_core::corpus::{ingest_into_dir, Corpus, StoreError};
use litsearch_core::evalbench::{
    audit_hallucination, evaluate_suite, load_results, load_suite, HallucinationRates, PrecisionMode, ResultsError,
    SuiteError, Taxonomy,
};
use litsearch_core::orchestrator::{SearchEngine, SearchError, SearchIntent, SearchSession};
use litsearch_core::rerank::{ranked_lines, write_ranked_lines, RankedLine};
use serde::Serialize;
use serde_json::{json, Value};
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// An error reported as one JSON object on the error stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    #[serde(skip)]
    pub code: i32,
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: "usage",
            message: message.into(),
            details: None,
        }
    }

    pub fn operational(error: &'static str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILURE,
            error,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::operational("config", e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::operational("corpus", e.to_string())
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        Failure::operational("search", e.to_string())
    }
}

impl From<SuiteError> for Failure {
    fn from(e: SuiteError) -> Self {
        let details = match &e {
            SuiteError::Invalid(problems) => Some(json!(problems)),
            _ => None,
        };
        let f = Failure::operational("suite", e.to_string());
        match details {
            Some(d) => f.with_details(d),
            None => f,
        }
    }
}

impl From<ResultsError> for Failure {
    fn from(e: ResultsError) -> Self {
        Failure::operational("results", e.to_string())
    }
}

fn io_failure(path: &Path) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::operational("io", format!("{}: {e}", path.display()))
}

/// Config file, then `LITSEARCH_*` variables; flags are applied by each
/// command afterwards.
pub fn resolve_config<K: AsRef<str>, V: Into<String>>(
    path: Option<&Path>,
    env: impl IntoIterator<Item = (K, V)>,
) -> Result<Config, Failure> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    config.apply_env(env);
    Ok(config)
}

pub fn apply_engine_args(config: &mut Config, args: &EngineArgs) {
    if let Some(k) = args.k {
        config.engine.cutoff = k as usize;
    }
    if let Some(r) = args.max_rounds {
        config.engine.max_rounds = r;
    }
    if let Some(w) = args.workers {
        config.engine.workers = w as usize;
    }
}

pub fn corpus_dir(config: &mut Config, arg: &CorpusArg) -> Result<PathBuf, Failure> {
    if let Some(p) = &arg.corpus {
        config.corpus.path = Some(p.clone());
    }
    config
        .corpus
        .path
        .clone()
        .ok_or_else(|| Failure::usage("no corpus directory: pass --corpus, set corpus.path or LITSEARCH_CORPUS"))
}

pub fn open_corpus(dir: &Path) -> Result<Corpus, Failure> {
    if !Corpus::exists_at(dir) {
        return Err(StoreError::Missing(dir.to_path_buf()).into());
    }
    Ok(Corpus::open(dir)?)
}

pub fn build_engine(config: &Config, corpus: Arc<Corpus>) -> Result<SearchEngine, Failure> {
    let backends = config.build_backends()?;
    if backends.encoder.dimension() != corpus.dimension() {
        return Err(Failure::operational(
            "config",
            format!(
                "encoder dimension {} does not match corpus dimension {}",
                backends.encoder.dimension(),
                corpus.dimension()
            ),
        ));
    }
    Ok(SearchEngine::new(corpus, backends, config.engine.clone(), config.rate_table()?)?)
}

/// Ranked output lines plus the finished session.
pub fn search_lines(
    engine: &SearchEngine,
    query: &str,
    task_id: Option<&str>,
) -> Result<(Vec<RankedLine>, SearchSession), Failure> {
    let (ranked, session) = engine.run_search(SearchIntent::new(query))?;
    let lines = ranked_lines(&ranked, engine.corpus(), task_id, Some(session.ledger.total.as_f64()));
    Ok((lines, session))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_failure(parent))?;
    }
    let file = File::create(path).map_err(io_failure(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(io_failure(path))
}

/// Execute a parsed command line.
pub fn dispatch<K: AsRef<str>, V: Into<String>>(
    cli: Cli,
    env: impl IntoIterator<Item = (K, V)>,
    stdout: &mut dyn Write,
) -> Result<(), Failure> {
    let mut config = resolve_config(cli.config.as_deref(), env)?;
    let format = cli.format;
    let out = |stdout: &mut dyn Write, text: &str| {
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::operational("io", format!("stdout: {e}")))
    };
    match cli.command {
        Command::Ingest(args) => {
            let text = ingest(&mut config, &args, format)?;
            out(stdout, &text)
        }
        Command::Search(args) => search(&mut config, &args, format, stdout),
        Command::Eval(args) => {
            let text = eval(&mut config, &args, format)?;
            out(stdout, &text)
        }
        Command::Audit(args) => {
            let text = audit(&mut config, &args, format)?;
            out(stdout, &text)
        }
        Command::Serve(args) => {
            let dir = corpus_dir(&mut config, &args.corpus)?;
            apply_engine_args(&mut config, &args.engine);
            crate::serve::run(config, &dir, &args.bind)
        }
    }
}

fn ingest(config: &mut Config, args: &IngestArgs, format: Format) -> Result<String, Failure> {
    let dir = corpus_dir(config, &args.corpus)?;
    let encoder = config.build_encoder()?;
    let report = if args.input.as_os_str() == "-" {
        ingest_into_dir(&dir, io::stdin().lock(), &*encoder, config.encoder.dimension)?
    } else {
        let file = File::open(&args.input).map_err(io_failure(&args.input))?;
        ingest_into_dir(&dir, BufReader::new(file), &*encoder, config.encoder.dimension)?
    };
    Ok(match format {
        Format::Machine => format!("{}\n", serde_json::to_string(&report).expect("report serializes")),
        Format::Text => {
            let mut s = format!(
                "papers: {}\nabstracts: {}\nchunks: {}\ndangling citations dropped: {}\nrejected: {}\n",
                report.papers_ingested,
                report.abstracts_ingested,
                report.chunks_ingested,
                report.dangling_citations_dropped,
                report.rejected_records.len()
            );
            for r in &report.rejected_records {
                s.push_str(&format!(
                    "  line {}: {}\n",
                    r.line,
                    serde_json::to_string(&r.reason).expect("reason serializes")
                ));
            }
            s
        }
    })
}

fn search(config: &mut Config, args: &SearchArgs, format: Format, stdout: &mut dyn Write) -> Result<(), Failure> {
    if args.query.trim().is_empty() {
        return Err(Failure::usage("--query must not be empty"));
    }
    let dir = corpus_dir(config, &args.corpus)?;
    apply_engine_args(config, &args.engine);
    let corpus = Arc::new(open_corpus(&dir)?);
    let engine = build_engine(config, corpus)?;
    let (lines, session) = search_lines(&engine, &args.query, args.task_id.as_deref())?;

    let audit_path = args
        .audit_log
        .clone()
        .or_else(|| args.out.as_ref().map(|o| PathBuf::from(format!("{}.audit.jsonl", o.display()))));
    if let Some(path) = &audit_path {
        write_file(path, |w| session.write_audit_log(w))?;
    }
    let termination = session.termination.as_ref().expect("run_search always terminates");
    let summary = json!({
        "session_id": session.intent.session_id,
        "returned": lines.len(),
        "rounds": termination.rounds,
        "termination": termination.reason,
        "cost_usd": session.ledger.total.to_string(),
        "input_tokens": session.ledger.input_tokens(),
        "output_tokens": session.ledger.output_tokens(),
    });
    let stdout_err = |e: io::Error| Failure::operational("io", format!("stdout: {e}"));
    match &args.out {
        Some(path) => {
            write_file(path, |w| write_ranked_lines(&lines, w))?;
            let text = match format {
                Format::Machine => format!("{summary}\n"),
                Format::Text => format!(
                    "session {}: {} papers after {} round(s), stopped by {}; cost ${}\n",
                    session.intent.session_id,
                    lines.len(),
                    termination.rounds,
                    summary["termination"].as_str().unwrap_or_default(),
                    session.ledger.total
                ),
            };
            stdout.write_all(text.as_bytes()).map_err(stdout_err)
        }
        None => {
            write_ranked_lines(&lines, &mut *stdout).map_err(stdout_err)?;
            log::info!("{summary}");
            Ok(())
        }
    }
}

fn eval(config: &mut Config, args: &EvalArgs, format: Format) -> Result<String, Failure> {
    let dir = corpus_dir(config, &args.corpus)?;
    let corpus = open_corpus(&dir)?;
    let taxonomy = Taxonomy::reference();
    let suite = load_suite(&args.suite, Some(&corpus), &taxonomy)?;
    let results = load_results(&args.results)?;
    let mode = if args.strict_k {
        PrecisionMode::StrictK
    } else {
        PrecisionMode::Returned
    };
    let report = evaluate_suite(&suite, &results, &corpus, &taxonomy, args.k as usize, mode);
    let json = report.to_json();
    if let Some(path) = &args.out {
        write_file(path, |w| w.write_all(json.as_bytes()))?;
    }
    Ok(match format {
        Format::Machine => json,
        Format::Text => report.to_table(),
    })
}

#[derive(Serialize)]
struct AuditRow<'a> {
    task_id: &'a str,
    audited: usize,
    #[serde(flatten)]
    rates: HallucinationRates,
}

fn audit(config: &mut Config, args: &AuditArgs, format: Format) -> Result<String, Failure> {
    let dir = corpus_dir(config, &args.corpus)?;
    let corpus = open_corpus(&dir)?;
    let results = load_results(&args.results)?;
    let k = args.k as usize;
    let rows: Vec<AuditRow> = results
        .iter()
        .map(|r| {
            let report = audit_hallucination(&r.entries, &corpus, k);
            AuditRow {
                task_id: &r.task_id,
                audited: report.citations.len(),
                rates: report.rates,
            }
        })
        .collect();
    let mut s = String::new();
    match format {
        Format::Machine => {
            for row in &rows {
                s.push_str(&serde_json::to_string(row).expect("row serializes"));
                s.push('\n');
            }
        }
        Format::Text => {
            let width = rows.iter().map(|r| r.task_id.len()).max().unwrap_or(0).max(4);
            s.push_str(&format!(
                "{:<width$}  {:>7}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
                "task", "audited", "title", "author", "date", "link", "all"
            ));
            for r in &rows {
                s.push_str(&format!(
                    "{:<width$}  {:>7}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}\n",
                    r.task_id, r.audited, r.rates.title, r.rates.author, r.rates.date, r.rates.link, r.rates.all
                ));
            }
        }
    }
    Ok(s)
}
