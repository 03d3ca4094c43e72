use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "litsearch", version, about = "Evidence-grounded literature search over a local corpus")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "LITSEARCH_CONFIG")]
    pub config: Option<PathBuf>,

    /// Output style for summaries on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest JSON Lines records into a corpus directory.
    Ingest(IngestArgs),
    /// Run a search session and write the ranked list.
    Search(SearchArgs),
    /// Score a results file against a benchmark suite.
    Eval(EvalArgs),
    /// Verify the citations of a results file against the corpus.
    Audit(AuditArgs),
    /// Serve search, evaluation and corpus reads over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArg {
    /// Corpus directory (overrides config and LITSEARCH_CORPUS).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    /// Records file; `-` reads standard input.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Final cutoff K.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_rounds: Option<u32>,
    /// Librarian workers.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Tag every output line with this task id.
    #[arg(long)]
    pub task_id: Option<String>,
    /// Ranked list output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Session audit log; defaults to `<out>.audit.jsonl` when `--out` is set.
    #[arg(long)]
    pub audit_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Divide precision by K instead of min(K, returned).
    #[arg(long)]
    pub strict_k: bool,
    /// JSON report output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}
