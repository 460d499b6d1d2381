//! The `crowdmatch` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or provider error,
//! 3 network error. With `--format json` every command, including failures,
//! prints one JSON document (or one per line in the interactive loop).

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{build_enricher, build_registry, default_provider};
use crate::corpus::{
    collect_issues, import_reviews, upsert_embeddings, CollectorConfig, ImportFormat, IssueCollector,
    RecordKind, UreqTransport, Workspace,
};
use crate::enrich::EnrichOptions;
use crate::error::{Error, Result};
use crate::eval::{compare_with, evaluate, save_report, EvalOptions};
use crate::matcher::{MatchOptions, Matcher};
use crate::model::ReviewClass;
use crate::service::{router, serve, ServiceConfig};
use crate::view::{run_match, stats, MatchRequest, MatchResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Issues,
    Reviews,
}

fn parse_k(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

fn parse_threshold(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(t) if (-1.0..=1.0).contains(&t) => Ok(t),
        _ => Err(format!("`{s}` is not a number in [-1, 1]")),
    }
}

fn parse_class(s: &str) -> std::result::Result<ReviewClass, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "crowdmatch", version, about = "Match app reviews to issue-tracker entries")]
struct Cli {
    /// Workspace directory.
    #[arg(long, global = true, env = "CROWDMATCH_WORKSPACE", default_value = ".")]
    workspace: PathBuf,
    /// Embedding provider; defaults to the workspace's default, else ref-384.
    #[arg(long, global = true)]
    provider: Option<String>,
    #[arg(long = "top-k", global = true, default_value = "5", value_parser = parse_k)]
    top_k: usize,
    /// Minimum cosine in [-1, 1]; off by default.
    #[arg(long, global = true, value_parser = parse_threshold, allow_hyphen_values = true)]
    threshold: Option<f64>,
    /// Translate reviews into this language before classifying and embedding.
    #[arg(long = "translate-to", global = true)]
    translate_to: Option<String>,
    /// Only match reviews of this class (repeatable).
    #[arg(long = "filter-class", global = true, value_parser = parse_class)]
    filter_class: Vec<ReviewClass>,
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create an empty workspace.
    Init {
        #[arg(long)]
        project: Option<String>,
    },
    /// Fetch every issue of a tracker project.
    CollectIssues {
        /// Numeric project id or `group/project` path.
        project_ref: String,
        #[arg(long, env = "CROWDMATCH_TRACKER_URL", default_value = "https://gitlab.com")]
        base_url: String,
        #[arg(long, env = "CROWDMATCH_TOKEN", hide_env_values = true)]
        token: Option<String>,
        #[arg(long, default_value_t = 100)]
        per_page: u32,
        /// Language of the issue titles, for translation.
        #[arg(long, default_value = "auto")]
        source_lang: String,
    },
    /// Import reviews (and gold links) from CSV or JSONL.
    ImportReviews {
        file: PathBuf,
        /// Language of rows without a `lang` column.
        #[arg(long, default_value = "en")]
        lang: String,
        #[arg(long = "input-format")]
        input_format: Option<String>,
    },
    /// Translate (with --translate-to) and classify the stored reviews.
    Enrich,
    /// Embed issue titles or review texts with the provider.
    Embed {
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Match one review (--text or --review) or read reviews line by line.
    Match {
        #[arg(long)]
        text: Option<String>,
        /// Id of a stored review.
        #[arg(long, conflicts_with = "text")]
        review: Option<String>,
        /// Language of --text and of interactive input.
        #[arg(long, default_value = "en")]
        lang: String,
    },
    /// hit@k, MRR and rank statistics against the gold links.
    Eval,
    /// Evaluate several providers side by side.
    Compare {
        #[arg(long, value_delimiter = ',', required = true)]
        providers: Vec<String>,
    },
    /// Corpus counts and the last evaluation.
    Stats,
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory with the triage UI build.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Allowed CORS origin (repeatable, `*` for any).
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
    },
}

struct Io<'a> {
    stdin: &'a mut dyn BufRead,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    format: Format,
}

impl Io<'_> {
    fn emit<T: Serialize>(&mut self, value: &T, table: impl FnOnce(&T) -> String) -> Result<()> {
        match self.format {
            Format::Json => writeln!(self.out, "{}", serde_json::to_string(value)?)?,
            Format::Table => write!(self.out, "{}", table(value))?,
        }
        self.out.flush()?;
        Ok(())
    }
}

/// Command failed after doing what it could; exit with a data error.
struct Partial(String);

fn exit_code(e: &Error) -> i32 {
    match e {
        e if e.is_network() => 3,
        Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn wants_json(args: &[String]) -> bool {
    args.windows(2).any(|w| w[0] == "--format" && w[1] == "json") || args.iter().any(|a| a == "--format=json")
}

fn json_error(code: &str, message: &str) -> String {
    serde_json::json!({"error": {"code": code, "message": message}}).to_string()
}

/// Runs the command line with explicit streams; returns the exit code.
pub fn run_cli(args: &[String], stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let _ = write!(stderr, "{e}");
            if wants_json(args) {
                let first = e.to_string().lines().next().unwrap_or_default().to_string();
                let _ = writeln!(stdout, "{}", json_error("usage", &first));
            }
            return 1;
        }
    };
    let mut io = Io {
        stdin,
        out: stdout,
        err: stderr,
        format: cli.format,
    };
    match dispatch(&cli, &mut io) {
        Ok(None) => 0,
        Ok(Some(Partial(message))) => {
            let _ = writeln!(io.err, "error: {message}");
            2
        }
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            if let Error::NotAWorkspace(_) = e {
                let _ = writeln!(io.err, "hint: run `crowdmatch init` or pass --workspace");
            }
            if io.format == Format::Json {
                let _ = writeln!(io.out, "{}", json_error(e.code(), &e.to_string()));
            }
            exit_code(&e)
        }
    }
}

fn match_defaults(cli: &Cli, ws: &Workspace) -> MatchOptions {
    MatchOptions {
        provider: cli.provider.clone().unwrap_or_else(|| default_provider(ws)),
        k: cli.top_k,
        threshold: cli.threshold,
        translate_to: cli.translate_to.clone(),
        classify_filter: if cli.filter_class.is_empty() {
            None
        } else {
            Some(cli.filter_class.iter().copied().collect::<BTreeSet<_>>())
        },
        classify: false,
    }
}

fn eval_options(cli: &Cli) -> EvalOptions {
    EvalOptions {
        k: cli.top_k,
        threshold: cli.threshold,
        translate_to: cli.translate_to.clone(),
        classify_filter: if cli.filter_class.is_empty() {
            None
        } else {
            Some(cli.filter_class.iter().copied().collect())
        },
    }
}

fn dispatch(cli: &Cli, io: &mut Io<'_>) -> Result<Option<Partial>> {
    if let Command::Init { project } = &cli.command {
        let ws = Workspace::init(&cli.workspace, project.clone())?;
        let summary = serde_json::json!({"workspace": ws.root(), "schema_version": ws.meta().schema_version});
        io.emit(&summary, |_| format!("workspace ready at {}\n", ws.root().display()))?;
        return Ok(None);
    }
    let ws = Workspace::open(&cli.workspace)?;
    match &cli.command {
        Command::Init { .. } => unreachable!("handled above"),
        Command::CollectIssues {
            project_ref,
            base_url,
            token,
            per_page,
            source_lang,
        } => {
            let collector = IssueCollector::new(
                Arc::new(UreqTransport::new(Duration::from_secs(30))),
                base_url.clone(),
                CollectorConfig {
                    per_page: *per_page,
                    token: token.clone(),
                    source_lang: source_lang.clone(),
                    ..CollectorConfig::default()
                },
            );
            let enricher = match &cli.translate_to {
                Some(_) => Some(build_enricher(&ws)?),
                None => None,
            };
            let lock = ws.lock()?;
            let report = collect_issues(&ws, &lock, &collector, project_ref, cli.translate_to.as_deref(), enricher.as_ref())?;
            io.emit(&report, |r| {
                format!(
                    "fetched {} issues in {} pages; {} stored{}\n",
                    r.issues_fetched,
                    r.pages_fetched,
                    r.stored_total,
                    r.resumed_from.map(|p| format!(" (resumed at page {p})")).unwrap_or_default()
                )
            })?;
        }
        Command::ImportReviews { file, lang, input_format } => {
            let format = match input_format {
                Some(f) => f.parse::<ImportFormat>()?,
                None => ImportFormat::from_path(file),
            };
            let lock = ws.lock()?;
            let report = import_reviews(&ws, &lock, file, format, lang)?;
            io.emit(&report, |r| {
                format!(
                    "{} reviews read ({} new), {} gold links ({} new)\n",
                    r.reviews, r.new_reviews, r.gold_links, r.new_gold_links
                )
            })?;
        }
        Command::Enrich => return enrich(cli, &ws, io),
        Command::Embed { kind } => {
            let registry = build_registry(&ws)?;
            let provider = registry.get(&match_defaults(cli, &ws).provider)?;
            let kind = match kind {
                Kind::Issues => RecordKind::Issue,
                Kind::Reviews => RecordKind::Review,
            };
            let lock = ws.lock()?;
            let report = upsert_embeddings(&ws, &lock, provider.as_ref(), kind)?;
            io.emit(&report, |r| {
                let mut s = format!("{}: {} embedded, {} up to date\n", r.provider_id, r.embedded, r.up_to_date);
                for (id, e) in &r.failures {
                    s.push_str(&format!("failed {id}: {e}\n"));
                }
                s
            })?;
            if !report.failures.is_empty() {
                return Ok(Some(Partial(format!("{} records could not be embedded", report.failures.len()))));
            }
        }
        Command::Match { text, review, lang } => {
            let defaults = match_defaults(cli, &ws);
            let matcher = Matcher::from_workspace(ws)?;
            match (text, review) {
                (Some(text), _) => {
                    let response = run_match(&matcher, &request(text, lang), &defaults)?;
                    io.emit(&response, MatchResponse::render_table)?;
                }
                (None, Some(id)) => {
                    let review = matcher.workspace().review(id)?;
                    let result = matcher.match_review(&review, &defaults)?;
                    let response = MatchResponse::from_result(&result, &matcher.workspace().issue_map()?);
                    io.emit(&response, MatchResponse::render_table)?;
                }
                (None, None) => interactive(&matcher, &defaults, lang, io)?,
            }
        }
        Command::Eval => {
            let matcher = Matcher::from_workspace(ws.clone())?;
            let provider = match_defaults(cli, &ws).provider;
            let report = evaluate(&matcher, &provider, &eval_options(cli))?;
            save_report(&ws, &ws.lock()?, &report)?;
            io.emit(&report, |r| r.render_table())?;
            if report.n_failed > 0 {
                return Ok(Some(Partial(format!(
                    "{} gold reviews could not be embedded and were excluded",
                    report.n_failed
                ))));
            }
        }
        Command::Compare { providers } => {
            let matcher = Matcher::from_workspace(ws)?;
            let comparison = compare_with(&matcher, providers, &eval_options(cli))?;
            io.emit(&comparison, |c| c.render_table())?;
        }
        Command::Stats => {
            let s = stats(&ws, &build_registry(&ws)?)?;
            io.emit(&s, |s| s.render_table())?;
        }
        Command::Serve {
            port,
            host,
            static_dir,
            cors_origins,
        } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("bad address {host}:{port}: {e}")))?;
            let defaults = match_defaults(cli, &ws);
            let matcher = Matcher::from_workspace(ws)?;
            let app = router(
                matcher,
                defaults,
                &ServiceConfig {
                    cors_origins: cors_origins.clone(),
                    static_dir: static_dir.clone(),
                },
            );
            let _ = writeln!(io.err, "serving on http://{addr}");
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(addr, app))?;
        }
    }
    Ok(None)
}

fn request(text: &str, lang: &str) -> MatchRequest {
    MatchRequest {
        text: text.to_string(),
        lang: Some(lang.to_string()),
        ..MatchRequest::default()
    }
}

/// One review per line; results are printed as soon as each line is read.
/// A blank line or end of input stops the loop.
fn interactive(matcher: &Matcher, defaults: &MatchOptions, lang: &str, io: &mut Io<'_>) -> Result<()> {
    if io.format == Format::Table {
        let _ = writeln!(io.err, "enter one review per line; empty line to quit");
    }
    let mut line = String::new();
    loop {
        line.clear();
        if io.stdin.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let text = line.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            return Ok(());
        }
        match run_match(matcher, &request(text, lang), defaults) {
            Ok(response) => io.emit(&response, MatchResponse::render_table)?,
            // Keep the loop alive for per-review problems.
            Err(e @ (Error::EmptyText | Error::UnsupportedLanguage(_))) => {
                writeln!(io.err, "error: {e}")?;
                if io.format == Format::Json {
                    writeln!(io.out, "{}", json_error(e.code(), &e.to_string()))?;
                }
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Serialize)]
struct EnrichSummary {
    reviews: usize,
    translated: usize,
    by_class: std::collections::BTreeMap<String, usize>,
    failures: Vec<(String, String)>,
}

fn enrich(cli: &Cli, ws: &Workspace, io: &mut Io<'_>) -> Result<Option<Partial>> {
    let enricher = build_enricher(ws)?;
    let opts = EnrichOptions {
        target: cli.translate_to.clone(),
        classify: true,
    };
    let lock = ws.lock()?;
    let mut summary = EnrichSummary {
        reviews: 0,
        translated: 0,
        by_class: Default::default(),
        failures: Vec::new(),
    };
    let mut out = Vec::new();
    for review in ws.reviews()? {
        summary.reviews += 1;
        match enricher.enrich(&review, &opts) {
            Ok(r) => {
                if opts.target.is_some() {
                    summary.translated += 1;
                }
                if let Some(label) = r.label {
                    *summary.by_class.entry(label.to_string()).or_insert(0) += 1;
                }
                out.push(r);
            }
            // Translations done so far stay in the cache.
            Err(e) if e.is_network() || matches!(e, Error::ProviderUnavailable(_)) => return Err(e),
            Err(e) => {
                summary.failures.push((review.id.clone(), e.to_string()));
                out.push(review);
            }
        }
    }
    ws.save_reviews(&lock, out)?;
    io.emit(&summary, |s| {
        let mut t = format!("{} reviews, {} translated\n", s.reviews, s.translated);
        for (class, n) in &s.by_class {
            t.push_str(&format!("  {class:<16} {n}\n"));
        }
        for (id, e) in &s.failures {
            t.push_str(&format!("failed {id}: {e}\n"));
        }
        t
    })?;
    if summary.failures.is_empty() {
        Ok(None)
    } else {
        Ok(Some(Partial(format!("{} reviews could not be enriched", summary.failures.len()))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let args: Vec<String> = std::iter::once("crowdmatch").chain(args.iter().copied()).map(String::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(&args, &mut std::io::empty(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        let (code, _, err) = run(&["match", "--threshold", "1.5"]);
        assert_eq!(code, 1, "{err}");
        let (code, out, _) = run(&["match", "--top-k", "0", "--format", "json"]);
        assert_eq!(code, 1);
        assert!(serde_json::from_str::<serde_json::Value>(out.trim()).is_ok());
        assert_eq!(run(&["frobnicate"]).0, 1);
        assert_eq!(run(&["--help"]).0, 0);
    }

    #[test]
    fn negative_threshold_parses() {
        let cli = Cli::try_parse_from(["crowdmatch", "match", "--threshold", "-0.5"]).unwrap();
        assert_eq!(cli.threshold, Some(-0.5));
    }

    #[test]
    fn missing_workspace_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let ws = dir.path().join("nothing");
        let (code, out, _) = run(&["--workspace", ws.to_str().unwrap(), "stats", "--format", "json"]);
        assert_eq!(code, 2);
        let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
        assert_eq!(v["error"]["code"], "not_a_workspace");
    }
}
