use std::fs;
use std::io::{BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dataflow_dialogue::calendar::{Clock, EventStore, DEFAULT_NOW};
use dataflow_dialogue::corpus::{
    equivalence_harness, length_stats, load_jsonl, parse_jsonl, simplify_dataset, to_jsonl, DialogueRecord, Fixtures,
    Loaded,
};
use dataflow_dialogue::rewrite::{default_rules, simplify_with, RuleSet};
use dataflow_dialogue::{Engine, Outcome, Syntax};

use crate::server::{self, ServerConfig};
use crate::{render, script_lines, Internal, Setup};

/// Corpus and calendar used when `equivalence` is given no files.
pub const BUNDLED_CORPUS: &str = include_str!("../../../data/corpus.jsonl");
pub const BUNDLED_CALENDAR: &str = include_str!("../../../data/calendar.json");

#[derive(Debug, Parser)]
#[command(name = "dataflow", version, about = "Execute, inspect and rewrite dataflow dialogue annotations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a script, one turn per line
    Run(RunArgs),
    /// Interactive dialogue on stdin
    Repl(SessionArgs),
    /// Add simplified annotations to a JSONL dataset
    Simplify(SimplifyArgs),
    /// Token-length quantiles of original and simplified annotations
    Stats(StatsArgs),
    /// Check that simplified annotations execute like the originals
    Equivalence(EquivalenceArgs),
    /// HTTP JSON API for dialogue sessions
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    /// Reference time for relative dates
    #[arg(long, default_value = DEFAULT_NOW)]
    pub now: String,
    /// Calendar fixture, a JSON list of events (empty calendar if omitted)
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Annotation syntax of each turn
    #[arg(long, default_value = "call")]
    pub syntax: Syntax,
}

impl SessionArgs {
    pub fn setup(&self) -> Result<Setup> {
        Setup::new(&self.now, self.events.as_deref(), self.syntax)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub script: PathBuf,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Write one DOT file per turn into this directory
    #[arg(long, value_name = "DIR")]
    pub export_dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimplifyArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Pass failing records through unchanged instead of aborting
    #[arg(long)]
    pub lenient: bool,
    /// Print every rule application
    #[arg(long)]
    pub explain: bool,
    /// Rule manifest to use instead of the built-in one
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EquivalenceArgs {
    /// JSONL dataset (the bundled corpus if omitted)
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Calendar fixture (the bundled calendar if omitted)
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_NOW)]
    pub now: String,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Queue a turn behind one still running instead of answering 409
    #[arg(long)]
    pub wait_when_busy: bool,
}

/// Runs a parsed command line and returns the process exit status.
pub fn execute(cli: Cli, out: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Repl(a) => a.setup().and_then(|s| {
            let stdin = std::io::stdin();
            let interactive = stdin.is_terminal();
            cmd_repl(&s, stdin.lock(), out, interactive)
        }),
        Command::Simplify(a) => cmd_simplify(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
        Command::Equivalence(a) => cmd_equivalence(&a, out),
        Command::Serve(a) => cmd_serve(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Internal>() {
                2
            } else {
                1
            }
        }
    }
}

fn load_rules(path: Option<&Path>) -> Result<RuleSet> {
    match path {
        None => Ok(default_rules().clone()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RuleSet::parse(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

fn report_line_errors(loaded: &Loaded) {
    for e in &loaded.errors {
        eprintln!("line {}: {}", e.line, e.message);
    }
}

fn write_out(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Internal(e.to_string()).into())
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let script =
        fs::read_to_string(&args.script).with_context(|| format!("reading script {}", args.script.display()))?;
    let setup = args.session.setup()?;
    let engine = Engine::new();
    let mut ctx = setup.context();
    let mut failed = 0;
    for line in script_lines(&script) {
        let outcome = engine.run_turn(line, setup.syntax, &mut ctx);
        if matches!(outcome, Outcome::Failed(_)) {
            failed += 1;
        }
        write_out(out, render(&outcome))?;
    }
    if let Some(dir) = &args.export_dot {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for i in 0..ctx.turns.len() {
            let dot = ctx.export_dot(Some(i)).map_err(|e| Internal(e.to_string()))?;
            let path = dir.join(format!("turn_{:03}.dot", i + 1));
            fs::write(&path, dot).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    if failed > 0 {
        eprintln!("{failed} turn(s) failed");
        return Ok(1);
    }
    Ok(0)
}

/// Reads turns from `input` until EOF or `:quit`. Besides turns it knows
/// `:graph` (DOT of the last turn) and `:help`.
pub fn cmd_repl(setup: &Setup, input: impl BufRead, out: &mut dyn Write, interactive: bool) -> Result<i32> {
    let engine = Engine::new();
    let mut ctx = setup.context();
    let mut lines = input.lines();
    loop {
        if interactive {
            let prompt = if ctx.pending.is_some() { "?> " } else { "> " };
            write!(out, "{prompt}").and_then(|_| out.flush()).map_err(|e| Internal(e.to_string()))?;
        }
        let Some(line) = lines.next() else { break };
        let line = line.context("reading input")?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            ":quit" | ":q" => break,
            ":help" => write_out(out, "enter an annotation, or :graph to show the last turn's graph, :quit to leave")?,
            ":graph" => match ctx.turns.len() {
                0 => write_out(out, "no turns yet")?,
                n => {
                    let dot = ctx.export_dot(Some(n - 1)).map_err(|e| Internal(e.to_string()))?;
                    write!(out, "{dot}").map_err(|e| Internal(e.to_string()))?;
                }
            },
            cmd if cmd.starts_with(':') => write_out(out, format!("unknown command {cmd} (try :help)"))?,
            text => {
                let outcome = engine.run_turn(text, setup.syntax, &mut ctx);
                write_out(out, render(&outcome))?;
            }
        }
    }
    Ok(0)
}

pub fn cmd_simplify(args: &SimplifyArgs, out: &mut dyn Write) -> Result<i32> {
    let rules = load_rules(args.rules.as_deref())?;
    let loaded = load_jsonl(&args.input)?;
    report_line_errors(&loaded);
    if !loaded.errors.is_empty() && !args.lenient {
        bail!("{} malformed line(s) in {} (use --lenient to skip them)", loaded.errors.len(), args.input.display());
    }
    let data = simplify_dataset(&loaded.records, &rules);
    for e in &data.errors {
        eprintln!("{} turn {}: {}", e.dialogue_id, e.turn, e.message);
    }
    if !data.errors.is_empty() && !args.lenient {
        bail!("{} record(s) failed to simplify (use --lenient to keep them unchanged)", data.errors.len());
    }
    if args.explain {
        explain(&loaded.records, &rules, out)?;
    }
    fs::write(&args.output, to_jsonl(&data.records)).with_context(|| format!("writing {}", args.output.display()))?;
    write_out(
        out,
        format!(
            "simplified {} of {} dialogues into {}",
            data.records.len() - data.errors.len(),
            data.records.len(),
            args.output.display()
        ),
    )?;
    Ok(0)
}

fn explain(records: &[DialogueRecord], rules: &RuleSet, out: &mut dyn Write) -> Result<()> {
    for r in records {
        for (i, t) in r.turns.iter().enumerate() {
            let Ok(s) =
                t.parsed().map_err(|e| e.to_string()).and_then(|e| simplify_with(rules, &e).map_err(|e| e.to_string()))
            else {
                continue;
            };
            write_out(out, format!("{} turn {} ({} passes)", r.dialogue_id, i, s.passes))?;
            for step in &s.trace {
                let at = if step.path.is_empty() { "." } else { step.path.as_str() };
                write_out(out, format!("  {} at {}: {} => {}", step.rule, at, step.before, step.after))?;
            }
        }
    }
    Ok(())
}

pub fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> Result<i32> {
    let loaded = load_jsonl(&args.input)?;
    report_line_errors(&loaded);
    let mut records = loaded.records;
    // a raw dataset is simplified on the fly
    if records.iter().flat_map(|r| &r.turns).any(|t| t.annotation_simplified.is_none()) {
        let rules = load_rules(args.rules.as_deref())?;
        let missing: Vec<DialogueRecord> =
            records.iter().filter(|r| r.turns.iter().any(|t| t.annotation_simplified.is_none())).cloned().collect();
        let data = simplify_dataset(&missing, &rules);
        for e in &data.errors {
            eprintln!("{} turn {}: {}", e.dialogue_id, e.turn, e.message);
        }
        let mut done = data.records.into_iter();
        for r in records.iter_mut() {
            if r.turns.iter().any(|t| t.annotation_simplified.is_none()) {
                *r = done.next().expect("one simplified record per input");
            }
        }
    }
    let stats = length_stats(&records)?;
    match args.format {
        Format::Text => {
            write!(out, "{stats}").map_err(|e| Internal(e.to_string()))?;
            let verdict = if stats.simplified_shorter() { "yes" } else { "no" };
            write_out(out, format!("simplified shorter at every quantile: {verdict}"))?;
        }
        Format::Json => {
            let mut v = serde_json::to_value(stats).map_err(|e| Internal(e.to_string()))?;
            v["simplified_shorter"] = stats.simplified_shorter().into();
            write_out(out, v)?;
        }
    }
    Ok(0)
}

pub fn cmd_equivalence(args: &EquivalenceArgs, out: &mut dyn Write) -> Result<i32> {
    let loaded = match &args.dataset {
        Some(p) => load_jsonl(p)?,
        None => parse_jsonl(BUNDLED_CORPUS),
    };
    report_line_errors(&loaded);
    if loaded.records.is_empty() {
        bail!("dataset has no dialogues");
    }
    let store = match &args.events {
        Some(p) => EventStore::load(p).with_context(|| format!("loading events from {}", p.display()))?,
        None => EventStore::from_json(BUNDLED_CALENDAR).map_err(|e| Internal(e.to_string()))?,
    };
    let clock = Clock::parse(&args.now).map_err(|e| anyhow::anyhow!("bad --now value '{}': {e}", args.now))?;
    let rules = load_rules(args.rules.as_deref())?;
    let report = equivalence_harness(&loaded.records, &Fixtures { clock, store }, &rules, &Engine::new());
    match args.format {
        Format::Text => {
            for row in report.failures() {
                write_out(out, format!("FAIL {}: {}", row.dialogue_id, row.detail.as_deref().unwrap_or("")))?;
            }
            write_out(out, format!("{}/{} dialogues equivalent", report.passed(), report.rows.len()))?;
        }
        Format::Json => write_out(out, serde_json::to_string(&report).map_err(|e| Internal(e.to_string()))?)?,
    }
    Ok(if report.all_pass() { 0 } else { 1 })
}

pub fn cmd_serve(args: &ServeArgs) -> Result<i32> {
    let setup = args.session.setup()?;
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("bad listen address {}:{}", args.host, args.port))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Internal(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        let app = server::router(ServerConfig { setup, wait_when_busy: args.wait_when_busy });
        axum::serve(listener, app).await.map_err(|e| Internal(e.to_string()))?;
        Ok(0)
    })
}
