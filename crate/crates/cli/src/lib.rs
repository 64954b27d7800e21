//! Command-line tools and the HTTP session API around the dialogue engine.

use std::path::Path;

use anyhow::{Context, Result};
use dataflow_dialogue::calendar::{Clock, EventStore};
use dataflow_dialogue::{GraphContext, Outcome, Syntax};

pub mod commands;
pub mod server;

pub use commands::{execute, Cli, Command};

/// Marks an error as a bug or environment failure rather than bad input.
/// Such errors exit with status 2; everything else exits with 1.
#[derive(Debug)]
pub struct Internal(pub String);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "internal error: {}", self.0)
    }
}

impl std::error::Error for Internal {}

/// Everything a fresh dialogue context needs.
#[derive(Debug, Clone)]
pub struct Setup {
    pub clock: Clock,
    pub store: EventStore,
    pub syntax: Syntax,
}

impl Default for Setup {
    fn default() -> Self {
        Setup { clock: Clock::default(), store: EventStore::default(), syntax: Syntax::Call }
    }
}

impl Setup {
    pub fn new(now: &str, events: Option<&Path>, syntax: Syntax) -> Result<Self> {
        let clock = Clock::parse(now).map_err(|e| anyhow::anyhow!("bad --now value '{now}': {e}"))?;
        let store = match events {
            Some(p) => EventStore::load(p).with_context(|| format!("loading events from {}", p.display()))?,
            None => EventStore::default(),
        };
        Ok(Setup { clock, store, syntax })
    }

    pub fn context(&self) -> GraphContext {
        GraphContext::new(self.clock, self.store.clone())
    }
}

/// The line printed for a turn. Run mode, the REPL and the HTTP API all use
/// this, so the same script gives the same transcript everywhere.
pub fn render(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Success { message, .. } => message.clone(),
        Outcome::Pending(e) => format!("? {}", e.prompt),
        Outcome::Failed(e) => format!("error [{}]: {e}", e.code()),
    }
}

/// Script lines worth running: blank lines and `#` comments are skipped.
pub fn script_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}
