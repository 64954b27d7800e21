//! Dialogue datasets: JSONL loading, batch simplification, token-length
//! statistics and the execution-equivalence harness.
//!
//! One record per line:
//!
//! ```json
//! {"dialogue_id": "d01", "turns": [{"utterance": "...", "annotation": "(Yield ...)", "syntax": "prefix"}]}
//! ```
//!
//! `simplify_dataset` adds `annotation_simplified` (call syntax) to each turn.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{Clock, EventStore};
use crate::engine::{Engine, Outcome};
use crate::expr::{parse, print_call, tokenize_for_length, ExprError, SurfaceExpr, Syntax};
use crate::graph::{ExceptionKind, GraphContext, ValueTree};
use crate::rewrite::{expand_with, simplify_with, RuleSet};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corpus has no expressions with both original and simplified forms")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub utterance: String,
    pub annotation: String,
    #[serde(default = "default_syntax")]
    pub syntax: Syntax,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_simplified: Option<String>,
}

fn default_syntax() -> Syntax {
    Syntax::Prefix
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub dialogue_id: String,
    pub turns: Vec<TurnRecord>,
}

impl TurnRecord {
    pub fn parsed(&self) -> Result<SurfaceExpr, ExprError> {
        parse(&self.annotation, self.syntax)
    }
}

/// A problem with one line of a JSONL file (1-based line number).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Loaded {
    pub records: Vec<DialogueRecord>,
    pub errors: Vec<LineError>,
}

pub fn load_jsonl(path: &Path) -> Result<Loaded, CorpusError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
    Ok(parse_jsonl(&text))
}

/// Parses JSONL text. Malformed lines are reported and skipped; blank lines
/// are ignored.
pub fn parse_jsonl(text: &str) -> Loaded {
    let mut out = Loaded::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        match serde_json::from_str::<DialogueRecord>(line) {
            Err(e) => out.errors.push(LineError { line: line_no, message: e.to_string() }),
            Ok(r) if r.turns.is_empty() => {
                out.errors.push(LineError { line: line_no, message: format!("{} has no turns", r.dialogue_id) })
            }
            Ok(r) => match r.turns.iter().enumerate().find_map(|(t, turn)| turn.parsed().err().map(|e| (t, e))) {
                Some((t, e)) => {
                    out.errors.push(LineError { line: line_no, message: format!("{} turn {t}: {e}", r.dialogue_id) })
                }
                None => out.records.push(r),
            },
        }
    }
    out
}

pub fn to_jsonl(records: &[DialogueRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
}

// ---- simplification ----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordError {
    pub dialogue_id: String,
    pub turn: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedDataset {
    pub records: Vec<DialogueRecord>,
    pub errors: Vec<RecordError>,
}

/// Adds `annotation_simplified` to every turn. A record with any failing
/// turn is passed through unchanged and reported.
pub fn simplify_dataset(records: &[DialogueRecord], rules: &RuleSet) -> SimplifiedDataset {
    let mut out = SimplifiedDataset { records: Vec::with_capacity(records.len()), errors: Vec::new() };
    for r in records {
        let mut copy = r.clone();
        let mut failed = None;
        for (i, turn) in copy.turns.iter_mut().enumerate() {
            let result = turn
                .parsed()
                .map_err(|e| e.to_string())
                .and_then(|e| simplify_with(rules, &e).map_err(|e| e.to_string()));
            match result {
                Ok(s) => turn.annotation_simplified = Some(print_call(&s.expr)),
                Err(message) => {
                    failed = Some(RecordError { dialogue_id: r.dialogue_id.clone(), turn: i, message });
                    break;
                }
            }
        }
        match failed {
            Some(e) => {
                out.errors.push(e);
                out.records.push(r.clone());
            }
            None => out.records.push(copy),
        }
    }
    out
}

// ---- length statistics -------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LengthReport {
    pub count: usize,
    pub q25: usize,
    pub q50: usize,
    pub q75: usize,
}

impl LengthReport {
    /// Nearest-rank quantiles of `lengths`; `None` when empty.
    pub fn from_lengths(mut lengths: Vec<usize>) -> Option<Self> {
        if lengths.is_empty() {
            return None;
        }
        lengths.sort_unstable();
        let n = lengths.len();
        let rank = |p: usize| lengths[((p * n).div_ceil(100)).max(1) - 1];
        Some(LengthReport { count: n, q25: rank(25), q50: rank(50), q75: rank(75) })
    }

    /// True if every quantile is strictly below `other`'s.
    pub fn strictly_below(&self, other: &LengthReport) -> bool {
        self.q25 < other.q25 && self.q50 < other.q50 && self.q75 < other.q75
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LengthStats {
    pub original: LengthReport,
    pub simplified: LengthReport,
}

impl LengthStats {
    pub fn simplified_shorter(&self) -> bool {
        self.simplified.strictly_below(&self.original)
    }
}

impl fmt::Display for LengthStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>6}  {:>5} {:>5} {:>5}", "annotation", "count", ".25", ".50", ".75")?;
        for (name, r) in [("original", &self.original), ("simplified", &self.simplified)] {
            writeln!(f, "{:<12} {:>6}  {:>5} {:>5} {:>5}", name, r.count, r.q25, r.q50, r.q75)?;
        }
        Ok(())
    }
}

/// Token-length quantiles of original and simplified annotations over all
/// turns that carry both forms.
pub fn length_stats(records: &[DialogueRecord]) -> Result<LengthStats, CorpusError> {
    let mut original = Vec::new();
    let mut simplified = Vec::new();
    for turn in records.iter().flat_map(|r| &r.turns) {
        let Some(s) = &turn.annotation_simplified else { continue };
        let (Ok(a), Ok(b)) = (tokenize_for_length(&turn.annotation), tokenize_for_length(s)) else { continue };
        original.push(a.len());
        simplified.push(b.len());
    }
    match (LengthReport::from_lengths(original), LengthReport::from_lengths(simplified)) {
        (Some(original), Some(simplified)) => Ok(LengthStats { original, simplified }),
        _ => Err(CorpusError::EmptyCorpus),
    }
}

// ---- equivalence -------------------------------------------------------

/// What a turn produced, with node ids abstracted away.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Observed {
    Success { value: ValueTree, message: String },
    Pending { kind: ExceptionKind, prompt: String },
    Failed { code: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceRow {
    pub dialogue_id: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> usize {
        self.rows.iter().filter(|r| r.pass).count()
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &EquivalenceRow> {
        self.rows.iter().filter(|r| !r.pass)
    }
}

/// Fixtures shared by the twin contexts of every comparison.
#[derive(Debug, Clone)]
pub struct Fixtures {
    pub clock: Clock,
    pub store: EventStore,
}

/// Runs each dialogue twice in fresh contexts, once as annotated and once as
/// `expand(simplify(annotation))`, and compares every turn's outcome and the
/// final store. Confirmations are answered with `Confirm()` and
/// disambiguations with `1` so that side effects are compared as well.
pub fn equivalence_harness(
    records: &[DialogueRecord],
    fixtures: &Fixtures,
    rules: &RuleSet,
    engine: &Engine,
) -> EquivalenceReport {
    let rows = records.iter().map(|r| compare_record(r, fixtures, rules, engine)).collect();
    EquivalenceReport { rows }
}

fn compare_record(r: &DialogueRecord, fixtures: &Fixtures, rules: &RuleSet, engine: &Engine) -> EquivalenceRow {
    let fail =
        |detail: String| EquivalenceRow { dialogue_id: r.dialogue_id.clone(), pass: false, detail: Some(detail) };
    let mut left = GraphContext::new(fixtures.clock, fixtures.store.clone());
    let mut right = GraphContext::new(fixtures.clock, fixtures.store.clone());
    for (i, turn) in r.turns.iter().enumerate() {
        let original = match turn.parsed() {
            Ok(e) => e,
            Err(e) => return fail(format!("turn {i}: {e}")),
        };
        let executable = match simplify_with(rules, &original).and_then(|s| expand_with(rules, &s.expr)) {
            Ok(e) => e,
            Err(e) => return fail(format!("turn {i}: {e}")),
        };
        let a = drive(engine, &original, &mut left);
        let b = drive(engine, &executable, &mut right);
        if a != b {
            return fail(format!("turn {i}: original gave {a:?}, rewritten gave {b:?}"));
        }
    }
    if left.store != right.store {
        return fail("final event stores differ".into());
    }
    EquivalenceRow { dialogue_id: r.dialogue_id.clone(), pass: true, detail: None }
}

fn drive(engine: &Engine, expr: &SurfaceExpr, ctx: &mut GraphContext) -> Vec<Observed> {
    let mut seen = vec![observe(engine.run_expr(expr, None, ctx), ctx)];
    for _ in 0..3 {
        let answer = match seen.last() {
            Some(Observed::Pending { kind: ExceptionKind::Confirmation, .. }) => SurfaceExpr::call("Confirm", vec![]),
            Some(Observed::Pending { kind: ExceptionKind::Disambiguation, prompt }) if prompt != "no matching item" => {
                SurfaceExpr::int(1)
            }
            _ => break,
        };
        seen.push(observe(engine.resume(&answer, ctx), ctx));
    }
    seen
}

fn observe(o: Outcome, ctx: &GraphContext) -> Observed {
    match o {
        Outcome::Success { result, message } => Observed::Success { value: ctx.value_tree(result), message },
        Outcome::Pending(e) => Observed::Pending { kind: e.kind, prompt: e.prompt },
        Outcome::Failed(e) => Observed::Failed { code: e.code().to_string() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let r = LengthReport::from_lengths(vec![4, 1, 3, 2]).unwrap();
        assert_eq!((r.q25, r.q50, r.q75), (1, 2, 3));
        let one = LengthReport::from_lengths(vec![7]).unwrap();
        assert_eq!((one.q25, one.q50, one.q75), (7, 7, 7));
        let r = LengthReport::from_lengths((1..=10).collect()).unwrap();
        assert_eq!((r.q25, r.q50, r.q75), (3, 5, 8));
        assert!(LengthReport::from_lengths(vec![]).is_none());
    }

    #[test]
    fn bad_lines_are_reported_not_fatal() {
        let text = concat!(
            r#"{"dialogue_id":"a","turns":[{"utterance":"u","annotation":"(Add 1 2)","syntax":"prefix"}]}"#,
            "\n{oops\n\n",
            r#"{"dialogue_id":"b","turns":[]}"#,
            "\n",
            r#"{"dialogue_id":"c","turns":[{"utterance":"u","annotation":"Add(1,","syntax":"call"}]}"#,
        );
        let loaded = parse_jsonl(text);
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.errors.iter().map(|e| e.line).collect::<Vec<_>>(), [2, 4, 5]);
        assert_eq!(parse_jsonl(""), Loaded::default());
    }

    #[test]
    fn empty_corpus_has_no_stats() {
        assert!(matches!(length_stats(&[]), Err(CorpusError::EmptyCorpus)));
    }
}
