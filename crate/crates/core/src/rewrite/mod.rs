//! Term rewriting between annotation styles.
//!
//! Rules come from a manifest (`rules/rules.txt`) grouped in stages.
//! [`simplify`] runs `normalize` then `restyle`; [`expand`] runs `expand`
//! and is applied to every turn before it is built.

mod pattern;

use std::sync::OnceLock;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

pub use pattern::{instantiate, parse_pattern, Bindings, Bound, Matcher, PatArg, Pattern};

use crate::engine::Engine;
use crate::expr::{print_call, SurfaceExpr};

/// Passes over a term before giving up on reaching a fixpoint.
pub const MAX_PASSES: usize = 100;

const DEFAULT_MANIFEST: &str = include_str!("../../rules/rules.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("rule '{rule}': {message}")]
    Template { rule: String, message: String },
    #[error("no fixpoint after {passes} passes (last rule applied: {rule})")]
    Cycle { rule: String, passes: usize },
    #[error("unknown rule stage '{0}'")]
    UnknownStage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    /// Inline `let` bindings referenced at most once.
    InlineSingleUse,
    /// Wrap the program in `Yield` unless it already is one.
    WrapYield,
}

impl Builtin {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "inline_single_use" => Some(Builtin::InlineSingleUse),
            "wrap_yield" => Some(Builtin::WrapYield),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleBody {
    Template { lhs: Pattern, rhs: Pattern },
    Builtin(Builtin),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    /// Applies only at the program root (or the body of a top-level `let`).
    pub root_only: bool,
    pub body: RuleBody,
}

impl Rule {
    pub fn template(name: &str, lhs: &str, rhs: &str, root_only: bool) -> Result<Self, RewriteError> {
        let err = |m: String| RewriteError::Template { rule: name.to_string(), message: m };
        let lhs = parse_pattern(lhs).map_err(|e| err(format!("left-hand side: {e}")))?;
        let rhs = parse_pattern(rhs).map_err(|e| err(format!("right-hand side: {e}")))?;
        if rhs.has_match_only_syntax() {
            return Err(err("right-hand side may not use '_', '!key' or typed captures".into()));
        }
        let bound = lhs.captures();
        if let Some(missing) = rhs.captures().into_iter().find(|c| !bound.contains(c)) {
            return Err(err(format!("?{missing} is not bound by the left-hand side")));
        }
        Ok(Rule { name: name.to_string(), root_only, body: RuleBody::Template { lhs, rhs } })
    }
}

/// One applied rewrite, for `--explain` output and tests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub rule: String,
    /// Location of the rewritten subterm, e.g. `body/event/0`.
    pub path: String,
    pub before: String,
    pub after: String,
    #[serde(skip)]
    pub before_tree: SurfaceExpr,
    #[serde(skip)]
    pub after_tree: SurfaceExpr,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    stages: IndexMap<String, Vec<Rule>>,
}

impl RuleSet {
    /// Parses a manifest: `[stage]` headers followed by `name: lhs => rhs`,
    /// `name (root): lhs => rhs` or `name: builtin` lines.
    pub fn parse(text: &str) -> Result<Self, RewriteError> {
        let mut set = RuleSet::default();
        let mut stage: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| RewriteError::Manifest { line: i + 1, message };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                set.stages.entry(name.trim().to_string()).or_default();
                stage = Some(name.trim().to_string());
                continue;
            }
            let stage = stage.as_ref().ok_or_else(|| err("rule outside of a [stage]".into()))?;
            let (head, body) = line.split_once(':').ok_or_else(|| err("expected 'name: rule'".into()))?;
            let (name, root_only) = match head.trim().strip_suffix("(root)") {
                Some(n) => (n.trim(), true),
                None => (head.trim(), false),
            };
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(err(format!("invalid rule name '{name}'")));
            }
            let body = body.trim();
            let rule = if body == "builtin" {
                let b = Builtin::from_name(name).ok_or_else(|| err(format!("unknown builtin '{name}'")))?;
                Rule { name: name.to_string(), root_only: true, body: RuleBody::Builtin(b) }
            } else {
                let (lhs, rhs) = body.split_once("=>").ok_or_else(|| err("expected 'lhs => rhs'".into()))?;
                Rule::template(name, lhs.trim(), rhs.trim(), root_only).map_err(|e| err(e.to_string()))?
            };
            set.stages.get_mut(stage).expect("stage exists").push(rule);
        }
        Ok(set)
    }

    pub fn stage(&self, name: &str) -> Option<&[Rule]> {
        self.stages.get(name).map(Vec::as_slice)
    }

    pub fn stage_names(&self) -> impl Iterator<Item = &str> {
        self.stages.keys().map(String::as_str)
    }

    pub fn add_stage(&mut self, name: &str, rules: Vec<Rule>) {
        self.stages.insert(name.to_string(), rules);
    }

    /// Rewrites `expr` with one stage's rules until nothing applies.
    pub fn apply_stage(
        &self,
        stage: &str,
        expr: &SurfaceExpr,
        types: &dyn Fn(&SurfaceExpr) -> String,
        trace: &mut Vec<TraceEntry>,
    ) -> Result<SurfaceExpr, RewriteError> {
        self.apply_stage_counted(stage, expr, types, trace).map(|(e, _)| e)
    }

    /// Like [`RuleSet::apply_stage`], also returning the number of passes.
    pub fn apply_stage_counted(
        &self,
        stage: &str,
        expr: &SurfaceExpr,
        types: &dyn Fn(&SurfaceExpr) -> String,
        trace: &mut Vec<TraceEntry>,
    ) -> Result<(SurfaceExpr, usize), RewriteError> {
        let rules = self.stage(stage).ok_or_else(|| RewriteError::UnknownStage(stage.to_string()))?;
        apply_rules_counted(rules, expr, types, trace)
    }
}

/// Bottom-up passes, at most one rewrite per subterm per pass, repeated to a
/// fixpoint. Fails with [`RewriteError::Cycle`] after [`MAX_PASSES`].
pub fn apply_rules(
    rules: &[Rule],
    expr: &SurfaceExpr,
    types: &dyn Fn(&SurfaceExpr) -> String,
    trace: &mut Vec<TraceEntry>,
) -> Result<SurfaceExpr, RewriteError> {
    apply_rules_counted(rules, expr, types, trace).map(|(e, _)| e)
}

/// [`apply_rules`], also returning how many passes ran (the last one being
/// the pass that changed nothing).
pub fn apply_rules_counted(
    rules: &[Rule],
    expr: &SurfaceExpr,
    types: &dyn Fn(&SurfaceExpr) -> String,
    trace: &mut Vec<TraceEntry>,
) -> Result<(SurfaceExpr, usize), RewriteError> {
    let mut current = expr.clone();
    for n in 1..=MAX_PASSES {
        let before = trace.len();
        let mut pass = Pass { rules, types, trace };
        current = pass.root(current)?;
        if trace.len() == before {
            return Ok((current, n));
        }
    }
    let rule = trace.last().map(|t| t.rule.clone()).unwrap_or_default();
    Err(RewriteError::Cycle { rule, passes: MAX_PASSES })
}

struct Pass<'a> {
    rules: &'a [Rule],
    types: &'a dyn Fn(&SurfaceExpr) -> String,
    trace: &'a mut Vec<TraceEntry>,
}

impl Pass<'_> {
    fn root(&mut self, expr: SurfaceExpr) -> Result<SurfaceExpr, RewriteError> {
        let expr = match expr {
            SurfaceExpr::AssignSeq { bindings, body } => {
                let mut env: Vec<(String, SurfaceExpr)> = Vec::new();
                for (name, value) in bindings {
                    let v = self.walk(value, &env, &format!("let/{name}"))?;
                    env.push((name, v));
                }
                let body = self.walk(*body, &env, "body")?;
                let body = self.at_root(body, &env, "body")?;
                SurfaceExpr::AssignSeq { bindings: env, body: Box::new(body) }
            }
            other => {
                let e = self.walk(other, &[], "")?;
                self.at_root(e, &[], "")?
            }
        };
        self.builtins(expr)
    }

    fn walk(
        &mut self,
        expr: SurfaceExpr,
        env: &[(String, SurfaceExpr)],
        path: &str,
    ) -> Result<SurfaceExpr, RewriteError> {
        let child = |p: &str, k: &dyn std::fmt::Display| if p.is_empty() { k.to_string() } else { format!("{p}/{k}") };
        let expr = match expr {
            SurfaceExpr::Call { func, positional, named } => SurfaceExpr::Call {
                func,
                positional: positional
                    .into_iter()
                    .enumerate()
                    .map(|(i, e)| self.walk(e, env, &child(path, &i)))
                    .collect::<Result<_, _>>()?,
                named: named
                    .into_iter()
                    .map(|(k, e)| {
                        let p = child(path, &k);
                        self.walk(e, env, &p).map(|e| (k, e))
                    })
                    .collect::<Result<_, _>>()?,
            },
            SurfaceExpr::Constraint { type_name, type_param, named } => SurfaceExpr::Constraint {
                type_name,
                type_param,
                named: named
                    .into_iter()
                    .map(|(k, e)| {
                        let p = child(path, &k);
                        self.walk(e, env, &p).map(|e| (k, e))
                    })
                    .collect::<Result<_, _>>()?,
            },
            other => other,
        };
        self.try_rules(expr, env, path, false)
    }

    fn at_root(
        &mut self,
        expr: SurfaceExpr,
        env: &[(String, SurfaceExpr)],
        path: &str,
    ) -> Result<SurfaceExpr, RewriteError> {
        self.try_rules(expr, env, path, true)
    }

    fn try_rules(
        &mut self,
        expr: SurfaceExpr,
        env: &[(String, SurfaceExpr)],
        path: &str,
        root: bool,
    ) -> Result<SurfaceExpr, RewriteError> {
        let matcher = Matcher { env, types: self.types };
        for rule in self.rules {
            let RuleBody::Template { lhs, rhs } = &rule.body else { continue };
            if rule.root_only != root {
                continue;
            }
            if let Some(b) = matcher.matches(lhs, &expr) {
                let out = instantiate(rhs, &b)
                    .map_err(|message| RewriteError::Template { rule: rule.name.clone(), message })?;
                self.record(&rule.name, path, &expr, &out);
                return Ok(out);
            }
        }
        Ok(expr)
    }

    fn builtins(&mut self, mut expr: SurfaceExpr) -> Result<SurfaceExpr, RewriteError> {
        for rule in self.rules {
            let RuleBody::Builtin(b) = &rule.body else { continue };
            let out = match b {
                Builtin::InlineSingleUse => inline_single_use(&expr),
                Builtin::WrapYield => wrap_yield(&expr),
            };
            if out != expr {
                self.record(&rule.name, "", &expr, &out);
                expr = out;
            }
        }
        Ok(expr)
    }

    fn record(&mut self, rule: &str, path: &str, before: &SurfaceExpr, after: &SurfaceExpr) {
        self.trace.push(TraceEntry {
            rule: rule.to_string(),
            path: path.to_string(),
            before: print_call(before),
            after: print_call(after),
            before_tree: before.clone(),
            after_tree: after.clone(),
        });
    }
}

/// Substitutes `let` bindings that are referenced once, drops unreferenced
/// ones, and removes the `let` when no bindings remain.
pub fn inline_single_use(expr: &SurfaceExpr) -> SurfaceExpr {
    let SurfaceExpr::AssignSeq { bindings, body } = expr else { return expr.clone() };
    let mut bindings = bindings.clone();
    let mut body = (**body).clone();
    loop {
        let uses = |i: usize, bindings: &[(String, SurfaceExpr)], body: &SurfaceExpr| {
            let name = &bindings[i].0;
            bindings[i + 1..].iter().map(|(_, e)| e.count_refs(name)).sum::<usize>() + body.count_refs(name)
        };
        let Some(i) = (0..bindings.len()).find(|&i| uses(i, &bindings, &body) <= 1) else { break };
        let (name, value) = bindings.remove(i);
        for (_, e) in bindings[i..].iter_mut() {
            *e = e.substitute(&name, &value);
        }
        body = body.substitute(&name, &value);
    }
    if bindings.is_empty() {
        body
    } else {
        SurfaceExpr::AssignSeq { bindings, body: Box::new(body) }
    }
}

pub fn wrap_yield(expr: &SurfaceExpr) -> SurfaceExpr {
    match expr {
        SurfaceExpr::AssignSeq { bindings, body } => {
            SurfaceExpr::AssignSeq { bindings: bindings.clone(), body: Box::new(wrap_yield(body)) }
        }
        e if e.head() == Some("Yield") => e.clone(),
        e => SurfaceExpr::call("Yield", vec![e.clone()]),
    }
}

pub fn default_rules() -> &'static RuleSet {
    static RULES: OnceLock<RuleSet> = OnceLock::new();
    RULES.get_or_init(|| RuleSet::parse(DEFAULT_MANIFEST).expect("bundled rule manifest is valid"))
}

fn default_engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(Engine::new)
}

fn static_types(e: &SurfaceExpr) -> String {
    default_engine().static_type(e)
}

/// Output of a simplification with its rewrite log.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplified {
    pub expr: SurfaceExpr,
    pub trace: Vec<TraceEntry>,
    /// Passes run over both stages.
    pub passes: usize,
}

/// Rewrites an original-style annotation into the simplified style.
pub fn simplify(expr: &SurfaceExpr) -> Result<SurfaceExpr, RewriteError> {
    simplify_with(default_rules(), expr).map(|s| s.expr)
}

pub fn simplify_traced(expr: &SurfaceExpr) -> Result<(SurfaceExpr, Vec<TraceEntry>), RewriteError> {
    simplify_with(default_rules(), expr).map(|s| (s.expr, s.trace))
}

/// Runs the `normalize` then `restyle` stages of `rules`.
pub fn simplify_with(rules: &RuleSet, expr: &SurfaceExpr) -> Result<Simplified, RewriteError> {
    let mut trace = Vec::new();
    let (normalized, p1) = rules.apply_stage_counted("normalize", expr, &static_types, &mut trace)?;
    let (restyled, p2) = rules.apply_stage_counted("restyle", &normalized, &static_types, &mut trace)?;
    Ok(Simplified { expr: restyled, trace, passes: p1 + p2 })
}

/// Rewrites simplified-style calls into their executable original-style
/// pairs and wraps the program in `Yield`.
pub fn expand(expr: &SurfaceExpr) -> Result<SurfaceExpr, RewriteError> {
    expand_with(default_rules(), expr)
}

pub fn expand_with(rules: &RuleSet, expr: &SurfaceExpr) -> Result<SurfaceExpr, RewriteError> {
    rules.apply_stage("expand", expr, &static_types, &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_call, parse_prefix};

    fn any(_: &SurfaceExpr) -> String {
        "Any".into()
    }

    #[test]
    fn bundled_manifest_parses() {
        let rules = default_rules();
        assert_eq!(rules.stage_names().collect::<Vec<_>>(), ["normalize", "restyle", "expand"]);
        assert!(rules.stage("normalize").unwrap().iter().any(|r| r.name == "inline_single_use"));
    }

    #[test]
    fn manifest_errors_name_the_line() {
        let err = RuleSet::parse("[s]\nbad rule").unwrap_err();
        assert!(matches!(err, RewriteError::Manifest { line: 2, .. }));
        assert!(RuleSet::parse("[s]\nr: f(?x) => g(?y)").is_err());
        assert!(RuleSet::parse("[s]\nr: f(?x) => g(_)").is_err());
        assert!(RuleSet::parse("r: f(?x) => g(?x)").is_err());
    }

    #[test]
    fn cycle_is_detected() {
        let rules = vec![
            Rule::template("flip", "f(?x)", "g(?x)", false).unwrap(),
            Rule::template("flop", "g(?x)", "f(?x)", false).unwrap(),
        ];
        let err = apply_rules(&rules, &parse_call("f(1)").unwrap(), &any, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, RewriteError::Cycle { passes: MAX_PASSES, .. }));
    }

    #[test]
    fn root_only_rules_skip_subterms() {
        let rules = vec![Rule::template("strip", "Yield(?x)", "?x", true).unwrap()];
        let out = apply_rules(&rules, &parse_call("f(Yield(1))").unwrap(), &any, &mut Vec::new()).unwrap();
        assert_eq!(out.to_string(), "f(Yield(1))");
        let out = apply_rules(&rules, &parse_call("x=1; Yield(x)").unwrap(), &any, &mut Vec::new()).unwrap();
        assert_eq!(out.to_string(), "x=1; x");
    }

    #[test]
    fn inlining() {
        let e = parse_call("a=f(1); b=g(a); h(b,b)").unwrap();
        assert_eq!(inline_single_use(&e).to_string(), "b=g(f(1)); h(b,b)");
        let e = parse_call("a=f(1); h(2)").unwrap();
        assert_eq!(inline_single_use(&e).to_string(), "h(2)");
    }

    #[test]
    fn trace_records_paths() {
        let rules = vec![Rule::template("one", "f(?x)", "?x", false).unwrap()];
        let mut trace = Vec::new();
        apply_rules(&rules, &parse_call("g(1,k=f(2))").unwrap(), &any, &mut trace).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace[0].path, "k");
        assert_eq!(trace[0].before, "f(2)");
    }

    #[test]
    fn simplifies_delete_example() {
        let original = parse_prefix("(Yield :output (DeleteCommitEventWrapper :event (DeletePreflightEventWrapper :id (:id (singleton (:results (FindEventWrapperWithDefaults :constraint (EventOnDateTime :dateTime (DateAtTimeWithDefaults :date (tomorrow) :time (NumberAM :number 10)) :event (Constraint[Event])))))))))").unwrap();
        assert_eq!(simplify(&original).unwrap().to_string(), "DeleteEvent(starts_at(tomorrow(),NumberAM(10)))");
    }

    #[test]
    fn expand_wraps_and_pairs() {
        let e = parse_call("DeleteEvent(starts_at(tomorrow(),NumberAM(10)))").unwrap();
        assert_eq!(
            expand(&e).unwrap().to_string(),
            "Yield(DeleteCommitEventWrapper(DeletePreflightEventWrapper(starts_at(tomorrow(),NumberAM(10)))))"
        );
        let y = parse_call("Yield(Add(1,2))").unwrap();
        assert_eq!(expand(&y).unwrap(), y);
    }
}
