//! Graph construction, evaluation, and the dialogue operations `refer`,
//! `revise` and exception resumption.

mod registry;

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

pub use registry::{CheckFn, DuplicateFunction, ExecFn, FunctionDef, Invocation, Param, Raise, Registry, ANY};

use crate::calendar::{self, CalendarError};
use crate::expr::{self, unescape, ExprError, LitKind, Literal, SurfaceExpr, Syntax};
use crate::graph::{
    constraint_func, is_constraint_func, match_constraint, ConstraintSpec, ExceptionKind, ExceptionRecord,
    GraphContext, NodeId, PendingState, Turn, TurnOutcome, Value,
};

/// Maximum number of coercion wrappers inserted for one argument.
const MAX_COERCION_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error("{func} takes at most {allowed} positional argument(s), got {got}")]
    Arity { func: String, got: usize, allowed: usize },
    #[error("{func} has no parameter '{param}'")]
    UnknownParam { func: String, param: String },
    #[error("{func}: parameter '{param}' is given twice")]
    DuplicateArg { func: String, param: String },
    #[error("{func}: parameter '{param}' expects {expected}, got {got}")]
    TypeError { func: String, param: String, expected: String, got: String },
    #[error("invalid literal {0}")]
    InvalidLiteral(String),
    #[error("unbound variable '{0}'")]
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{func}: parameter '{param}' expects {expected}, got {got}")]
    TypeError { func: String, param: String, expected: String, got: String },
    #[error("no match for {0}")]
    NoMatch(String),
    #[error("unknown function '{0}'")]
    UnknownFunction(String),
    #[error(transparent)]
    Calendar(#[from] CalendarError),
    #[error("conflicting constraints: {0}")]
    ConflictingConstraint(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Parse(#[from] ExprError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("expansion failed: {0}")]
    Rewrite(String),
    #[error("there is no pending question to answer")]
    NoPending,
    #[error("answer should be {expected}, got {got}")]
    WrongAnswerType { expected: String, got: String },
}

impl EngineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Parse(ExprError::Syntax { .. }) => "syntax_error",
            EngineError::Parse(ExprError::UnbalancedParens { .. }) => "unbalanced_parens",
            EngineError::Parse(ExprError::UnboundVariable { .. }) => "unbound_variable",
            EngineError::Build(BuildError::UnknownFunction(_)) => "unknown_function",
            EngineError::Build(BuildError::Arity { .. }) => "arity_error",
            EngineError::Build(BuildError::UnknownParam { .. } | BuildError::DuplicateArg { .. }) => "bad_argument",
            EngineError::Build(BuildError::TypeError { .. }) | EngineError::Eval(EvalError::TypeError { .. }) => {
                "type_error"
            }
            EngineError::Build(BuildError::InvalidLiteral(_)) => "invalid_literal",
            EngineError::Build(BuildError::Unbound(_)) => "unbound_variable",
            EngineError::Eval(EvalError::NoMatch(_)) => "no_match",
            EngineError::Eval(EvalError::UnknownFunction(_)) => "unknown_function",
            EngineError::Eval(EvalError::Calendar(c)) => match c {
                CalendarError::EmptySpec => "empty_spec",
                CalendarError::InvalidTime(_) => "invalid_time",
                CalendarError::InvalidUpdate(_) => "invalid_update",
                CalendarError::EventVanished(_) => "event_vanished",
                CalendarError::EventNotFound(_) => "event_not_found",
                CalendarError::DuplicateId(_) | CalendarError::Fixture(_) => "fixture_error",
                CalendarError::UnsupportedField(_) => "unsupported_field",
            },
            EngineError::Eval(EvalError::ConflictingConstraint(_)) => "conflicting_constraint",
            EngineError::Eval(EvalError::InvalidArgument(_)) => "invalid_argument",
            EngineError::Eval(EvalError::Internal(_)) => "internal_error",
            EngineError::Rewrite(_) => "rewrite_error",
            EngineError::NoPending => "no_pending",
            EngineError::WrongAnswerType { .. } => "wrong_answer_type",
        }
    }
}

/// Result of running a turn or resuming one.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success { result: NodeId, message: String },
    Pending(ExceptionRecord),
    Failed(EngineError),
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }

    pub fn to_turn_outcome(&self) -> TurnOutcome {
        match self {
            Outcome::Success { result, message } => TurnOutcome::Success { message: message.clone(), result: *result },
            Outcome::Pending(e) => TurnOutcome::Pending { exception: e.clone() },
            Outcome::Failed(e) => TurnOutcome::Failed { code: e.code().to_string(), error: e.to_string() },
        }
    }
}

pub struct Engine {
    registry: Registry,
}

impl Default for Engine {
    fn default() -> Self {
        Self::new()
    }
}

type Env = Vec<(String, (NodeId, String))>;

impl Engine {
    /// Engine with the framework functions and the calendar library.
    pub fn new() -> Self {
        let mut registry = Registry::default();
        crate::functions::register_core(&mut registry).expect("core functions are distinct");
        calendar::register_calendar(&mut registry).expect("calendar functions are distinct");
        Engine { registry }
    }

    pub fn with_registry(registry: Registry) -> Self {
        Engine { registry }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    // ---- static types -------------------------------------------------

    /// Build-time type of an expression; `Any` when unknown.
    pub fn static_type(&self, expr: &SurfaceExpr) -> String {
        self.static_type_in(expr, &HashMap::new())
    }

    fn static_type_in(&self, expr: &SurfaceExpr, env: &HashMap<String, String>) -> String {
        match expr {
            SurfaceExpr::Literal(l) => l.kind.type_name().to_string(),
            SurfaceExpr::VarRef(v) => env.get(v).cloned().unwrap_or_else(|| ANY.to_string()),
            SurfaceExpr::Constraint { type_name, type_param, .. } => constraint_type(type_name, type_param.as_deref()),
            SurfaceExpr::Call { func, .. } => {
                self.registry.get(func).map(|d| d.out_type.clone()).unwrap_or_else(|| ANY.to_string())
            }
            SurfaceExpr::AssignSeq { bindings, body } => {
                let mut env = env.clone();
                for (name, value) in bindings {
                    let ty = self.static_type_in(value, &env);
                    env.insert(name.clone(), ty);
                }
                self.static_type_in(body, &env)
            }
        }
    }

    /// Wrapper functions needed to pass a `got` value where `expected` is
    /// wanted, or `None` if impossible.
    fn coercion_path(&self, def: Option<&FunctionDef>, expected: &str, got: &str) -> Option<Vec<String>> {
        let mut path = Vec::new();
        let mut ty = got.to_string();
        loop {
            if expected == ANY || ty == ANY || ty == expected {
                return Some(path);
            }
            if path.len() == MAX_COERCION_DEPTH {
                return None;
            }
            let via = def?.coercion_for(&ty)?;
            ty = self.registry.get(via)?.out_type.clone();
            path.push(via.to_string());
        }
    }

    // ---- graph construction -------------------------------------------

    /// Builds the graph of `expr` in the current turn and returns its root.
    /// Nodes are numbered in pre-order.
    pub fn build_graph(&self, expr: &SurfaceExpr, ctx: &mut GraphContext) -> Result<NodeId, BuildError> {
        let mut env = Env::new();
        self.build(expr, ctx, &mut env, false).map(|(id, _)| id)
    }

    fn build(
        &self,
        expr: &SurfaceExpr,
        ctx: &mut GraphContext,
        env: &mut Env,
        detached: bool,
    ) -> Result<(NodeId, String), BuildError> {
        match expr {
            SurfaceExpr::Literal(lit) => {
                let v = literal_value(lit)?;
                Ok((ctx.add_value_node(v, detached), lit.kind.type_name().to_string()))
            }
            SurfaceExpr::VarRef(name) => env
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, b)| b.clone())
                .ok_or_else(|| BuildError::Unbound(name.clone())),
            SurfaceExpr::AssignSeq { bindings, body } => {
                let mark = env.len();
                for (name, value) in bindings {
                    let built = self.build(value, ctx, env, detached)?;
                    env.push((name.clone(), built));
                }
                let out = self.build(body, ctx, env, detached);
                env.truncate(mark);
                out
            }
            SurfaceExpr::Constraint { type_name, type_param, named } => {
                let id = ctx.alloc(&constraint_func(type_name, type_param.as_deref()), true);
                for (field, value) in named {
                    let (vid, _) = self.build(value, ctx, env, true)?;
                    ctx.node_mut(id).inputs.insert(field.clone(), vid);
                }
                Ok((id, constraint_type(type_name, type_param.as_deref())))
            }
            SurfaceExpr::Call { func, positional, named } => {
                let def = self.registry.get(func).ok_or_else(|| BuildError::UnknownFunction(func.clone()))?;
                if def.literal_ctor && named.is_empty() && positional.len() == 1 {
                    if let SurfaceExpr::Literal(lit) = &positional[0] {
                        if lit.kind.type_name() == def.out_type {
                            let v = literal_value(lit)?;
                            return Ok((ctx.add_value_node(v, detached), def.out_type.clone()));
                        }
                    }
                }
                if positional.len() > def.params.len() {
                    return Err(BuildError::Arity {
                        func: func.clone(),
                        got: positional.len(),
                        allowed: def.params.len(),
                    });
                }
                let mut args: Vec<(&crate::engine::Param, &SurfaceExpr)> = Vec::new();
                for (param, arg) in def.params.iter().zip(positional) {
                    args.push((param, arg));
                }
                for (key, arg) in named {
                    let param = def
                        .find_param(key)
                        .ok_or_else(|| BuildError::UnknownParam { func: func.clone(), param: key.clone() })?;
                    if args.iter().any(|(p, _)| p.name == *key) {
                        return Err(BuildError::DuplicateArg { func: func.clone(), param: key.clone() });
                    }
                    args.push((param, arg));
                }
                let id = ctx.alloc(func, detached);
                for (param, arg) in args {
                    let (aid, aty) = self.build(arg, ctx, env, detached)?;
                    let aid = self.coerce(ctx, def, param, aid, &aty, detached)?;
                    ctx.node_mut(id).inputs.insert(param.name.clone(), aid);
                }
                Ok((id, def.out_type.clone()))
            }
        }
    }

    fn coerce(
        &self,
        ctx: &mut GraphContext,
        def: &FunctionDef,
        param: &Param,
        arg: NodeId,
        got: &str,
        detached: bool,
    ) -> Result<NodeId, BuildError> {
        let path = self.coercion_path(Some(def), &param.ty, got).ok_or_else(|| BuildError::TypeError {
            func: def.name.clone(),
            param: param.name.clone(),
            expected: param.ty.clone(),
            got: got.to_string(),
        })?;
        let mut id = arg;
        for via in path {
            let wdef = self.registry.get(&via).expect("coercion target is registered");
            let wid = ctx.alloc(&via, detached);
            ctx.node_mut(wid).inputs.insert(wdef.params[0].name.clone(), id);
            id = wid;
        }
        Ok(id)
    }

    // ---- evaluation ---------------------------------------------------

    /// Evaluates `root` (post-order). Exceptions leave the context pending.
    pub fn evaluate(&self, root: NodeId, ctx: &mut GraphContext) -> Outcome {
        match self.eval_node(ctx, root) {
            Ok(_) => Outcome::Success { result: ctx.resolve(root), message: self.message_for(ctx, root) },
            Err(Raise::Exception(e)) => {
                ctx.pending = Some(PendingState { exception: e.clone(), turn: ctx.building_turn, root });
                Outcome::Pending(e)
            }
            Err(Raise::Error(e)) => Outcome::Failed(e.into()),
        }
    }

    pub(crate) fn eval_node(&self, ctx: &mut GraphContext, id: NodeId) -> Result<NodeId, Raise> {
        let node = ctx.node(id);
        if node.evaluated {
            return Ok(node.result.unwrap_or(id));
        }
        let inputs: Vec<(String, NodeId)> = node.inputs.iter().map(|(k, v)| (k.clone(), *v)).collect();
        let func = node.func.clone();
        let is_leaf = node.value.is_some() && inputs.is_empty();
        if is_leaf || is_constraint_func(&func) {
            for (_, input) in &inputs {
                self.eval_node(ctx, *input)?;
            }
            let n = ctx.node_mut(id);
            n.evaluated = true;
            n.result = Some(id);
            return Ok(id);
        }
        let def = self.registry.get(&func).ok_or_else(|| EvalError::UnknownFunction(func.clone()))?;
        for (_, input) in &inputs {
            self.eval_node(ctx, *input)?;
        }
        if let Some(p) = def.params.iter().find(|p| p.required && !inputs.iter().any(|(k, _)| *k == p.name)) {
            return Err(Raise::Exception(ExceptionRecord {
                kind: ExceptionKind::MissingInput,
                node: id,
                param: Some(p.name.clone()),
                prompt: format!("{} needs a value for '{}' ({})", func, p.name, p.ty),
                expected_type: p.ty.clone(),
                candidates: Vec::new(),
            }));
        }
        for (name, input) in &inputs {
            if let Some(p) = def.find_param(name).filter(|p| p.ty != ANY) {
                let got = ctx.type_of(*input);
                if got != p.ty {
                    return Err(EvalError::TypeError {
                        func: func.clone(),
                        param: name.clone(),
                        expected: p.ty.clone(),
                        got,
                    }
                    .into());
                }
            }
        }
        let mut inv = Invocation { engine: self, ctx, node: id };
        if let Some(check) = def.check {
            check(&mut inv)?;
        }
        let result = match def.exec {
            Some(exec) => exec(&mut inv)?,
            None => id,
        };
        let n = ctx.node_mut(id);
        n.result = Some(result);
        n.evaluated = true;
        Ok(result)
    }

    // ---- rendering ----------------------------------------------------

    /// Message for a node: the nearest message attached along its result
    /// chain, otherwise a rendering of its resolved value.
    pub fn message_for(&self, ctx: &GraphContext, mut id: NodeId) -> String {
        loop {
            if let Some(m) = ctx.messages.get(&id) {
                return m.clone();
            }
            match ctx.node(id).result {
                Some(r) if r != id => id = r,
                _ => return self.render(ctx, id),
            }
        }
    }

    pub fn render(&self, ctx: &GraphContext, id: NodeId) -> String {
        let r = ctx.resolve(id);
        let n = ctx.node(r);
        if let (Some(v), true) = (&n.value, n.inputs.is_empty()) {
            return v.to_string();
        }
        if let Some(spec) = ctx.constraint_spec(r) {
            return spec.to_string();
        }
        match n.func.as_str() {
            "Event" => match calendar::read_event(ctx, r) {
                Some(e) => e.summary(),
                None => "Event(?)".into(),
            },
            "Set" if n.inputs.is_empty() => "no results".into(),
            "Set" => n.inputs.values().map(|v| self.render(ctx, *v)).collect::<Vec<_>>().join("; "),
            "EventSearchResult" => match n.inputs.get("results") {
                Some(set) => self.render(ctx, *set),
                None => "no results".into(),
            },
            _ if !n.evaluated => format!("{} (not evaluated)", n.label()),
            _ => {
                let fields: Vec<String> =
                    n.inputs.iter().map(|(k, v)| format!("{k}={}", self.render(ctx, *v))).collect();
                format!("{}({})", n.func, fields.join(", "))
            }
        }
    }

    // ---- refer / revise -----------------------------------------------

    /// Most salient node matching `spec`: newest turn first, then highest
    /// node id; falls back to the event store for `Event` constraints.
    pub fn refer(&self, spec: &ConstraintSpec, ctx: &mut GraphContext) -> Result<NodeId, EvalError> {
        let current = ctx.building_turn;
        let best = ctx
            .nodes()
            .iter()
            .filter(|n| n.turn <= current && match_constraint(ctx, n.id, spec))
            .max_by_key(|n| (n.turn, n.id))
            .map(|n| n.id);
        if let Some(id) = best {
            return Ok(id);
        }
        if spec.target_type() == "Event" {
            let query = calendar::EventQuery::from_spec(spec, &ctx.clock)?;
            if let Some(event) = ctx.store.find(&query).pop() {
                return Ok(calendar::event_node(ctx, &event));
            }
        }
        Err(EvalError::NoMatch(spec.to_string()))
    }

    /// The node a turn's value is computed by: below `Yield`, and through
    /// the graph produced by `revise`.
    pub fn computation_root(&self, ctx: &GraphContext, mut id: NodeId) -> NodeId {
        loop {
            let n = ctx.node(id);
            let next = match n.func.as_str() {
                "Yield" => n.inputs.get("output"),
                "revise" => n.inputs.get("graph"),
                _ => None,
            };
            match next {
                Some(&next) => id = next,
                None => return id,
            }
        }
    }

    /// Finds the most recent earlier turn whose graph contains a node
    /// matching `old`, duplicates the path from that turn's computation root
    /// down to the match with `replacement` substituted, and returns the
    /// (unevaluated) duplicate root. Everything off the path is shared.
    pub fn revise_graph(
        &self,
        ctx: &mut GraphContext,
        old: &ConstraintSpec,
        replacement: NodeId,
    ) -> Result<NodeId, EvalError> {
        let current = ctx.building_turn;
        let mut found = None;
        for t in (0..current.min(ctx.turns.len())).rev() {
            let Some(root) = ctx.turns[t].root else { continue };
            let comp = self.computation_root(ctx, root);
            let hit = input_closure(ctx, comp).into_iter().filter(|&id| match_constraint(ctx, id, old)).max();
            if let Some(hit) = hit {
                found = Some((comp, hit));
                break;
            }
        }
        let (comp, target) = found.ok_or_else(|| EvalError::NoMatch(old.to_string()))?;
        let mut on_path: HashMap<NodeId, bool> = HashMap::new();
        fn contains(ctx: &GraphContext, id: NodeId, target: NodeId, memo: &mut HashMap<NodeId, bool>) -> bool {
            if id == target {
                return true;
            }
            if let Some(&m) = memo.get(&id) {
                return m;
            }
            let n = ctx.node(id);
            let hit = !n.is_constraint()
                && n.inputs.values().copied().collect::<Vec<_>>().into_iter().any(|i| contains(ctx, i, target, memo));
            memo.insert(id, hit);
            hit
        }
        contains(ctx, comp, target, &mut on_path);
        if comp == target {
            return Ok(replacement);
        }
        let mut copies: HashMap<NodeId, NodeId> = HashMap::new();
        fn duplicate(
            ctx: &mut GraphContext,
            id: NodeId,
            target: NodeId,
            replacement: NodeId,
            on_path: &HashMap<NodeId, bool>,
            copies: &mut HashMap<NodeId, NodeId>,
        ) -> NodeId {
            if id == target {
                return replacement;
            }
            if !on_path.get(&id).copied().unwrap_or(false) {
                return id;
            }
            if let Some(&c) = copies.get(&id) {
                return c;
            }
            let inputs: Vec<(String, NodeId)> = ctx.node(id).inputs.iter().map(|(k, v)| (k.clone(), *v)).collect();
            let mapped: Vec<(String, NodeId)> =
                inputs.into_iter().map(|(k, v)| (k, duplicate(ctx, v, target, replacement, on_path, copies))).collect();
            let func = ctx.node(id).func.clone();
            let copy = ctx.alloc(&func, false);
            ctx.node_mut(copy).inputs = mapped.into_iter().collect();
            copies.insert(id, copy);
            copy
        }
        Ok(duplicate(ctx, comp, target, replacement, &on_path, &mut copies))
    }

    /// Runs `revise` as its own turn: builds `new`, derives a graph from
    /// the most recent turn containing a match for `old`, evaluates it.
    pub fn revise(&self, old: &ConstraintSpec, new: &SurfaceExpr, ctx: &mut GraphContext) -> Outcome {
        ctx.pending = None;
        ctx.building_turn = ctx.turns.len();
        let (root, outcome) = match self.build_graph(new, ctx) {
            Err(e) => (None, Outcome::Failed(e.into())),
            Ok(new_id) => match self.revise_graph(ctx, old, new_id) {
                Err(e) => (None, Outcome::Failed(e.into())),
                Ok(root) => (Some(root), self.evaluate(root, ctx)),
            },
        };
        finish_turn(ctx, root, None, &outcome);
        outcome
    }

    // ---- turns --------------------------------------------------------

    /// Answers the pending exception with `answer` and resumes evaluation
    /// of the suspended turn. A wrongly typed answer leaves it pending.
    pub fn resume(&self, answer: &SurfaceExpr, ctx: &mut GraphContext) -> Outcome {
        let Some(pending) = ctx.pending.clone() else {
            return Outcome::Failed(EngineError::NoPending);
        };
        let exc = &pending.exception;
        let (param, expected) = answer_slot(exc);
        let func = ctx.node(exc.node).func.clone();
        let def = self.registry.get(&func);
        let got = self.static_type(answer);
        if self.coercion_path(def, &expected, &got).is_none() {
            return Outcome::Failed(EngineError::WrongAnswerType { expected, got });
        }
        ctx.building_turn = pending.turn;
        let outcome = self.apply_answer(ctx, &pending, def, &param, &expected, answer);
        if let Some(turn) = ctx.turns.get_mut(pending.turn) {
            turn.outcome = outcome.to_turn_outcome();
        }
        ctx.building_turn = ctx.turns.len();
        outcome
    }

    fn apply_answer(
        &self,
        ctx: &mut GraphContext,
        pending: &PendingState,
        def: Option<&FunctionDef>,
        param: &str,
        expected: &str,
        answer: &SurfaceExpr,
    ) -> Outcome {
        let exc = &pending.exception;
        let (built, got) = match self.build(answer, ctx, &mut Env::new(), false) {
            Ok(b) => b,
            Err(e) => return Outcome::Failed(e.into()),
        };
        let slot = Param { name: param.to_string(), ty: expected.to_string(), required: false };
        let fallback = FunctionDef::new(&ctx.node(exc.node).func.clone(), ANY);
        let id = match self.coerce(ctx, def.unwrap_or(&fallback), &slot, built, &got, false) {
            Ok(id) => id,
            Err(e) => return Outcome::Failed(e.into()),
        };
        if let Err(e) = self.eval_node(ctx, id) {
            return match e {
                Raise::Error(e) => Outcome::Failed(e.into()),
                Raise::Exception(x) => Outcome::Failed(EvalError::InvalidArgument(x.prompt).into()),
            };
        }
        ctx.pending = None;
        if exc.kind == ExceptionKind::Confirmation && ctx.value_of(id) == Some(&Value::Bool(false)) {
            return Outcome::Success { result: ctx.resolve(id), message: "cancelled".into() };
        }
        ctx.node_mut(exc.node).inputs.insert(param.to_string(), id);
        self.evaluate(pending.root, ctx)
    }

    /// True if `expr` should be taken as an answer to the pending exception
    /// rather than as a new request.
    pub fn is_answer(&self, expr: &SurfaceExpr, pending: &PendingState) -> bool {
        match expr {
            SurfaceExpr::Literal(_) => true,
            SurfaceExpr::Call { func, .. } if func == "Confirm" || func == "Decline" => true,
            _ => {
                let (_, expected) = answer_slot(&pending.exception);
                let got = self.static_type(expr);
                got != ANY && got == expected
            }
        }
    }

    /// Parses, expands, builds and evaluates one user turn. While an
    /// exception is pending, an answer-shaped turn resumes it instead.
    pub fn run_turn(&self, text: &str, syntax: Syntax, ctx: &mut GraphContext) -> Outcome {
        let expr = match expr::parse(text, syntax) {
            Ok(e) => e,
            Err(e) => {
                let outcome = Outcome::Failed(e.into());
                if ctx.pending.is_none() {
                    ctx.building_turn = ctx.turns.len();
                    finish_turn(ctx, None, Some(text), &outcome);
                }
                return outcome;
            }
        };
        self.run_expr(&expr, Some(text), ctx)
    }

    pub fn run_expr(&self, expr: &SurfaceExpr, utterance: Option<&str>, ctx: &mut GraphContext) -> Outcome {
        if let Some(pending) = &ctx.pending {
            if self.is_answer(expr, pending) {
                return self.resume(expr, ctx);
            }
        }
        ctx.pending = None;
        ctx.building_turn = ctx.turns.len();
        let (root, outcome) = match crate::rewrite::expand(expr) {
            Err(e) => (None, Outcome::Failed(EngineError::Rewrite(e.to_string()))),
            Ok(expanded) => match self.build_graph(&expanded, ctx) {
                Err(e) => (None, Outcome::Failed(e.into())),
                Ok(root) => (Some(root), self.evaluate(root, ctx)),
            },
        };
        finish_turn(ctx, root, utterance, &outcome);
        outcome
    }
}

fn finish_turn(ctx: &mut GraphContext, root: Option<NodeId>, utterance: Option<&str>, outcome: &Outcome) {
    let index = ctx.turns.len();
    ctx.turns.push(Turn { index, root, utterance: utterance.map(str::to_string), outcome: outcome.to_turn_outcome() });
    ctx.building_turn = ctx.turns.len();
}

fn answer_slot(exc: &ExceptionRecord) -> (String, String) {
    match exc.kind {
        ExceptionKind::MissingInput => (exc.param.clone().unwrap_or_default(), exc.expected_type.clone()),
        ExceptionKind::Confirmation => ("confirm".into(), "Bool".into()),
        ExceptionKind::Disambiguation => ("choice".into(), "Int".into()),
    }
}

fn constraint_type(type_name: &str, type_param: Option<&str>) -> String {
    match type_param {
        Some(p) if type_name == "Constraint" => format!("Constraint[{p}]"),
        Some(p) => format!("Constraint[{type_name}[{p}]]"),
        None => format!("Constraint[{type_name}]"),
    }
}

/// Nodes reachable from `root` through input edges, not entering patterns.
fn input_closure(ctx: &GraphContext, root: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![root];
    while let Some(id) = stack.pop() {
        let n = ctx.node(id);
        if n.is_constraint() || n.detached_constraint || !seen.insert(id) {
            continue;
        }
        stack.extend(n.inputs.values().copied());
    }
    seen
}

pub fn literal_value(lit: &Literal) -> Result<Value, BuildError> {
    let bad = || BuildError::InvalidLiteral(lit.text.clone());
    Ok(match lit.kind {
        LitKind::Int => Value::Int(lit.text.parse().map_err(|_| bad())?),
        LitKind::Float => Value::Float(lit.text.parse().map_err(|_| bad())?),
        LitKind::Str => Value::Str(unescape(&lit.text)),
        LitKind::Bool => Value::Bool(lit.text == "true"),
    })
}
