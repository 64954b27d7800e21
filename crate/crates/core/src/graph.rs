//! Computational-graph data model.
//!
//! Every node of every turn lives in one [`GraphContext`] registry, indexed
//! by a dialogue-global creation counter. A turn graph is the set of nodes
//! reachable from the turn's root; turns created by `revise` share nodes
//! with the turns they were derived from.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{Clock, EventStore};

pub const SNAPSHOT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Payload of a leaf value node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Date(NaiveDate),
    Time(NaiveTime),
    DateTime(NaiveDateTime),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "Int",
            Value::Float(_) => "Float",
            Value::Str(_) => "Str",
            Value::Bool(_) => "Bool",
            Value::Date(_) => "Date",
            Value::Time(_) => "Time",
            Value::DateTime(_) => "DateTime",
        }
    }

    /// Field-constraint comparison: strings compare case-insensitively, a
    /// date or time constraint matches any date-time on that date or time.
    pub fn matches(&self, actual: &Value) -> bool {
        match (self, actual) {
            (Value::Str(a), Value::Str(b)) => a.eq_ignore_ascii_case(b),
            (Value::Date(d), Value::DateTime(dt)) => dt.date() == *d,
            (Value::Time(t), Value::DateTime(dt)) => dt.time() == *t,
            (a, b) => a == b,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Str(v) => f.write_str(v),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Value::Time(t) => write!(f, "{}", t.format("%H:%M")),
            Value::DateTime(dt) => write!(f, "{}", dt.format("%Y-%m-%d %H:%M")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub func: String,
    pub inputs: IndexMap<String, NodeId>,
    pub result: Option<NodeId>,
    pub value: Option<Value>,
    pub evaluated: bool,
    pub turn: usize,
    pub detached_constraint: bool,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.inputs.is_empty() && self.value.is_some()
    }

    /// DOT / console label, e.g. `Add_0` or `Int?_10` for a pattern node.
    pub fn label(&self) -> String {
        format!("{}_{}", self.func, self.id)
    }

    /// Pattern nodes are named `T?` or `Constraint[T]`.
    pub fn is_constraint(&self) -> bool {
        is_constraint_func(&self.func)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExceptionKind {
    MissingInput,
    Confirmation,
    Disambiguation,
}

/// A suspended evaluation waiting for the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionRecord {
    pub kind: ExceptionKind,
    pub node: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    pub prompt: String,
    pub expected_type: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingState {
    pub exception: ExceptionRecord,
    pub turn: usize,
    pub root: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TurnOutcome {
    Success { message: String, result: NodeId },
    Pending { exception: ExceptionRecord },
    Failed { code: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub root: Option<NodeId>,
    #[serde(default)]
    pub utterance: Option<String>,
    pub outcome: TurnOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldSpec {
    Value(Value),
    Nested(ConstraintSpec),
    Node(NodeId),
}

/// A match pattern: node type plus optional field values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub type_name: String,
    pub type_param: Option<String>,
    pub fields: Vec<(String, FieldSpec)>,
}

impl ConstraintSpec {
    pub fn of(type_name: &str) -> Self {
        ConstraintSpec { type_name: type_name.to_string(), type_param: None, fields: Vec::new() }
    }

    pub fn with(mut self, field: &str, value: Value) -> Self {
        self.fields.push((field.to_string(), FieldSpec::Value(value)));
        self
    }

    /// The node type this constraint selects (`Event` for `Constraint[Event]`).
    pub fn target_type(&self) -> &str {
        match (&self.type_param, self.type_name.as_str()) {
            (Some(p), "Constraint") => p,
            _ => &self.type_name,
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }
}

impl fmt::Display for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.type_param {
            Some(p) => write!(f, "{}[{}](", self.type_name, p)?,
            None => write!(f, "{}?(", self.type_name)?,
        }
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match v {
                FieldSpec::Value(Value::Str(s)) => write!(f, "{k}={s:?}")?,
                FieldSpec::Value(v) => write!(f, "{k}={v}")?,
                FieldSpec::Nested(n) => write!(f, "{k}={n}")?,
                FieldSpec::Node(id) => write!(f, "{k}=#{id}")?,
            }
        }
        f.write_str(")")
    }
}

/// Structural value of an evaluated node, used to compare executions that
/// produced different node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueTree {
    Leaf(Value),
    Node { func: String, fields: Vec<(String, ValueTree)> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown turn {0}")]
    UnknownTurn(usize),
    #[error("snapshot version '{0}' is not supported")]
    Version(String),
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

/// Whole-dialogue state: node registry, turn history, pending exception,
/// the fixed clock and the event store.
#[derive(Debug, Clone)]
pub struct GraphContext {
    nodes: Vec<Node>,
    pub turns: Vec<Turn>,
    pub pending: Option<PendingState>,
    pub clock: Clock,
    pub store: EventStore,
    /// Messages attached by side-effecting functions (e.g. "deleted ...").
    pub(crate) messages: HashMap<NodeId, String>,
    pub(crate) building_turn: usize,
}

impl Default for GraphContext {
    fn default() -> Self {
        GraphContext::new(Clock::default(), EventStore::default())
    }
}

impl GraphContext {
    pub fn new(clock: Clock, store: EventStore) -> Self {
        GraphContext {
            nodes: Vec::new(),
            turns: Vec::new(),
            pending: None,
            clock,
            store,
            messages: HashMap::new(),
            building_turn: 0,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.turns.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id.0]
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0)
    }

    /// Index of the turn currently being built or evaluated.
    pub fn current_turn(&self) -> usize {
        self.building_turn
    }

    pub(crate) fn alloc(&mut self, func: &str, detached: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            id,
            func: func.to_string(),
            inputs: IndexMap::new(),
            result: None,
            value: None,
            evaluated: false,
            turn: self.building_turn,
            detached_constraint: detached,
        });
        id
    }

    /// Creates an evaluated leaf value node (its result is itself).
    pub fn add_value(&mut self, value: Value) -> NodeId {
        self.add_value_node(value, false)
    }

    pub(crate) fn add_value_node(&mut self, value: Value, detached: bool) -> NodeId {
        let id = self.alloc(value.type_name(), detached);
        let n = self.node_mut(id);
        n.value = Some(value);
        n.evaluated = true;
        n.result = Some(id);
        id
    }

    /// Creates an evaluated structured node (e.g. an `Event` or a `Set`).
    pub fn add_struct(&mut self, func: &str, inputs: IndexMap<String, NodeId>) -> NodeId {
        let id = self.alloc(func, false);
        let n = self.node_mut(id);
        n.inputs = inputs;
        n.evaluated = true;
        n.result = Some(id);
        id
    }

    /// Creates an evaluated constraint (pattern) node.
    pub fn add_constraint(&mut self, func: &str, inputs: IndexMap<String, NodeId>) -> NodeId {
        let id = self.alloc(func, true);
        let n = self.node_mut(id);
        n.inputs = inputs;
        n.evaluated = true;
        n.result = Some(id);
        id
    }

    /// Follows result pointers until reaching a node that is its own result
    /// (or is not evaluated yet).
    pub fn resolve(&self, mut id: NodeId) -> NodeId {
        loop {
            match self.nodes[id.0].result {
                Some(r) if r != id => id = r,
                _ => return id,
            }
        }
    }

    pub fn value_of(&self, id: NodeId) -> Option<&Value> {
        self.nodes[self.resolve(id).0].value.as_ref()
    }

    /// Runtime type of an evaluated (resolved) node.
    pub fn type_of(&self, id: NodeId) -> String {
        let n = &self.nodes[self.resolve(id).0];
        constraint_type_of(n).unwrap_or_else(|| n.func.clone())
    }

    pub fn value_tree(&self, id: NodeId) -> ValueTree {
        let n = &self.nodes[self.resolve(id).0];
        match &n.value {
            Some(v) if n.inputs.is_empty() => ValueTree::Leaf(v.clone()),
            _ => ValueTree::Node {
                func: n.func.clone(),
                fields: n.inputs.iter().map(|(k, v)| (k.clone(), self.value_tree(*v))).collect(),
            },
        }
    }

    /// Reads a constraint node back as a [`ConstraintSpec`].
    pub fn constraint_spec(&self, id: NodeId) -> Option<ConstraintSpec> {
        let n = &self.nodes[self.resolve(id).0];
        if !n.is_constraint() {
            return None;
        }
        let (type_name, type_param) = split_constraint_func(&n.func);
        let fields = n
            .inputs
            .iter()
            .map(|(k, v)| {
                let r = self.resolve(*v);
                let rn = &self.nodes[r.0];
                let spec = if let Some(nested) = self.constraint_spec(r) {
                    FieldSpec::Nested(nested)
                } else if let (Some(val), true) = (&rn.value, rn.inputs.is_empty()) {
                    FieldSpec::Value(val.clone())
                } else {
                    FieldSpec::Node(r)
                };
                (k.clone(), spec)
            })
            .collect();
        Some(ConstraintSpec { type_name, type_param, fields })
    }

    /// All nodes reachable from `root` through input and result edges.
    pub fn reachable(&self, root: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let n = &self.nodes[id.0];
            stack.extend(n.inputs.values().copied());
            if let Some(r) = n.result {
                stack.push(r);
            }
        }
        seen
    }

    /// Lossless JSON snapshot (schema version `v1`).
    pub fn export_json(&self) -> String {
        serde_json::to_string(&self.snapshot()).expect("snapshot serializes")
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            version: SNAPSHOT_VERSION.to_string(),
            nodes: self.nodes.clone(),
            turns: self.turns.clone(),
            pending: self.pending.clone(),
        }
    }

    /// Rebuilds a context from a snapshot; clock and store are supplied by the caller.
    pub fn from_snapshot(snapshot: GraphSnapshot, clock: Clock, store: EventStore) -> Result<Self, GraphError> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(GraphError::Version(snapshot.version));
        }
        for (i, n) in snapshot.nodes.iter().enumerate() {
            if n.id.0 != i {
                return Err(GraphError::Malformed(format!("node at position {i} has id {}", n.id)));
            }
            let dangling = n.inputs.values().chain(n.result.iter()).any(|t| t.0 >= snapshot.nodes.len());
            if dangling {
                return Err(GraphError::Malformed(format!("node {} references a missing node", n.id)));
            }
        }
        let building_turn = snapshot.turns.len();
        Ok(GraphContext {
            nodes: snapshot.nodes,
            turns: snapshot.turns,
            pending: snapshot.pending,
            clock,
            store,
            messages: HashMap::new(),
            building_turn,
        })
    }

    pub fn import_json(text: &str, clock: Clock, store: EventStore) -> Result<Self, GraphError> {
        let snapshot: GraphSnapshot = serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
        Self::from_snapshot(snapshot, clock, store)
    }

    /// Graphviz rendering of the whole context, or of one turn's graph.
    pub fn export_dot(&self, turn: Option<usize>) -> Result<String, GraphError> {
        let selected: Vec<&Node> = match turn {
            None => self.nodes.iter().collect(),
            Some(t) => {
                let root = self.turns.get(t).ok_or(GraphError::UnknownTurn(t))?.root;
                match root {
                    Some(r) => self.reachable(r).into_iter().map(|id| &self.nodes[id.0]).collect(),
                    None => Vec::new(),
                }
            }
        };
        let mut out = String::from("digraph dataflow {\n  rankdir=BT;\n  node [shape=box];\n");
        for n in &selected {
            out.push_str(&format!("  n{} [label=\"{}\"", n.id, dot_escape(&n.label())));
            if let Some(v) = &n.value {
                out.push_str(&format!(", xlabel=\"{}\"", dot_escape(&v.to_string())));
            }
            if n.detached_constraint {
                out.push_str(", style=dotted");
            }
            out.push_str("];\n");
        }
        for n in &selected {
            for (param, input) in &n.inputs {
                out.push_str(&format!("  n{} -> n{} [label=\"{}\"];\n", input, n.id, dot_escape(param)));
            }
        }
        for n in &selected {
            if let Some(r) = n.result.filter(|r| *r != n.id) {
                out.push_str(&format!("  n{} -> n{} [style=dashed, color=blue];\n", n.id, r));
            }
        }
        out.push_str("}\n");
        Ok(out)
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

pub fn is_constraint_func(func: &str) -> bool {
    func.ends_with('?') || func.contains('[')
}

/// Node name of a pattern node: `Int?`, `Constraint[Event]`.
pub fn constraint_func(type_name: &str, type_param: Option<&str>) -> String {
    match type_param {
        Some(p) => format!("{type_name}[{p}]"),
        None => format!("{type_name}?"),
    }
}

pub(crate) fn split_constraint_func(func: &str) -> (String, Option<String>) {
    match func.split_once('[') {
        Some((name, rest)) => (name.to_string(), Some(rest.trim_end_matches(']').to_string())),
        None => (func.trim_end_matches('?').to_string(), None),
    }
}

/// `Constraint[T]` type of a pattern node; `None` for ordinary nodes.
fn constraint_type_of(n: &Node) -> Option<String> {
    if !n.is_constraint() {
        return None;
    }
    let (name, param) = split_constraint_func(&n.func);
    Some(match param {
        Some(p) if name == "Constraint" => format!("Constraint[{p}]"),
        Some(p) => format!("Constraint[{name}[{p}]]"),
        None => format!("Constraint[{name}]"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub version: String,
    pub nodes: Vec<Node>,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingState>,
}

/// True iff `node` is of the constraint's type and every constrained field
/// matches. Unevaluated fields never match.
pub fn match_constraint(ctx: &GraphContext, node: NodeId, spec: &ConstraintSpec) -> bool {
    let n = ctx.node(node);
    if n.detached_constraint || !n.evaluated || n.func != spec.target_type() {
        return false;
    }
    spec.fields.iter().all(|(field, expected)| {
        if field == "value" && n.inputs.is_empty() {
            return match (expected, &n.value) {
                (FieldSpec::Value(e), Some(actual)) => e.matches(actual),
                _ => false,
            };
        }
        let Some(&input) = n.inputs.get(field) else { return false };
        if !ctx.node(input).evaluated {
            return false;
        }
        let target = ctx.resolve(input);
        match expected {
            FieldSpec::Value(e) => ctx.node(target).value.as_ref().is_some_and(|actual| e.matches(actual)),
            FieldSpec::Nested(nested) => match_constraint(ctx, target, nested),
            FieldSpec::Node(id) => ctx.resolve(*id) == target,
        }
    })
}
