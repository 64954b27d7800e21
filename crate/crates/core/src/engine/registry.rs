use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use indexmap::IndexMap;
use thiserror::Error;

use super::{Engine, EvalError};
use crate::graph::{ConstraintSpec, ExceptionKind, ExceptionRecord, GraphContext, NodeId, Value};

/// Type name that accepts any argument.
pub const ANY: &str = "Any";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: String,
    pub required: bool,
}

/// Either a resumable exception or a hard error raised while evaluating.
#[derive(Debug, Clone, PartialEq)]
pub enum Raise {
    Exception(ExceptionRecord),
    Error(EvalError),
}

impl From<EvalError> for Raise {
    fn from(e: EvalError) -> Self {
        Raise::Error(e)
    }
}

impl From<crate::calendar::CalendarError> for Raise {
    fn from(e: crate::calendar::CalendarError) -> Self {
        Raise::Error(EvalError::Calendar(e))
    }
}

pub type CheckFn = fn(&mut Invocation<'_>) -> Result<(), Raise>;
pub type ExecFn = fn(&mut Invocation<'_>) -> Result<NodeId, Raise>;

#[derive(Clone)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<Param>,
    pub out_type: String,
    pub check: Option<CheckFn>,
    pub exec: Option<ExecFn>,
    /// Argument type -> wrapping function, applied at build time.
    pub coercions: Vec<(String, String)>,
    /// `Int(3)` style constructors collapse to a leaf when given a literal.
    pub literal_ctor: bool,
}

impl std::fmt::Debug for FunctionDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionDef")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("out_type", &self.out_type)
            .finish_non_exhaustive()
    }
}

impl FunctionDef {
    pub fn new(name: &str, out_type: &str) -> Self {
        FunctionDef {
            name: name.to_string(),
            params: Vec::new(),
            out_type: out_type.to_string(),
            check: None,
            exec: None,
            coercions: Vec::new(),
            literal_ctor: false,
        }
    }

    pub fn param(mut self, name: &str, ty: &str) -> Self {
        self.params.push(Param { name: name.into(), ty: ty.into(), required: true });
        self
    }

    pub fn optional(mut self, name: &str, ty: &str) -> Self {
        self.params.push(Param { name: name.into(), ty: ty.into(), required: false });
        self
    }

    pub fn check(mut self, f: CheckFn) -> Self {
        self.check = Some(f);
        self
    }

    pub fn exec(mut self, f: ExecFn) -> Self {
        self.exec = Some(f);
        self
    }

    pub fn coerce(mut self, from: &str, via: &str) -> Self {
        self.coercions.push((from.into(), via.into()));
        self
    }

    pub fn literal_ctor(mut self) -> Self {
        self.literal_ctor = true;
        self
    }

    pub fn find_param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn coercion_for(&self, ty: &str) -> Option<&str> {
        self.coercions.iter().find(|(from, _)| from == ty).map(|(_, via)| via.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("function '{0}' is already registered")]
pub struct DuplicateFunction(pub String);

#[derive(Debug, Clone, Default)]
pub struct Registry {
    defs: BTreeMap<String, FunctionDef>,
}

impl Registry {
    pub fn register(&mut self, def: FunctionDef) -> Result<(), DuplicateFunction> {
        if self.defs.contains_key(&def.name) {
            return Err(DuplicateFunction(def.name));
        }
        self.defs.insert(def.name.clone(), def);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&FunctionDef> {
        self.defs.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.defs.keys().map(String::as_str)
    }
}

/// Handle given to `check` / `exec`: the node being evaluated plus mutable
/// access to the dialogue state.
pub struct Invocation<'a> {
    pub engine: &'a Engine,
    pub ctx: &'a mut GraphContext,
    pub node: NodeId,
}

impl Invocation<'_> {
    pub fn func(&self) -> &str {
        &self.ctx.node(self.node).func
    }

    /// Resolved node bound to `param`, if the input is present.
    pub fn input(&self, param: &str) -> Option<NodeId> {
        self.ctx.node(self.node).inputs.get(param).map(|&i| self.ctx.resolve(i))
    }

    /// Unresolved input node bound to `param`.
    pub fn raw_input(&self, param: &str) -> Option<NodeId> {
        self.ctx.node(self.node).inputs.get(param).copied()
    }

    pub fn required(&self, param: &str) -> Result<NodeId, Raise> {
        self.input(param).ok_or_else(|| EvalError::Internal(format!("{} has no input '{param}'", self.func())).into())
    }

    pub fn value(&self, param: &str) -> Option<&Value> {
        self.input(param).and_then(|i| self.ctx.node(i).value.as_ref())
    }

    fn wrong(&self, param: &str, expected: &str) -> Raise {
        let got = self.input(param).map(|i| self.ctx.type_of(i)).unwrap_or_else(|| "nothing".into());
        EvalError::TypeError { func: self.func().to_string(), param: param.to_string(), expected: expected.into(), got }
            .into()
    }

    pub fn int(&self, param: &str) -> Result<i64, Raise> {
        match self.value(param) {
            Some(Value::Int(v)) => Ok(*v),
            _ => Err(self.wrong(param, "Int")),
        }
    }

    pub fn opt_int(&self, param: &str) -> Result<Option<i64>, Raise> {
        match self.input(param) {
            None => Ok(None),
            Some(_) => self.int(param).map(Some),
        }
    }

    pub fn opt_bool(&self, param: &str) -> Result<Option<bool>, Raise> {
        match (self.input(param), self.value(param)) {
            (None, _) => Ok(None),
            (_, Some(Value::Bool(b))) => Ok(Some(*b)),
            _ => Err(self.wrong(param, "Bool")),
        }
    }

    pub fn string(&self, param: &str) -> Result<String, Raise> {
        match self.value(param) {
            Some(Value::Str(s)) => Ok(s.clone()),
            _ => Err(self.wrong(param, "Str")),
        }
    }

    pub fn date(&self, param: &str) -> Result<NaiveDate, Raise> {
        match self.value(param) {
            Some(Value::Date(d)) => Ok(*d),
            Some(Value::DateTime(dt)) => Ok(dt.date()),
            _ => Err(self.wrong(param, "Date")),
        }
    }

    pub fn time(&self, param: &str) -> Result<NaiveTime, Raise> {
        match self.value(param) {
            Some(Value::Time(t)) => Ok(*t),
            _ => Err(self.wrong(param, "Time")),
        }
    }

    pub fn datetime(&self, param: &str) -> Result<NaiveDateTime, Raise> {
        match self.value(param) {
            Some(Value::DateTime(dt)) => Ok(*dt),
            _ => Err(self.wrong(param, "DateTime")),
        }
    }

    pub fn constraint(&self, param: &str) -> Result<ConstraintSpec, Raise> {
        self.input(param).and_then(|i| self.ctx.constraint_spec(i)).ok_or_else(|| self.wrong(param, "Constraint"))
    }

    pub fn set_message(&mut self, message: String) {
        self.ctx.messages.insert(self.node, message);
    }

    pub fn add_value(&mut self, value: Value) -> NodeId {
        self.ctx.add_value(value)
    }

    pub fn add_struct(&mut self, func: &str, inputs: IndexMap<String, NodeId>) -> NodeId {
        self.ctx.add_struct(func, inputs)
    }

    /// Evaluates another node (used by `revise`).
    pub fn evaluate(&mut self, id: NodeId) -> Result<NodeId, Raise> {
        self.engine.eval_node(self.ctx, id)
    }

    pub fn exception(&self, kind: ExceptionKind, param: Option<&str>, expected_type: &str, prompt: String) -> Raise {
        Raise::Exception(ExceptionRecord {
            kind,
            node: self.node,
            param: param.map(str::to_string),
            prompt,
            expected_type: expected_type.to_string(),
            candidates: Vec::new(),
        })
    }
}
