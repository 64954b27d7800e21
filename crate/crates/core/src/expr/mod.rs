//! Annotation expressions in two surface syntaxes.
//!
//! The *call* syntax is the compact form used for simplified annotations:
//!
//! ```text
//! program    := (binding ';')* expr
//! binding    := ident '=' expr
//! expr       := call | constraint | literal | varref
//! call       := [':'] ident '(' args ')'
//! constraint := ident '?' '(' cargs ')' | ident '[' ident ']' ['?'] '(' cargs ')'
//! args       := positional args, then named args (`ident '=' expr`)
//! ```
//!
//! The *prefix* syntax is the parenthesized notation of original-style
//! annotations: `(Func arg ... :key val ...)`, `(let (x0 e0 x1 e1) body)` and
//! `(Constraint[Event] :key val)`.
//!
//! Both parse to the same [`SurfaceExpr`], and both printers are canonical:
//! parsing a printed expression yields a structurally equal tree.

mod lexer;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use lexer::lex_with;
pub use lexer::{escape, lex, unescape, Token, TokenKind};
pub(crate) use parse::Cursor;
pub use parse::{parse_call, parse_prefix};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("unbalanced parentheses at {position}")]
    UnbalancedParens { position: usize },
    #[error("unbound variable '{name}'")]
    UnboundVariable { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Syntax {
    Call,
    Prefix,
}

impl std::str::FromStr for Syntax {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "call" => Ok(Syntax::Call),
            "prefix" => Ok(Syntax::Prefix),
            other => Err(format!("unknown syntax '{other}' (expected call or prefix)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LitKind {
    Int,
    Float,
    Str,
    Bool,
}

impl LitKind {
    pub fn type_name(self) -> &'static str {
        match self {
            LitKind::Int => "Int",
            LitKind::Float => "Float",
            LitKind::Str => "Str",
            LitKind::Bool => "Bool",
        }
    }
}

/// A literal keeps its exact source lexeme (string literals include quotes).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub kind: LitKind,
    pub text: String,
}

impl Literal {
    pub fn int(v: i64) -> Self {
        Literal { kind: LitKind::Int, text: v.to_string() }
    }

    pub fn str(v: &str) -> Self {
        Literal { kind: LitKind::Str, text: escape(v) }
    }

    pub fn bool(v: bool) -> Self {
        Literal { kind: LitKind::Bool, text: v.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SurfaceExpr {
    Call {
        func: String,
        positional: Vec<SurfaceExpr>,
        named: Vec<(String, SurfaceExpr)>,
    },
    Literal(Literal),
    VarRef(String),
    AssignSeq {
        bindings: Vec<(String, SurfaceExpr)>,
        body: Box<SurfaceExpr>,
    },
    /// Field constraint `T?(k=v)` or `Constraint[T](k=v)`; named fields only.
    Constraint {
        type_name: String,
        type_param: Option<String>,
        named: Vec<(String, SurfaceExpr)>,
    },
}

impl SurfaceExpr {
    pub fn call(func: &str, positional: Vec<SurfaceExpr>) -> Self {
        SurfaceExpr::Call { func: func.to_string(), positional, named: Vec::new() }
    }

    pub fn call_named(func: &str, named: Vec<(&str, SurfaceExpr)>) -> Self {
        SurfaceExpr::Call {
            func: func.to_string(),
            positional: Vec::new(),
            named: named.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn int(v: i64) -> Self {
        SurfaceExpr::Literal(Literal::int(v))
    }

    pub fn str(v: &str) -> Self {
        SurfaceExpr::Literal(Literal::str(v))
    }

    pub fn var(name: &str) -> Self {
        SurfaceExpr::VarRef(name.to_string())
    }

    pub fn constraint(type_name: &str, named: Vec<(&str, SurfaceExpr)>) -> Self {
        SurfaceExpr::Constraint {
            type_name: type_name.to_string(),
            type_param: None,
            named: named.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn head(&self) -> Option<&str> {
        match self {
            SurfaceExpr::Call { func, .. } => Some(func),
            _ => None,
        }
    }

    /// Number of tree nodes (bindings count once each, plus their subtrees).
    pub fn size(&self) -> usize {
        match self {
            SurfaceExpr::Call { positional, named, .. } => {
                1 + positional.iter().map(Self::size).sum::<usize>()
                    + named.iter().map(|(_, v)| v.size()).sum::<usize>()
            }
            SurfaceExpr::Constraint { named, .. } => 1 + named.iter().map(|(_, v)| v.size()).sum::<usize>(),
            SurfaceExpr::AssignSeq { bindings, body } => {
                1 + bindings.iter().map(|(_, v)| v.size()).sum::<usize>() + body.size()
            }
            SurfaceExpr::Literal(_) | SurfaceExpr::VarRef(_) => 1,
        }
    }

    /// Counts references to `name` anywhere in this tree.
    pub fn count_refs(&self, name: &str) -> usize {
        match self {
            SurfaceExpr::VarRef(n) => usize::from(n == name),
            SurfaceExpr::Literal(_) => 0,
            SurfaceExpr::Call { positional, named, .. } => {
                positional.iter().map(|e| e.count_refs(name)).sum::<usize>()
                    + named.iter().map(|(_, e)| e.count_refs(name)).sum::<usize>()
            }
            SurfaceExpr::Constraint { named, .. } => named.iter().map(|(_, e)| e.count_refs(name)).sum(),
            SurfaceExpr::AssignSeq { bindings, body } => {
                bindings.iter().map(|(_, e)| e.count_refs(name)).sum::<usize>() + body.count_refs(name)
            }
        }
    }

    /// Replaces every `VarRef(name)` with `replacement`.
    pub fn substitute(&self, name: &str, replacement: &SurfaceExpr) -> SurfaceExpr {
        match self {
            SurfaceExpr::VarRef(n) if n == name => replacement.clone(),
            SurfaceExpr::VarRef(_) | SurfaceExpr::Literal(_) => self.clone(),
            SurfaceExpr::Call { func, positional, named } => SurfaceExpr::Call {
                func: func.clone(),
                positional: positional.iter().map(|e| e.substitute(name, replacement)).collect(),
                named: named.iter().map(|(k, e)| (k.clone(), e.substitute(name, replacement))).collect(),
            },
            SurfaceExpr::Constraint { type_name, type_param, named } => SurfaceExpr::Constraint {
                type_name: type_name.clone(),
                type_param: type_param.clone(),
                named: named.iter().map(|(k, e)| (k.clone(), e.substitute(name, replacement))).collect(),
            },
            SurfaceExpr::AssignSeq { bindings, body } => SurfaceExpr::AssignSeq {
                bindings: bindings.iter().map(|(k, e)| (k.clone(), e.substitute(name, replacement))).collect(),
                body: Box::new(body.substitute(name, replacement)),
            },
        }
    }

    /// Checks the scoping invariants: unique binding names, sequential scope,
    /// assignments only at the top level.
    pub fn check_scopes(&self) -> Result<(), ExprError> {
        fn walk(e: &SurfaceExpr, scope: &[&str]) -> Result<(), ExprError> {
            match e {
                SurfaceExpr::VarRef(n) => {
                    if scope.contains(&n.as_str()) {
                        Ok(())
                    } else {
                        Err(ExprError::UnboundVariable { name: n.clone() })
                    }
                }
                SurfaceExpr::Literal(_) => Ok(()),
                SurfaceExpr::Call { positional, named, .. } => {
                    positional.iter().try_for_each(|p| walk(p, scope))?;
                    named.iter().try_for_each(|(_, v)| walk(v, scope))
                }
                SurfaceExpr::Constraint { named, .. } => named.iter().try_for_each(|(_, v)| walk(v, scope)),
                SurfaceExpr::AssignSeq { .. } => {
                    Err(ExprError::Syntax { position: 0, expected: "assignments only at the top level".into() })
                }
            }
        }
        match self {
            SurfaceExpr::AssignSeq { bindings, body } => {
                let mut scope: Vec<&str> = Vec::new();
                for (name, value) in bindings {
                    if scope.contains(&name.as_str()) {
                        return Err(ExprError::Syntax {
                            position: 0,
                            expected: format!("unique binding name, '{name}' is bound twice"),
                        });
                    }
                    walk(value, &scope)?;
                    scope.push(name);
                }
                walk(body, &scope)
            }
            other => walk(other, &[]),
        }
    }
}

fn is_value_sugar(named: &[(String, SurfaceExpr)]) -> bool {
    named.len() == 1 && named[0].0 == "value"
}

fn constraint_head(type_name: &str, type_param: &Option<String>) -> String {
    match type_param {
        Some(p) => format!("{type_name}[{p}]"),
        None => format!("{type_name}?"),
    }
}

/// Canonical call-syntax rendering.
pub fn print_call(expr: &SurfaceExpr) -> String {
    let mut out = String::new();
    write_call(expr, &mut out);
    out
}

fn write_call(expr: &SurfaceExpr, out: &mut String) {
    match expr {
        SurfaceExpr::Literal(l) => out.push_str(&l.text),
        SurfaceExpr::VarRef(n) => out.push_str(n),
        SurfaceExpr::Call { func, positional, named } => {
            out.push_str(func);
            out.push('(');
            let mut first = true;
            for p in positional {
                if !first {
                    out.push(',');
                }
                first = false;
                write_call(p, out);
            }
            for (k, v) in named {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(k);
                out.push('=');
                write_call(v, out);
            }
            out.push(')');
        }
        SurfaceExpr::Constraint { type_name, type_param, named } => {
            out.push_str(&constraint_head(type_name, type_param));
            out.push('(');
            if is_value_sugar(named) {
                write_call(&named[0].1, out);
            } else {
                for (i, (k, v)) in named.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(k);
                    out.push('=');
                    write_call(v, out);
                }
            }
            out.push(')');
        }
        SurfaceExpr::AssignSeq { bindings, body } => {
            for (name, value) in bindings {
                out.push_str(name);
                out.push('=');
                write_call(value, out);
                out.push_str("; ");
            }
            write_call(body, out);
        }
    }
}

/// Canonical prefix-syntax rendering.
pub fn print_prefix(expr: &SurfaceExpr) -> String {
    let mut out = String::new();
    write_prefix(expr, &mut out);
    out
}

fn write_prefix(expr: &SurfaceExpr, out: &mut String) {
    match expr {
        SurfaceExpr::Literal(l) => out.push_str(&l.text),
        SurfaceExpr::VarRef(n) => out.push_str(n),
        SurfaceExpr::Call { func, positional, named } => {
            out.push('(');
            out.push_str(func);
            for p in positional {
                out.push(' ');
                write_prefix(p, out);
            }
            for (k, v) in named {
                out.push_str(" :");
                out.push_str(k);
                out.push(' ');
                write_prefix(v, out);
            }
            out.push(')');
        }
        SurfaceExpr::Constraint { type_name, type_param, named } => {
            out.push('(');
            out.push_str(&constraint_head(type_name, type_param));
            if is_value_sugar(named) {
                out.push(' ');
                write_prefix(&named[0].1, out);
            } else {
                for (k, v) in named {
                    out.push_str(" :");
                    out.push_str(k);
                    out.push(' ');
                    write_prefix(v, out);
                }
            }
            out.push(')');
        }
        SurfaceExpr::AssignSeq { bindings, body } => {
            out.push_str("(let (");
            for (i, (name, value)) in bindings.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(name);
                out.push(' ');
                write_prefix(value, out);
            }
            out.push_str(") ");
            write_prefix(body, out);
            out.push(')');
        }
    }
}

impl fmt::Display for SurfaceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_call(self))
    }
}

/// Parses `text` in the given syntax.
pub fn parse(text: &str, syntax: Syntax) -> Result<SurfaceExpr, ExprError> {
    match syntax {
        Syntax::Call => parse_call(text),
        Syntax::Prefix => parse_prefix(text),
    }
}

/// Parses either syntax: text starting with `(` is prefix, anything else call.
pub fn parse_any(text: &str) -> Result<SurfaceExpr, ExprError> {
    if text.trim_start().starts_with('(') {
        parse_prefix(text)
    } else {
        parse_call(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits annotation text into length-metric tokens: every identifier,
/// literal and punctuation character is one token. The text must parse in
/// one of the two syntaxes.
pub fn tokenize_for_length(text: &str) -> Result<TokenSeq, ExprError> {
    parse_any(text)?;
    let tokens = lex(text)?.iter().map(Token::text).collect();
    Ok(TokenSeq { tokens })
}
