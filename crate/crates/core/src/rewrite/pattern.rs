//! Pattern language for rewrite rules: parsing, matching and template
//! instantiation.

use std::collections::HashMap;
use std::fmt;

use crate::expr::{lex_with, Cursor, ExprError, Literal, SurfaceExpr, TokenKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    /// `_`
    Wild,
    /// `?x` or `?x:T`
    Capture {
        name: String,
        ty: Option<String>,
    },
    Literal(Literal),
    Call {
        func: String,
        args: Vec<PatArg>,
    },
    Constraint {
        type_name: String,
        type_param: Option<String>,
        args: Vec<PatArg>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatArg {
    Pos(Pattern),
    Named(String, Pattern),
    /// `...?rest`
    Rest(String),
    /// `!key`
    Absent(String),
}

impl Pattern {
    /// Capture names in first-occurrence order, including rest captures.
    pub fn captures(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_captures(&mut out);
        out
    }

    fn collect_captures(&self, out: &mut Vec<String>) {
        let push = |out: &mut Vec<String>, n: &String| {
            if !out.contains(n) {
                out.push(n.clone());
            }
        };
        match self {
            Pattern::Capture { name, .. } => push(out, name),
            Pattern::Call { args, .. } | Pattern::Constraint { args, .. } => {
                for a in args {
                    match a {
                        PatArg::Pos(p) | PatArg::Named(_, p) => p.collect_captures(out),
                        PatArg::Rest(n) => push(out, n),
                        PatArg::Absent(_) => {}
                    }
                }
            }
            Pattern::Wild | Pattern::Literal(_) => {}
        }
    }

    /// True if the pattern uses syntax that only makes sense on a left-hand
    /// side (`_`, `!key`, typed captures).
    pub fn has_match_only_syntax(&self) -> bool {
        match self {
            Pattern::Wild => true,
            Pattern::Capture { ty, .. } => ty.is_some(),
            Pattern::Literal(_) => false,
            Pattern::Call { args, .. } | Pattern::Constraint { args, .. } => args.iter().any(|a| match a {
                PatArg::Pos(p) | PatArg::Named(_, p) => p.has_match_only_syntax(),
                PatArg::Rest(_) => false,
                PatArg::Absent(_) => true,
            }),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let write_args = |f: &mut fmt::Formatter<'_>, args: &[PatArg]| -> fmt::Result {
            f.write_str("(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                match a {
                    PatArg::Pos(p) => write!(f, "{p}")?,
                    PatArg::Named(k, p) => write!(f, "{k}={p}")?,
                    PatArg::Rest(n) => write!(f, "...?{n}")?,
                    PatArg::Absent(k) => write!(f, "!{k}")?,
                }
            }
            f.write_str(")")
        };
        match self {
            Pattern::Wild => f.write_str("_"),
            Pattern::Capture { name, ty: None } => write!(f, "?{name}"),
            Pattern::Capture { name, ty: Some(t) } => write!(f, "?{name}:{t}"),
            Pattern::Literal(l) => f.write_str(&l.text),
            Pattern::Call { func, args } => {
                f.write_str(func)?;
                write_args(f, args)
            }
            Pattern::Constraint { type_name, type_param, args } => {
                match type_param {
                    Some(p) => write!(f, "{type_name}[{p}]")?,
                    None => write!(f, "{type_name}?")?,
                }
                write_args(f, args)
            }
        }
    }
}

pub fn parse_pattern(text: &str) -> Result<Pattern, ExprError> {
    let tokens = lex_with(text, true)?;
    let mut cur = Cursor::new(tokens, text.len());
    let p = pattern(&mut cur)?;
    cur.expect_end()?;
    Ok(p)
}

fn pattern(cur: &mut Cursor) -> Result<Pattern, ExprError> {
    if let Some(lit) = cur.literal() {
        return Ok(Pattern::Literal(lit));
    }
    if cur.eat_punct('?') {
        let name = cur.expect_ident()?;
        let ty = if cur.eat_punct(':') { Some(type_name(cur)?) } else { None };
        return Ok(Pattern::Capture { name, ty });
    }
    if matches!(cur.peek(), Some(TokenKind::Ident(s)) if s == "_") {
        cur.bump();
        return Ok(Pattern::Wild);
    }
    if cur.eat_punct(':') {
        let name = cur.expect_ident()?;
        return Ok(Pattern::Call { func: format!(":{name}"), args: args(cur)? });
    }
    let name = cur.expect_ident()?;
    if cur.eat_punct('[') {
        let param = cur.expect_ident()?;
        cur.expect_punct(']')?;
        cur.eat_punct('?');
        return Ok(Pattern::Constraint { type_name: name, type_param: Some(param), args: args(cur)? });
    }
    if cur.eat_punct('?') {
        return Ok(Pattern::Constraint { type_name: name, type_param: None, args: args(cur)? });
    }
    Ok(Pattern::Call { func: name, args: args(cur)? })
}

fn type_name(cur: &mut Cursor) -> Result<String, ExprError> {
    let name = cur.expect_ident()?;
    if cur.eat_punct('[') {
        let inner = type_name(cur)?;
        cur.expect_punct(']')?;
        return Ok(format!("{name}[{inner}]"));
    }
    Ok(name)
}

fn args(cur: &mut Cursor) -> Result<Vec<PatArg>, ExprError> {
    cur.expect_punct('(')?;
    let mut out = Vec::new();
    if cur.eat_punct(')') {
        return Ok(out);
    }
    loop {
        if cur.eat_punct('.') {
            cur.expect_punct('.')?;
            cur.expect_punct('.')?;
            cur.expect_punct('?')?;
            out.push(PatArg::Rest(cur.expect_ident()?));
        } else if cur.eat_punct('!') {
            out.push(PatArg::Absent(cur.expect_ident()?));
        } else if matches!(cur.peek(), Some(TokenKind::Ident(_)))
            && matches!(cur.peek_at(1), Some(TokenKind::Punct('=')))
        {
            let key = cur.expect_ident()?;
            cur.expect_punct('=')?;
            out.push(PatArg::Named(key, pattern(cur)?));
        } else {
            out.push(PatArg::Pos(pattern(cur)?));
        }
        if cur.eat_punct(')') {
            return Ok(out);
        }
        cur.expect_punct(',')?;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bound {
    One(SurfaceExpr),
    Rest { positional: Vec<SurfaceExpr>, named: Vec<(String, SurfaceExpr)> },
}

pub type Bindings = HashMap<String, Bound>;

/// Matching context: the top-level `let` bindings in scope (looked through
/// when a structural pattern meets a variable) and a static type oracle for
/// typed captures.
pub struct Matcher<'a> {
    pub env: &'a [(String, SurfaceExpr)],
    pub types: &'a dyn Fn(&SurfaceExpr) -> String,
}

impl Matcher<'_> {
    fn lookup(&self, name: &str) -> Option<&SurfaceExpr> {
        self.env.iter().rev().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    /// Follows variables to their bound expression.
    fn deref<'b>(&'b self, mut e: &'b SurfaceExpr) -> &'b SurfaceExpr {
        while let SurfaceExpr::VarRef(v) = e {
            match self.lookup(v) {
                Some(bound) => e = bound,
                None => break,
            }
        }
        e
    }

    /// Expression with every in-scope variable replaced by its definition.
    fn inline_all(&self, e: &SurfaceExpr) -> SurfaceExpr {
        let mut out = e.clone();
        for (name, value) in self.env.iter().rev() {
            if out.count_refs(name) > 0 {
                out = out.substitute(name, value);
            }
        }
        out
    }

    fn same(&self, a: &SurfaceExpr, b: &SurfaceExpr) -> bool {
        a == b || self.inline_all(a) == self.inline_all(b)
    }

    pub fn matches(&self, pat: &Pattern, expr: &SurfaceExpr) -> Option<Bindings> {
        let mut b = Bindings::new();
        self.go(pat, expr, &mut b).then_some(b)
    }

    fn go(&self, pat: &Pattern, expr: &SurfaceExpr, b: &mut Bindings) -> bool {
        match pat {
            Pattern::Wild => true,
            Pattern::Capture { name, ty } => {
                if let Some(t) = ty {
                    if (self.types)(self.deref(expr)) != *t {
                        return false;
                    }
                }
                match b.get(name) {
                    Some(Bound::One(existing)) => self.same(existing, expr),
                    Some(Bound::Rest { .. }) => false,
                    None => {
                        b.insert(name.clone(), Bound::One(expr.clone()));
                        true
                    }
                }
            }
            Pattern::Literal(l) => matches!(self.deref(expr), SurfaceExpr::Literal(e) if e == l),
            Pattern::Call { func, args } => match self.deref(expr) {
                SurfaceExpr::Call { func: f, positional, named } if f == func => {
                    self.match_args(args, positional, named, b)
                }
                _ => false,
            },
            Pattern::Constraint { type_name, type_param, args } => match self.deref(expr) {
                SurfaceExpr::Constraint { type_name: t, type_param: p, named } if t == type_name && p == type_param => {
                    self.match_args(args, &[], named, b)
                }
                _ => false,
            },
        }
    }

    fn match_args(
        &self,
        args: &[PatArg],
        positional: &[SurfaceExpr],
        named: &[(String, SurfaceExpr)],
        b: &mut Bindings,
    ) -> bool {
        let pos_pats: Vec<&Pattern> =
            args.iter().filter_map(|a| if let PatArg::Pos(p) = a { Some(p) } else { None }).collect();
        let rest = args.iter().find_map(|a| if let PatArg::Rest(n) = a { Some(n) } else { None });
        if positional.len() < pos_pats.len() || (rest.is_none() && positional.len() != pos_pats.len()) {
            return false;
        }
        for (p, e) in pos_pats.iter().zip(positional) {
            if !self.go(p, e, b) {
                return false;
            }
        }
        let mut used = Vec::new();
        for a in args {
            match a {
                PatArg::Named(k, p) => match named.iter().find(|(nk, _)| nk == k) {
                    Some((_, e)) if self.go(p, e, b) => used.push(k.as_str()),
                    _ => return false,
                },
                PatArg::Absent(k) if named.iter().any(|(nk, _)| nk == k) => return false,
                _ => {}
            }
        }
        let leftover: Vec<(String, SurfaceExpr)> =
            named.iter().filter(|(k, _)| !used.contains(&k.as_str())).cloned().collect();
        match rest {
            Some(name) => {
                let bound = Bound::Rest { positional: positional[pos_pats.len()..].to_vec(), named: leftover };
                match b.get(name) {
                    Some(existing) => *existing == bound,
                    None => {
                        b.insert(name.clone(), bound);
                        true
                    }
                }
            }
            None => leftover.is_empty(),
        }
    }
}

/// Builds the right-hand side of a rule from the captured bindings.
pub fn instantiate(template: &Pattern, b: &Bindings) -> Result<SurfaceExpr, String> {
    match template {
        Pattern::Wild => Err("'_' cannot appear in a template".into()),
        Pattern::Capture { name, .. } => match b.get(name) {
            Some(Bound::One(e)) => Ok(e.clone()),
            Some(Bound::Rest { .. }) => Err(format!("rest capture ?{name} used as a single argument")),
            None => Err(format!("unbound capture ?{name}")),
        },
        Pattern::Literal(l) => Ok(SurfaceExpr::Literal(l.clone())),
        Pattern::Call { func, args } => {
            let (positional, named) = instantiate_args(args, b)?;
            Ok(SurfaceExpr::Call { func: func.clone(), positional, named })
        }
        Pattern::Constraint { type_name, type_param, args } => {
            let (positional, named) = instantiate_args(args, b)?;
            if !positional.is_empty() {
                return Err("constraints take named fields only".into());
            }
            Ok(SurfaceExpr::Constraint { type_name: type_name.clone(), type_param: type_param.clone(), named })
        }
    }
}

type Args = (Vec<SurfaceExpr>, Vec<(String, SurfaceExpr)>);

fn instantiate_args(args: &[PatArg], b: &Bindings) -> Result<Args, String> {
    let mut positional = Vec::new();
    let mut named: Vec<(String, SurfaceExpr)> = Vec::new();
    for a in args {
        match a {
            PatArg::Pos(p) => positional.push(instantiate(p, b)?),
            PatArg::Named(k, p) => named.push((k.clone(), instantiate(p, b)?)),
            PatArg::Rest(n) => match b.get(n) {
                Some(Bound::Rest { positional: p, named: nm }) => {
                    positional.extend(p.iter().cloned());
                    named.extend(nm.iter().cloned());
                }
                Some(Bound::One(_)) => return Err(format!("?{n} is not a rest capture")),
                None => return Err(format!("unbound capture ?{n}")),
            },
            PatArg::Absent(k) => return Err(format!("'!{k}' cannot appear in a template")),
        }
    }
    let mut seen = Vec::new();
    for (k, _) in &named {
        if seen.contains(k) {
            return Err(format!("argument '{k}' produced twice"));
        }
        seen.push(k.clone());
    }
    Ok((positional, named))
}
