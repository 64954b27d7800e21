use super::lexer::{lex, Token, TokenKind};
use super::{ExprError, LitKind, Literal, SurfaceExpr};

const RESERVED: &[&str] = &["true", "false", "let"];

/// Token cursor shared by the expression parsers and the rewrite pattern parser.
pub(crate) struct Cursor {
    tokens: Vec<Token>,
    idx: usize,
    end: usize,
}

impl Cursor {
    pub(crate) fn new(tokens: Vec<Token>, text_len: usize) -> Self {
        Cursor { tokens, idx: 0, end: text_len }
    }

    pub(crate) fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.idx).map(|t| &t.kind)
    }

    pub(crate) fn peek_at(&self, offset: usize) -> Option<&TokenKind> {
        self.tokens.get(self.idx + offset).map(|t| &t.kind)
    }

    pub(crate) fn pos(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.end, |t| t.pos)
    }

    pub(crate) fn bump(&mut self) -> Option<TokenKind> {
        let t = self.tokens.get(self.idx).map(|t| t.kind.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    pub(crate) fn at_end(&self) -> bool {
        self.idx >= self.tokens.len()
    }

    pub(crate) fn is_punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(TokenKind::Punct(p)) if *p == c)
    }

    pub(crate) fn eat_punct(&mut self, c: char) -> bool {
        if self.is_punct(c) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn err(&self, expected: &str) -> ExprError {
        ExprError::Syntax { position: self.pos(), expected: expected.to_string() }
    }

    pub(crate) fn expect_punct(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat_punct(c) {
            Ok(())
        } else {
            Err(self.err(&format!("'{c}'")))
        }
    }

    pub(crate) fn expect_ident(&mut self) -> Result<String, ExprError> {
        match self.peek() {
            Some(TokenKind::Ident(s)) if !RESERVED.contains(&s.as_str()) => {
                let s = s.clone();
                self.idx += 1;
                Ok(s)
            }
            _ => Err(self.err("identifier")),
        }
    }

    pub(crate) fn expect_end(&self) -> Result<(), ExprError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("end of input"))
        }
    }

    /// Literal at the cursor, if any (numbers, strings, `true`/`false`).
    pub(crate) fn literal(&mut self) -> Option<Literal> {
        let lit = match self.peek()? {
            TokenKind::Int(s) => Literal { kind: LitKind::Int, text: s.clone() },
            TokenKind::Float(s) => Literal { kind: LitKind::Float, text: s.clone() },
            TokenKind::Str(s) => Literal { kind: LitKind::Str, text: s.clone() },
            TokenKind::Ident(s) if s == "true" || s == "false" => Literal { kind: LitKind::Bool, text: s.clone() },
            _ => return None,
        };
        self.idx += 1;
        Some(lit)
    }
}

fn push_unique(
    named: &mut Vec<(String, SurfaceExpr)>,
    key: String,
    value: SurfaceExpr,
    pos: usize,
) -> Result<(), ExprError> {
    if named.iter().any(|(k, _)| *k == key) {
        return Err(ExprError::Syntax { position: pos, expected: format!("unique argument name, '{key}' repeated") });
    }
    named.push((key, value));
    Ok(())
}

/// Parses call syntax, e.g. `Add(2,Add(3,5))` or `x0=tomorrow(); starts_at(x0)`.
pub fn parse_call(text: &str) -> Result<SurfaceExpr, ExprError> {
    let mut cur = Cursor::new(lex(text)?, text.len());
    if cur.at_end() {
        return Err(cur.err("expression"));
    }
    let mut bindings: Vec<(String, SurfaceExpr)> = Vec::new();
    while matches!(cur.peek(), Some(TokenKind::Ident(_))) && matches!(cur.peek_at(1), Some(TokenKind::Punct('='))) {
        let pos = cur.pos();
        let name = cur.expect_ident()?;
        cur.expect_punct('=')?;
        let value = call_expr(&mut cur)?;
        cur.expect_punct(';')?;
        if bindings.iter().any(|(n, _)| *n == name) {
            return Err(ExprError::Syntax {
                position: pos,
                expected: format!("unique binding name, '{name}' is bound twice"),
            });
        }
        bindings.push((name, value));
    }
    let body = call_expr(&mut cur)?;
    cur.expect_end()?;
    let expr = if bindings.is_empty() { body } else { SurfaceExpr::AssignSeq { bindings, body: Box::new(body) } };
    expr.check_scopes()?;
    Ok(expr)
}

fn call_expr(cur: &mut Cursor) -> Result<SurfaceExpr, ExprError> {
    if let Some(lit) = cur.literal() {
        return Ok(SurfaceExpr::Literal(lit));
    }
    if cur.eat_punct(':') {
        let name = cur.expect_ident()?;
        return call_args(cur, format!(":{name}"));
    }
    let name = cur.expect_ident()?;
    if cur.eat_punct('[') {
        let param = cur.expect_ident()?;
        cur.expect_punct(']')?;
        cur.eat_punct('?');
        return constraint_args(cur, name, Some(param));
    }
    if cur.eat_punct('?') {
        return constraint_args(cur, name, None);
    }
    if cur.is_punct('(') {
        return call_args(cur, name);
    }
    Ok(SurfaceExpr::VarRef(name))
}

fn is_named_arg(cur: &Cursor) -> bool {
    matches!(cur.peek(), Some(TokenKind::Ident(_))) && matches!(cur.peek_at(1), Some(TokenKind::Punct('=')))
}

fn call_args(cur: &mut Cursor, func: String) -> Result<SurfaceExpr, ExprError> {
    cur.expect_punct('(')?;
    let mut positional = Vec::new();
    let mut named = Vec::new();
    if !cur.eat_punct(')') {
        loop {
            let pos = cur.pos();
            if is_named_arg(cur) {
                let key = cur.expect_ident()?;
                cur.expect_punct('=')?;
                let value = call_expr(cur)?;
                push_unique(&mut named, key, value, pos)?;
            } else {
                if !named.is_empty() {
                    return Err(cur.err("named argument (positional arguments must come first)"));
                }
                positional.push(call_expr(cur)?);
            }
            if cur.eat_punct(')') {
                break;
            }
            cur.expect_punct(',')?;
        }
    }
    Ok(SurfaceExpr::Call { func, positional, named })
}

fn constraint_args(cur: &mut Cursor, type_name: String, type_param: Option<String>) -> Result<SurfaceExpr, ExprError> {
    cur.expect_punct('(')?;
    let mut named = Vec::new();
    if !cur.eat_punct(')') {
        if !is_named_arg(cur) {
            // `Int?(3)` is shorthand for `Int?(value=3)`.
            let value = call_expr(cur)?;
            cur.expect_punct(')').map_err(|_| cur.err("')' (a constraint takes one positional value at most)"))?;
            named.push(("value".to_string(), value));
        } else {
            loop {
                let pos = cur.pos();
                if !is_named_arg(cur) {
                    return Err(cur.err("named constraint field"));
                }
                let key = cur.expect_ident()?;
                cur.expect_punct('=')?;
                let value = call_expr(cur)?;
                push_unique(&mut named, key, value, pos)?;
                if cur.eat_punct(')') {
                    break;
                }
                cur.expect_punct(',')?;
            }
        }
    }
    Ok(SurfaceExpr::Constraint { type_name, type_param, named })
}

fn check_balance(tokens: &[Token]) -> Result<(), ExprError> {
    let mut open: Vec<usize> = Vec::new();
    for t in tokens {
        match t.kind {
            TokenKind::Punct('(') => open.push(t.pos),
            TokenKind::Punct(')') if open.pop().is_none() => {
                return Err(ExprError::UnbalancedParens { position: t.pos });
            }
            _ => {}
        }
    }
    match open.last() {
        Some(&position) => Err(ExprError::UnbalancedParens { position }),
        None => Ok(()),
    }
}

/// Parses prefix syntax, e.g. `(Yield :output (Add 2 3))`.
pub fn parse_prefix(text: &str) -> Result<SurfaceExpr, ExprError> {
    let tokens = lex(text)?;
    check_balance(&tokens)?;
    let mut cur = Cursor::new(tokens, text.len());
    if cur.at_end() {
        return Err(cur.err("expression"));
    }
    let expr = if cur.is_punct('(') && matches!(cur.peek_at(1), Some(TokenKind::Ident(s)) if s == "let") {
        prefix_let(&mut cur)?
    } else {
        prefix_expr(&mut cur)?
    };
    cur.expect_end()?;
    expr.check_scopes()?;
    Ok(expr)
}

fn prefix_let(cur: &mut Cursor) -> Result<SurfaceExpr, ExprError> {
    cur.expect_punct('(')?;
    cur.bump();
    cur.expect_punct('(')?;
    let mut bindings: Vec<(String, SurfaceExpr)> = Vec::new();
    while !cur.eat_punct(')') {
        let pos = cur.pos();
        let name = cur.expect_ident()?;
        let value = prefix_expr(cur)?;
        if bindings.iter().any(|(n, _)| *n == name) {
            return Err(ExprError::Syntax {
                position: pos,
                expected: format!("unique binding name, '{name}' is bound twice"),
            });
        }
        bindings.push((name, value));
    }
    if bindings.is_empty() {
        return Err(cur.err("at least one binding"));
    }
    let body = prefix_expr(cur)?;
    cur.expect_punct(')')?;
    Ok(SurfaceExpr::AssignSeq { bindings, body: Box::new(body) })
}

fn prefix_expr(cur: &mut Cursor) -> Result<SurfaceExpr, ExprError> {
    if let Some(lit) = cur.literal() {
        return Ok(SurfaceExpr::Literal(lit));
    }
    if !cur.eat_punct('(') {
        if matches!(cur.peek(), Some(TokenKind::Ident(s)) if s == "let") {
            return Err(cur.err("expression (let is only allowed at the top level)"));
        }
        return Ok(SurfaceExpr::VarRef(cur.expect_ident()?));
    }
    if matches!(cur.peek(), Some(TokenKind::Ident(s)) if s == "let") {
        return Err(cur.err("function name (let is only allowed at the top level)"));
    }
    let accessor = cur.eat_punct(':');
    let name = cur.expect_ident()?;
    if accessor {
        let (positional, named) = prefix_args(cur)?;
        return Ok(SurfaceExpr::Call { func: format!(":{name}"), positional, named });
    }
    let mut type_param = None;
    let mut is_constraint = false;
    if cur.eat_punct('[') {
        type_param = Some(cur.expect_ident()?);
        cur.expect_punct(']')?;
        is_constraint = true;
    }
    if cur.eat_punct('?') {
        is_constraint = true;
    }
    let (positional, named) = prefix_args(cur)?;
    if is_constraint {
        let named = match (positional.len(), named.is_empty()) {
            (0, _) => named,
            (1, true) => vec![("value".to_string(), positional.into_iter().next().unwrap())],
            _ => return Err(cur.err("named constraint fields")),
        };
        Ok(SurfaceExpr::Constraint { type_name: name, type_param, named })
    } else {
        Ok(SurfaceExpr::Call { func: name, positional, named })
    }
}

type Args = (Vec<SurfaceExpr>, Vec<(String, SurfaceExpr)>);

fn prefix_args(cur: &mut Cursor) -> Result<Args, ExprError> {
    let mut positional = Vec::new();
    let mut named = Vec::new();
    loop {
        if cur.eat_punct(')') {
            return Ok((positional, named));
        }
        let pos = cur.pos();
        if cur.is_punct(':') && matches!(cur.peek_at(1), Some(TokenKind::Ident(_))) {
            cur.bump();
            let key = cur.expect_ident()?;
            let value = prefix_expr(cur)?;
            push_unique(&mut named, key, value, pos)?;
        } else {
            if !named.is_empty() {
                return Err(cur.err("named argument (positional arguments must come first)"));
            }
            if cur.at_end() {
                return Err(cur.err("')'"));
            }
            positional.push(prefix_expr(cur)?);
        }
    }
}
