use super::ExprError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Int(String),
    Float(String),
    /// Raw lexeme including the surrounding quotes.
    Str(String),
    Punct(char),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: usize,
}

impl Token {
    pub fn text(&self) -> String {
        match &self.kind {
            TokenKind::Ident(s) | TokenKind::Int(s) | TokenKind::Float(s) | TokenKind::Str(s) => s.clone(),
            TokenKind::Punct(c) => c.to_string(),
        }
    }
}

pub(crate) const PUNCT: &[char] = &['(', ')', ',', '=', ';', '?', ':', '[', ']'];
/// Extra characters accepted only by the rewrite pattern language.
pub(crate) const PATTERN_PUNCT: &[char] = &['!', '.'];

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    lex_with(text, false)
}

pub(crate) fn lex_with(text: &str, pattern_mode: bool) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if PUNCT.contains(&c) || (pattern_mode && PATTERN_PUNCT.contains(&c)) {
            tokens.push(Token { kind: TokenKind::Punct(c), pos });
            i += 1;
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i].1) {
                i += 1;
            }
            let s: String = chars[start..i].iter().map(|(_, c)| c).collect();
            tokens.push(Token { kind: TokenKind::Ident(s), pos });
            continue;
        }
        if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|(_, d)| d.is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i + 1 < chars.len() && chars[i].1 == '.' && chars[i + 1].1.is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && is_ident_char(chars[i].1) {
                return Err(ExprError::Syntax { position: chars[i].0, expected: "delimiter after number".into() });
            }
            let s: String = chars[start..i].iter().map(|(_, c)| c).collect();
            let kind = if is_float { TokenKind::Float(s) } else { TokenKind::Int(s) };
            tokens.push(Token { kind, pos });
            continue;
        }
        if c == '"' {
            let start = i;
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(ExprError::Syntax { position: text.len(), expected: "closing '\"'".into() }),
                    Some((_, '"')) => {
                        i += 1;
                        break;
                    }
                    Some((p, '\\')) => match chars.get(i + 1) {
                        Some((_, '"' | '\\' | 'n' | 't')) => i += 2,
                        _ => {
                            return Err(ExprError::Syntax {
                                position: *p,
                                expected: "escape sequence (\\\" \\\\ \\n \\t)".into(),
                            })
                        }
                    },
                    Some(_) => i += 1,
                }
            }
            let s: String = chars[start..i].iter().map(|(_, c)| c).collect();
            tokens.push(Token { kind: TokenKind::Str(s), pos });
            continue;
        }
        return Err(ExprError::Syntax { position: pos, expected: format!("token, found '{c}'") });
    }
    Ok(tokens)
}

/// Decodes the raw lexeme of a string literal.
pub fn unescape(lexeme: &str) -> String {
    let inner = lexeme.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(lexeme);
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => {}
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Encodes a string value as a double-quoted literal lexeme.
pub fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_call() {
        let toks: Vec<String> = lex("Add(2,-3)").unwrap().iter().map(Token::text).collect();
        assert_eq!(toks, ["Add", "(", "2", ",", "-3", ")"]);
    }

    #[test]
    fn string_escapes_round_trip() {
        let raw = escape("a\"b\\c\nd");
        assert_eq!(unescape(&raw), "a\"b\\c\nd");
        let toks = lex(&raw).unwrap();
        assert_eq!(toks.len(), 1);
    }

    #[test]
    fn rejects_bad_escape_and_unterminated() {
        assert!(lex(r#""a\q""#).is_err());
        assert!(lex(r#""abc"#).is_err());
    }

    #[test]
    fn rejects_number_glued_to_ident() {
        assert!(lex("12ab").is_err());
    }
}
