use super::{ParseError, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(super) enum Tok {
    Ident(String),
    Int(i64),
    Sym(char),
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
pub(super) struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '$'
}

fn ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

pub(super) fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let span = Span { line, col };
        if c == '\n' {
            chars.next();
            out.push(Token {
                tok: Tok::Newline,
                span,
            });
            line += 1;
            col = 1;
        } else if c.is_whitespace() {
            chars.next();
            col += 1;
        } else if c == '#' {
            while let Some(&c) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                col += 1;
            }
        } else if ident_start(c) {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if !ident_char(c) {
                    break;
                }
                s.push(c);
                chars.next();
                col += 1;
            }
            out.push(Token {
                tok: Tok::Ident(s),
                span,
            });
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if !c.is_ascii_digit() {
                    break;
                }
                s.push(c);
                chars.next();
                col += 1;
            }
            let n = s.parse().map_err(|_| ParseError::Syntax {
                span,
                msg: format!("integer literal `{s}` out of range"),
            })?;
            out.push(Token { tok: Tok::Int(n), span });
        } else if "{}()[],&.@:;/-=".contains(c) {
            chars.next();
            col += 1;
            out.push(Token { tok: Tok::Sym(c), span });
        } else {
            return Err(ParseError::Syntax {
                span,
                msg: format!("unexpected character `{c}`"),
            });
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(out)
}
