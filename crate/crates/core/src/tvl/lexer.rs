use std::fmt;

use super::ast::CmpOp;
use super::error::{ParseError, Position};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Word(String),
    /// `"..."`, used for area names and timestamps.
    DoubleQuoted(String),
    /// `'...'`, SQL string literal.
    SingleQuoted(String),
    Int(i64),
    Float(f64),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Op(CmpOp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::DoubleQuoted(s) => write!(f, "\"{s}\""),
            Tok::SingleQuoted(s) => write!(f, "'{s}'"),
            Tok::Int(v) => write!(f, "{v}"),
            Tok::Float(v) => write!(f, "{v:?}"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Op(op) => write!(f, "`{}`", op.symbol()),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub offset: usize,
}

pub(crate) fn position_of(src: &str, offset: usize) -> Position {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    Position { offset, line, column }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |offset: usize, expected: &str, found: String| ParseError::Syntax {
        position: position_of(src, offset),
        expected: vec![expected.to_string()],
        found,
    };

    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b',' => {
                out.push(Spanned { tok: Tok::Comma, offset: start });
                i += 1;
            }
            b'.' => {
                out.push(Spanned { tok: Tok::Dot, offset: start });
                i += 1;
            }
            b'(' => {
                out.push(Spanned { tok: Tok::LParen, offset: start });
                i += 1;
            }
            b')' => {
                out.push(Spanned { tok: Tok::RParen, offset: start });
                i += 1;
            }
            b'*' => {
                out.push(Spanned { tok: Tok::Star, offset: start });
                i += 1;
            }
            b'=' => {
                out.push(Spanned { tok: Tok::Op(CmpOp::Eq), offset: start });
                i += 1;
            }
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push(Spanned { tok: Tok::Op(CmpOp::Ne), offset: start });
                    i += 2;
                } else {
                    return Err(err(start, "`!=`", "`!`".into()));
                }
            }
            b'<' => {
                let (op, len) = match bytes.get(i + 1) {
                    Some(b'=') => (CmpOp::Le, 2),
                    Some(b'>') => (CmpOp::Ne, 2),
                    _ => (CmpOp::Lt, 1),
                };
                out.push(Spanned { tok: Tok::Op(op), offset: start });
                i += len;
            }
            b'>' => {
                let (op, len) = if bytes.get(i + 1) == Some(&b'=') { (CmpOp::Ge, 2) } else { (CmpOp::Gt, 1) };
                out.push(Spanned { tok: Tok::Op(op), offset: start });
                i += len;
            }
            b'"' => {
                let (text, next) = lex_double_quoted(src, i).ok_or_else(|| {
                    err(start, "closing `\"`", "end of input".into())
                })?;
                out.push(Spanned { tok: Tok::DoubleQuoted(text), offset: start });
                i = next;
            }
            b'\'' => {
                let (text, next) = lex_single_quoted(src, i).ok_or_else(|| {
                    err(start, "closing `'`", "end of input".into())
                })?;
                out.push(Spanned { tok: Tok::SingleQuoted(text), offset: start });
                i = next;
            }
            b'-' | b'0'..=b'9' => {
                let (tok, next) = lex_number(src, i).ok_or_else(|| {
                    err(start, "number", format!("`{}`", &src[start..(start + 1)]))
                })?;
                out.push(Spanned { tok, offset: start });
                i = next;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Spanned { tok: Tok::Word(src[start..i].to_string()), offset: start });
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(err(start, "token", format!("`{ch}`")));
            }
        }
    }
    out.push(Spanned { tok: Tok::Eof, offset: src.len() });
    Ok(out)
}

/// Backslash escapes `\"` and `\\`.
fn lex_double_quoted(src: &str, open: usize) -> Option<(String, usize)> {
    let mut text = String::new();
    let mut chars = src[open + 1..].char_indices();
    while let Some((idx, ch)) = chars.next() {
        match ch {
            '"' => return Some((text, open + 1 + idx + 1)),
            '\\' => {
                let (_, escaped) = chars.next()?;
                text.push(escaped);
            }
            other => text.push(other),
        }
    }
    None
}

/// SQL style: a doubled quote `''` stands for one quote.
fn lex_single_quoted(src: &str, open: usize) -> Option<(String, usize)> {
    let mut text = String::new();
    let rest = &src[open + 1..];
    let mut chars = rest.char_indices().peekable();
    while let Some((idx, ch)) = chars.next() {
        if ch == '\'' {
            if let Some(&(_, '\'')) = chars.peek() {
                chars.next();
                text.push('\'');
            } else {
                return Some((text, open + 1 + idx + 1));
            }
        } else {
            text.push(ch);
        }
    }
    None
}

fn lex_number(src: &str, start: usize) -> Option<(Tok, usize)> {
    let bytes = src.as_bytes();
    let mut i = start;
    if bytes[i] == b'-' {
        i += 1;
    }
    let digits_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i == digits_start {
        return None;
    }
    let mut is_float = false;
    if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
        is_float = true;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_start = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_start {
            is_float = true;
            i = j;
        }
    }
    // A number glued to letters (`12abc`) is not a literal.
    if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
        return None;
    }
    let text = &src[start..i];
    let tok = if is_float {
        let v: f64 = text.parse().ok()?;
        if !v.is_finite() {
            return None;
        }
        Tok::Float(v)
    } else {
        Tok::Int(text.parse().ok()?)
    };
    Some((tok, i))
}
